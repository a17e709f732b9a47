#pragma once

#include <span>
#include <string>
#include <vector>

#include "flowsynth/autodiff.hpp"
#include "flowsynth/nodeflow.hpp"
#include "flowsynth/preprocess.hpp"

namespace flowsynth::nets {

using ad::Tensor;
using ad::Var;

enum class Activation { Relu, LeakyRelu };

/// Fully-connected stack: affine layers with an activation (and optional
/// dropout) between consecutive layers, none after the last.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, std::vector<int> widths, Activation act, double leaky_slope, double dropout, Rng& rng);
  /// Same layout, all parameters zero.
  static Mlp zeros(std::string prefix, std::vector<int> widths, Activation act, double leaky_slope, double dropout);
  /// Rebuild around stored parameters (checkpoint load); validates shapes.
  Mlp(std::string prefix, std::vector<int> widths, Activation act, double leaky_slope, double dropout, ad::ParamSet params);

  const std::vector<int>& widths() const { return widths_; }
  int in_width() const { return widths_.front(); }
  int out_width() const { return widths_.back(); }
  int layers() const { return static_cast<int>(widths_.size()) - 1; }
  double dropout() const { return dropout_; }
  double leaky_slope() const { return slope_; }
  Activation activation() const { return act_; }
  const std::string& prefix() const { return prefix_; }
  const ad::ParamSet& params() const { return params_; }
  ad::ParamSet& params() { return params_; }

  /// `dropout_rng` non-null means training mode (dropout masks drawn from it).
  Var forward(ad::Graph& g, std::span<const Var> bound, Var x, Rng* dropout_rng = nullptr) const;
  /// Eager, evaluation mode.
  Tensor forward(const Tensor& x) const;

 private:
  void build(std::string prefix, std::vector<int> widths, Activation act, double slope, double dropout, Rng* rng);

  std::string prefix_;
  std::vector<int> widths_;
  Activation act_ = Activation::Relu;
  double slope_ = 0.0;
  double dropout_ = 0.0;
  ad::ParamSet params_;
};

struct NetArch {
  int data_dim = 0;
  int latent_dim = 16;
  int enc_layers = 2;
  int dec_layers = 2;
  int disc_layers = 2;
  int ae_hidden = 128;
  int disc_hidden = 128;
  double dropout = 0.5;       // a
  double leaky_slope = 0.2;   // b
};

std::vector<int> encoder_widths(const NetArch& a);
std::vector<int> decoder_widths(const NetArch& a);
std::vector<int> discriminator_widths(const NetArch& a);

Mlp make_encoder(const NetArch& a, Rng& rng);
Mlp make_decoder(const NetArch& a, Rng& rng);
Mlp make_discriminator(const NetArch& a, Rng& rng);

struct LossReport {
  double l_reconstruct = 0.0;
  double l_ae_total = 0.0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double gp_term = 0.0;
  double r_density = 0.0;
  double gamma = 0.0;
};

/// Per-batch mean of: squared error on scalar slots plus softmax cross-entropy
/// on every one-hot group.
Var reconstruction_loss(Var x_hat, Var x, std::span<const prep::Slot> slots);

struct AeLoss {
  Var total;
  Var reconstruct;
  Var latent_l2;  // 0.5 * mean ||h_real||^2
  Var cycle;      // mean ||h_fake - E(R(h_fake))||^2
};

/// L_AE for a batch. `h_fake` should be a constant (generator output).
AeLoss loss_ae(ad::Graph& g, const Mlp& enc, std::span<const Var> enc_p, const Mlp& dec, std::span<const Var> dec_p, Var x, Var h_fake,
               std::span<const prep::Slot> slots);

struct WganLoss {
  Var d_loss;
  Var g_loss;
  Var gp_term;  // mean (||grad D(h_hat)|| - 1)^2, before the lambda weight
};

/// WGAN-GP critic and generator losses. Interpolation weights u ~ U(0,1) per
/// row and dropout masks are drawn from `rng`.
WganLoss loss_wgan_gp(ad::Graph& g, const Mlp& disc, std::span<const Var> disc_p, Var h_real, Var h_fake, double lambda, Rng& rng);

/// gamma * mean(-log p(h)) through the flow; h should be constant so only the
/// flow parameters receive gradients. gamma == 0 returns an exact constant 0.
Var reg_density(ad::Graph& g, std::span<const Var> flow_p, const flow::OdeFunc& flow, Var h, double gamma, const flow::SolverConfig& solver,
                const flow::DensityOptions& probes);

}  // namespace flowsynth::nets
