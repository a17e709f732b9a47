#include "flowsynth/networks.hpp"

#include <cmath>

namespace flowsynth::nets {

void Mlp::build(std::string prefix, std::vector<int> widths, Activation act, double slope, double dropout, Rng* rng) {
  if (widths.size() < 2) throw Error(ErrorKind::InvalidArgument, "an MLP needs at least one layer");
  for (int w : widths) {
    if (w < 1) throw Error(ErrorKind::InvalidArgument, "MLP layer widths must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw Error(ErrorKind::InvalidArgument, "dropout ratio must lie in [0, 1)");
  if (slope < 0.0) throw Error(ErrorKind::InvalidArgument, "leaky slope must be >= 0");
  prefix_ = prefix;
  widths_ = std::move(widths);
  act_ = act;
  slope_ = slope;
  dropout_ = dropout;
  params_ = ad::ParamSet();
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
    const int in = widths_[i];
    const int out = widths_[i + 1];
    Tensor w = Tensor::Zero(in, out);
    Tensor b = Tensor::Zero(1, out);
    if (rng != nullptr) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index k = 0; k < w.size(); ++k) w.data()[k] = u(*rng);
      for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = u(*rng);
    }
    params_.add(prefix + ".fc" + std::to_string(i) + ".weight", std::move(w));
    params_.add(prefix + ".fc" + std::to_string(i) + ".bias", std::move(b));
  }
}

Mlp::Mlp(std::string prefix, std::vector<int> widths, Activation act, double leaky_slope, double dropout, Rng& rng) {
  build(std::move(prefix), std::move(widths), act, leaky_slope, dropout, &rng);
}

Mlp Mlp::zeros(std::string prefix, std::vector<int> widths, Activation act, double leaky_slope, double dropout) {
  Mlp m;
  m.build(std::move(prefix), std::move(widths), act, leaky_slope, dropout, nullptr);
  return m;
}

Mlp::Mlp(std::string prefix, std::vector<int> widths, Activation act, double leaky_slope, double dropout, ad::ParamSet params) {
  build(prefix, std::move(widths), act, leaky_slope, dropout, nullptr);
  if (params.size() != params_.size()) throw Error(ErrorKind::Format, "parameter count does not match network '" + prefix + "'");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& want = params_.entry(i);
    const auto& got = params.entry(i);
    if (want.name != got.name || want.value.rows() != got.value.rows() || want.value.cols() != got.value.cols()) {
      throw Error(ErrorKind::Format, "parameter '" + got.name + "' does not match network '" + prefix + "'");
    }
  }
  params_ = std::move(params);
}

Var Mlp::forward(ad::Graph&, std::span<const Var> p, Var x, Rng* dropout_rng) const {
  if (p.size() != params_.size()) throw Error(ErrorKind::InvalidArgument, "MLP: bound parameter count mismatch");
  if (x.cols() != in_width()) {
    throw Error(ErrorKind::ShapeMismatch, "MLP input width " + std::to_string(x.cols()) + " != " + std::to_string(in_width()));
  }
  Var h = x;
  const int n = layers();
  for (int i = 0; i < n; ++i) {
    h = ad::add_row(ad::matmul(h, p[2 * static_cast<std::size_t>(i)]), p[2 * static_cast<std::size_t>(i) + 1]);
    if (i + 1 < n) {
      h = act_ == Activation::Relu ? ad::relu(h) : ad::leaky_relu(h, slope_);
      if (dropout_rng != nullptr && dropout_ > 0.0) h = ad::dropout(h, dropout_, *dropout_rng);
    }
  }
  return h;
}

Tensor Mlp::forward(const Tensor& x) const {
  ad::Graph g;
  auto p = params_.bind(g, false);
  return forward(g, p, g.constant(x), nullptr).value();
}

std::vector<int> encoder_widths(const NetArch& a) {
  std::vector<int> w{a.data_dim};
  for (int i = 1; i < a.enc_layers; ++i) w.push_back(a.ae_hidden);
  w.push_back(a.latent_dim);
  return w;
}

std::vector<int> decoder_widths(const NetArch& a) {
  std::vector<int> w{a.latent_dim};
  for (int i = 1; i < a.dec_layers; ++i) w.push_back(a.ae_hidden);
  w.push_back(a.data_dim);
  return w;
}

std::vector<int> discriminator_widths(const NetArch& a) {
  std::vector<int> w{a.latent_dim};
  for (int i = 1; i < a.disc_layers; ++i) w.push_back(a.disc_hidden);
  w.push_back(1);
  return w;
}

Mlp make_encoder(const NetArch& a, Rng& rng) { return Mlp("encoder", encoder_widths(a), Activation::Relu, 0.0, 0.0, rng); }
Mlp make_decoder(const NetArch& a, Rng& rng) { return Mlp("decoder", decoder_widths(a), Activation::Relu, 0.0, 0.0, rng); }
Mlp make_discriminator(const NetArch& a, Rng& rng) {
  return Mlp("discriminator", discriminator_widths(a), Activation::LeakyRelu, a.leaky_slope, a.dropout, rng);
}

// ---------------------------------------------------------------------------

Var reconstruction_loss(Var x_hat, Var x, std::span<const prep::Slot> slots) {
  if (x_hat.rows() != x.rows() || x_hat.cols() != x.cols()) throw Error(ErrorKind::ShapeMismatch, "reconstruction: x_hat and x differ in shape");
  ad::Graph& g = *x.graph;
  Var per_row;
  for (const auto& s : slots) {
    Var pred = ad::slice_cols(x_hat, s.offset, s.width);
    Var target = ad::slice_cols(x, s.offset, s.width);
    Var term;
    if (s.kind == prep::Slot::Scalar) {
      term = ad::sum_cols(ad::square(ad::sub(pred, target)));
    } else {
      // log-softmax with the (constant) row max subtracted for stability
      Tensor mx = pred.value().rowwise().maxCoeff();
      Var shifted = ad::sub(pred, g.constant(mx.replicate(1, s.width)));
      Var lse = ad::log(ad::sum_cols(ad::exp(shifted)));
      Var log_sm = ad::sub(shifted, ad::broadcast_cols(lse, s.width));
      term = ad::scale(ad::sum_cols(ad::mul(target, log_sm)), -1.0);
    }
    per_row = per_row.valid() ? ad::add(per_row, term) : term;
  }
  if (!per_row.valid()) return g.constant(Tensor::Zero(1, 1));
  return ad::mean(per_row);
}

AeLoss loss_ae(ad::Graph& g, const Mlp& enc, std::span<const Var> enc_p, const Mlp& dec, std::span<const Var> dec_p, Var x, Var h_fake,
               std::span<const prep::Slot> slots) {
  if (x.rows() == 0 || h_fake.rows() == 0) throw Error(ErrorKind::InvalidArgument, "loss_ae: empty batch");
  AeLoss l;
  Var h = enc.forward(g, enc_p, x);
  Var x_hat = dec.forward(g, dec_p, h);
  l.reconstruct = reconstruction_loss(x_hat, x, slots);
  l.latent_l2 = ad::scale(ad::sum(ad::square(h)), 0.5 / static_cast<double>(x.rows()));
  Var h_cycle = enc.forward(g, enc_p, dec.forward(g, dec_p, h_fake));
  l.cycle = ad::scale(ad::sum(ad::square(ad::sub(h_fake, h_cycle))), 1.0 / static_cast<double>(h_fake.rows()));
  l.total = ad::add(ad::add(l.reconstruct, l.latent_l2), l.cycle);
  return l;
}

WganLoss loss_wgan_gp(ad::Graph& g, const Mlp& disc, std::span<const Var> disc_p, Var h_real, Var h_fake, double lambda, Rng& rng) {
  if (h_real.cols() != h_fake.cols()) throw Error(ErrorKind::ShapeMismatch, "loss_wgan_gp: real and fake widths differ");
  if (h_real.rows() != h_fake.rows()) throw Error(ErrorKind::ShapeMismatch, "loss_wgan_gp: real and fake batch sizes differ");
  WganLoss l;
  Var d_real = disc.forward(g, disc_p, h_real, &rng);
  Var d_fake = disc.forward(g, disc_p, h_fake, &rng);
  l.g_loss = ad::scale(ad::mean(d_fake), -1.0);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Tensor& real = h_real.value();
  const Tensor& fake = h_fake.value();
  Tensor u(real.rows(), 1);
  for (Eigen::Index i = 0; i < u.rows(); ++i) u(i, 0) = unif(rng);
  Tensor mix = real.array().colwise() * u.col(0).array() + fake.array().colwise() * (1.0 - u.col(0).array());
  Var h_hat = g.variable(std::move(mix));
  Var d_hat = disc.forward(g, disc_p, h_hat, &rng);
  const Var wrt[] = {h_hat};
  Var grad = g.grad_graph(ad::sum(d_hat), wrt)[0];
  l.gp_term = ad::mean(ad::square(ad::add_scalar(ad::row_norm(grad), -1.0)));
  l.d_loss = ad::add(ad::sub(ad::mean(d_fake), ad::mean(d_real)), ad::scale(l.gp_term, lambda));
  return l;
}

Var reg_density(ad::Graph& g, std::span<const Var> flow_p, const flow::OdeFunc& flow, Var h, double gamma, const flow::SolverConfig& solver,
                const flow::DensityOptions& probes) {
  if (gamma == 0.0) return g.constant(Tensor::Zero(1, 1));
  Var logp = flow::log_density(g, flow_p, flow, h, solver, probes);
  return ad::scale(ad::mean(logp), -gamma);
}

}  // namespace flowsynth::nets
