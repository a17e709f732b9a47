#pragma once

// Invertible generator: a gated neural-ODE vector field integrated over [0, 1].
//
//   f(z, t)  = f'(z, t) - z
//   f'(z, t) = F_K(tanh(... tanh(F_1(z, t)) ...))
//   F_i(u, t) = (1 - g_i) * A_i(u) + g_i * B_i(u)
//
// where A_i, B_i are affine maps and the gate g_i is either t itself or
// sigmoid(affine(z ++ t)). Generation integrates forward from t=0, inversion
// integrates backward from t=1, and the log-density of h integrates the
// Jacobian trace of f along the backward trajectory.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "flowsynth/autodiff.hpp"
#include "flowsynth/ode_solver.hpp"

namespace flowsynth::flow {

using ad::Tensor;
using ad::Var;

enum class GateKind { Time, Learned };
enum class ProbeKind { Rademacher, Gaussian, Exact };

const char* to_string(GateKind g);
GateKind gate_kind_from_string(const std::string& s);
const char* to_string(ProbeKind p);
ProbeKind probe_kind_from_string(const std::string& s);

struct FlowArch {
  int dim = 2;
  int layers = 3;           // K
  double width_mult = 1.0;  // M
  GateKind gate = GateKind::Time;

  int hidden() const;
  bool operator==(const FlowArch&) const = default;
};

class OdeFunc {
 public:
  OdeFunc() = default;
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  OdeFunc(const FlowArch& arch, Rng& rng);
  /// Every weight and bias zero, so f(z, t) = -z.
  static OdeFunc zeros(const FlowArch& arch);
  /// Rebuild from stored parameters (checkpoint load); validates shapes.
  OdeFunc(const FlowArch& arch, ad::ParamSet params);

  const FlowArch& arch() const { return arch_; }
  const ad::ParamSet& params() const { return params_; }
  ad::ParamSet& params() { return params_; }

  /// Records f(z, t) for a batch z (rows are records) using bound parameters.
  Var eval(ad::Graph& g, std::span<const Var> bound, Var z, double t) const;
  /// Eager evaluation.
  Tensor eval(const Tensor& z, double t) const;

  // Parameter index layout per layer, for tests that poke individual branches.
  std::size_t weight_a(int layer) const { return static_cast<std::size_t>(layer) * per_layer_; }
  std::size_t bias_a(int layer) const { return weight_a(layer) + 1; }
  std::size_t weight_b(int layer) const { return weight_a(layer) + 2; }
  std::size_t bias_b(int layer) const { return weight_a(layer) + 3; }

 private:
  void build(const FlowArch& arch, Rng* rng);

  FlowArch arch_;
  ad::ParamSet params_;
  std::size_t per_layer_ = 4;
};

/// Eager integration between arbitrary times.
Tensor integrate(const OdeFunc& f, const Tensor& z0, const SolverConfig& cfg, double t0 = 0.0, double t1 = 1.0, SolveStats* stats = nullptr);
/// Recorded integration (discretize-then-differentiate through every solver step).
Var integrate(ad::Graph& g, std::span<const Var> bound, const OdeFunc& f, Var z0, const SolverConfig& cfg, double t0 = 0.0,
              double t1 = 1.0, SolveStats* stats = nullptr);

inline Tensor generate(const OdeFunc& f, const Tensor& z, const SolverConfig& cfg) { return integrate(f, z, cfg, 0.0, 1.0); }
inline Tensor invert(const OdeFunc& f, const Tensor& h, const SolverConfig& cfg) { return integrate(f, h, cfg, 1.0, 0.0); }
inline Var generate(ad::Graph& g, std::span<const Var> bound, const OdeFunc& f, Var z, const SolverConfig& cfg) {
  return integrate(g, bound, f, z, cfg, 0.0, 1.0);
}

struct DensityOptions {
  ProbeKind probe = ProbeKind::Rademacher;
  int samples = 1;  // Hutchinson probes per record (ignored for Exact)
  std::uint64_t seed = 0;
};

/// Trace probes for a batch: one (rows x dim) matrix per probe plus its weight.
/// Row r of every probe is drawn from a stream derived from (seed, r), so a
/// record's probes do not depend on its batch-mates.
struct Probes {
  std::vector<Tensor> vectors;
  double weight = 1.0;
};
Probes make_probes(Eigen::Index rows, int dim, const DensityOptions& opts);

/// Per-row log N(z; 0, I).
Tensor standard_normal_logpdf(const Tensor& z);

struct DensityResult {
  Tensor log_density;  // rows x 1
  Tensor z0;           // latent reached by the backward pass
  Tensor trace_integral;  // rows x 1, estimate of -int_0^1 tr(df/dz) dt
};

/// log p(h) = log N(z(0)) - int_0^1 tr(df/dz) dt, integrated jointly with the
/// backward pass h -> z(0).
DensityResult log_density(const OdeFunc& f, const Tensor& h, const SolverConfig& cfg, const DensityOptions& opts,
                          SolveStats* stats = nullptr);
/// Recorded variant; differentiable with respect to the bound parameters.
Var log_density(ad::Graph& g, std::span<const Var> bound, const OdeFunc& f, Var h, const SolverConfig& cfg, const DensityOptions& opts,
                SolveStats* stats = nullptr);

/// Per-row estimate of tr(df/dz) at (z, t) from the given probes.
Tensor trace_estimate(const OdeFunc& f, const Tensor& z, double t, const DensityOptions& opts);

/// Exact Jacobian df/dz at one point (column-by-column VJPs), for oracles.
Tensor jacobian(const OdeFunc& f, const Tensor& z_row, double t);

}  // namespace flowsynth::flow
