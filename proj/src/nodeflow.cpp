#include "flowsynth/nodeflow.hpp"

#include <cmath>
#include <numbers>

namespace flowsynth::flow {

const char* to_string(SolverMethod m) {
  switch (m) {
    case SolverMethod::Euler: return "euler";
    case SolverMethod::Rk4: return "rk4";
    case SolverMethod::Dopri5: return "dopri5";
  }
  return "?";
}

SolverMethod solver_method_from_string(const std::string& s) {
  if (s == "euler") return SolverMethod::Euler;
  if (s == "rk4") return SolverMethod::Rk4;
  if (s == "dopri5") return SolverMethod::Dopri5;
  throw Error(ErrorKind::Parse, "unknown solver method '" + s + "' (expected euler|rk4|dopri5)");
}

const char* to_string(GateKind g) { return g == GateKind::Time ? "time" : "learned"; }

GateKind gate_kind_from_string(const std::string& s) {
  if (s == "time") return GateKind::Time;
  if (s == "learned") return GateKind::Learned;
  throw Error(ErrorKind::Parse, "unknown gate kind '" + s + "' (expected time|learned)");
}

const char* to_string(ProbeKind p) {
  switch (p) {
    case ProbeKind::Rademacher: return "rademacher";
    case ProbeKind::Gaussian: return "gaussian";
    case ProbeKind::Exact: return "exact";
  }
  return "?";
}

ProbeKind probe_kind_from_string(const std::string& s) {
  if (s == "rademacher") return ProbeKind::Rademacher;
  if (s == "gaussian") return ProbeKind::Gaussian;
  if (s == "exact") return ProbeKind::Exact;
  throw Error(ErrorKind::Parse, "unknown probe kind '" + s + "' (expected rademacher|gaussian|exact)");
}

int FlowArch::hidden() const { return std::max(1, static_cast<int>(std::lround(width_mult * dim))); }

// ---------------------------------------------------------------------------

void OdeFunc::build(const FlowArch& arch, Rng* rng) {
  if (arch.dim < 1 || arch.layers < 1 || !(arch.width_mult > 0.0)) throw Error(ErrorKind::InvalidArgument, "invalid flow architecture");
  arch_ = arch;
  params_ = ad::ParamSet();
  per_layer_ = arch.gate == GateKind::Learned ? 6 : 4;
  const int hid = arch.hidden();
  auto init = [&](int rows, int cols, int fan_in) {
    if (rng == nullptr) return Tensor(Tensor::Zero(rows, cols));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor t(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(*rng);
    return t;
  };
  for (int i = 0; i < arch.layers; ++i) {
    const int in = i == 0 ? arch.dim : hid;
    const int out = i == arch.layers - 1 ? arch.dim : hid;
    const std::string p = "layer" + std::to_string(i);
    params_.add(p + ".a.weight", init(in, out, in));
    params_.add(p + ".a.bias", init(1, out, in));
    params_.add(p + ".b.weight", init(in, out, in));
    params_.add(p + ".b.bias", init(1, out, in));
    if (arch.gate == GateKind::Learned) {
      params_.add(p + ".gate.weight", init(arch.dim + 1, 1, arch.dim + 1));
      params_.add(p + ".gate.bias", init(1, 1, arch.dim + 1));
    }
  }
}

OdeFunc::OdeFunc(const FlowArch& arch, Rng& rng) { build(arch, &rng); }

OdeFunc OdeFunc::zeros(const FlowArch& arch) {
  OdeFunc f;
  f.build(arch, nullptr);
  return f;
}

OdeFunc::OdeFunc(const FlowArch& arch, ad::ParamSet params) {
  build(arch, nullptr);
  if (params.size() != params_.size()) throw Error(ErrorKind::Format, "flow parameter count does not match architecture");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& want = params_.entry(i);
    const auto& got = params.entry(i);
    if (want.name != got.name || want.value.rows() != got.value.rows() || want.value.cols() != got.value.cols()) {
      throw Error(ErrorKind::Format, "flow parameter '" + got.name + "' does not match architecture");
    }
  }
  params_ = std::move(params);
}

Var OdeFunc::eval(ad::Graph& g, std::span<const Var> p, Var z, double t) const {
  if (p.size() != params_.size()) throw Error(ErrorKind::InvalidArgument, "ode_func: bound parameter count mismatch");
  if (z.cols() != arch_.dim) throw Error(ErrorKind::ShapeMismatch, "ode_func: state width " + std::to_string(z.cols()) + " != dim " + std::to_string(arch_.dim));
  Var gate_in;
  if (arch_.gate == GateKind::Learned) gate_in = ad::concat_cols(z, g.constant(Tensor::Constant(z.rows(), 1, t)));
  Var u = z;
  for (int i = 0; i < arch_.layers; ++i) {
    const auto base = static_cast<std::size_t>(i) * per_layer_;
    Var a = ad::add_row(ad::matmul(u, p[base]), p[base + 1]);
    Var b = ad::add_row(ad::matmul(u, p[base + 2]), p[base + 3]);
    Var mixed;
    if (arch_.gate == GateKind::Time) {
      mixed = ad::add(ad::scale(a, 1.0 - t), ad::scale(b, t));
    } else {
      Var gate = ad::sigmoid(ad::add_row(ad::matmul(gate_in, p[base + 4]), p[base + 5]));
      Var keep = ad::add_scalar(ad::scale(gate, -1.0), 1.0);
      mixed = ad::add(ad::mul_col(a, keep), ad::mul_col(b, gate));
    }
    u = i + 1 < arch_.layers ? ad::tanh(mixed) : mixed;
  }
  return ad::sub(u, z);
}

Tensor OdeFunc::eval(const Tensor& z, double t) const {
  ad::Graph g;
  auto p = params_.bind(g, false);
  Tensor out = eval(g, p, g.constant(z), t).value();
  if (!out.allFinite()) throw Error(ErrorKind::NonFinite, "ode_func produced a non-finite value");
  return out;
}

// ---------------------------------------------------------------------------

Tensor integrate(const OdeFunc& f, const Tensor& z0, const SolverConfig& cfg, double t0, double t1, SolveStats* stats) {
  auto rhs = [&f](double t, const Tensor& y) -> Tensor { return f.eval(y, t); };
  return integrate_with<Tensor>(rhs, z0, t0, t1, cfg, stats);
}

Var integrate(ad::Graph& g, std::span<const Var> bound, const OdeFunc& f, Var z0, const SolverConfig& cfg, double t0, double t1,
              SolveStats* stats) {
  auto rhs = [&](double t, const Var& y) -> Var {
    Var out = f.eval(g, bound, y, t);
    if (!out.value().allFinite()) throw Error(ErrorKind::NonFinite, "ode_func produced a non-finite value");
    return out;
  };
  return integrate_with<Var>(rhs, z0, t0, t1, cfg, stats);
}

// ---------------------------------------------------------------------------

namespace {

template <class V>
struct Aug {
  V z;
  V acc;
};

template <class V>
Aug<V> operator+(const Aug<V>& a, const Aug<V>& b) {
  return Aug<V>{a.z + b.z, a.acc + b.acc};
}

template <class V>
Aug<V> operator*(double s, const Aug<V>& a) {
  return Aug<V>{s * a.z, s * a.acc};
}

Eigen::VectorXd flat(const Aug<Tensor>& a) {
  Eigen::VectorXd v(a.z.size() + a.acc.size());
  v << flow::flat(a.z), flow::flat(a.acc);
  return v;
}

Eigen::VectorXd flat(const Aug<Var>& a) {
  Eigen::VectorXd v(a.z.value().size() + a.acc.value().size());
  v << ad::flat(a.z), ad::flat(a.acc);
  return v;
}

}  // namespace

Probes make_probes(Eigen::Index rows, int dim, const DensityOptions& opts) {
  Probes p;
  if (opts.probe == ProbeKind::Exact) {
    for (int j = 0; j < dim; ++j) {
      Tensor e = Tensor::Zero(rows, dim);
      e.col(j).setOnes();
      p.vectors.push_back(std::move(e));
    }
    p.weight = 1.0;
    return p;
  }
  if (opts.samples < 1) throw Error(ErrorKind::InvalidArgument, "density probe samples must be >= 1");
  for (int s = 0; s < opts.samples; ++s) p.vectors.emplace_back(rows, dim);
  for (Eigen::Index r = 0; r < rows; ++r) {
    Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(r)));
    std::normal_distribution<double> normal;
    std::bernoulli_distribution coin(0.5);
    for (int s = 0; s < opts.samples; ++s) {
      for (int j = 0; j < dim; ++j) {
        p.vectors[static_cast<std::size_t>(s)](r, j) = opts.probe == ProbeKind::Rademacher ? (coin(rng) ? 1.0 : -1.0) : normal(rng);
      }
    }
  }
  p.weight = 1.0 / opts.samples;
  return p;
}

Tensor standard_normal_logpdf(const Tensor& z) {
  const double c = -0.5 * static_cast<double>(z.cols()) * std::log(2.0 * std::numbers::pi);
  Tensor out = (-0.5 * z.rowwise().squaredNorm()).array() + c;
  return out;
}

DensityResult log_density(const OdeFunc& f, const Tensor& h, const SolverConfig& cfg, const DensityOptions& opts, SolveStats* stats) {
  if (h.cols() != f.arch().dim) throw Error(ErrorKind::ShapeMismatch, "log_density: input width does not match flow dim");
  const Probes probes = make_probes(h.rows(), f.arch().dim, opts);
  auto rhs = [&](double t, const Aug<Tensor>& y) -> Aug<Tensor> {
    ad::Graph g;
    auto p = f.params().bind(g, false);
    Var z = g.variable(y.z);
    Var out = f.eval(g, p, z, t);
    if (!out.value().allFinite()) throw Error(ErrorKind::NonFinite, "ode_func produced a non-finite value");
    Tensor tr = Tensor::Zero(y.z.rows(), 1);
    const Var wrt[] = {z};
    for (const auto& e : probes.vectors) {
      Tensor vjp = g.grad(out, wrt, &e)[0];
      tr += probes.weight * vjp.cwiseProduct(e).rowwise().sum();
    }
    return Aug<Tensor>{out.value(), std::move(tr)};
  };
  Aug<Tensor> start{h, Tensor::Zero(h.rows(), 1)};
  Aug<Tensor> end = integrate_with<Aug<Tensor>>(rhs, std::move(start), 1.0, 0.0, cfg, stats);
  DensityResult r;
  r.z0 = std::move(end.z);
  r.trace_integral = std::move(end.acc);
  r.log_density = standard_normal_logpdf(r.z0) + r.trace_integral;
  return r;
}

Var log_density(ad::Graph& g, std::span<const Var> bound, const OdeFunc& f, Var h, const SolverConfig& cfg, const DensityOptions& opts,
                SolveStats* stats) {
  if (h.cols() != f.arch().dim) throw Error(ErrorKind::ShapeMismatch, "log_density: input width does not match flow dim");
  const Probes probes = make_probes(h.rows(), f.arch().dim, opts);
  std::vector<Var> probe_vars;
  for (const auto& e : probes.vectors) probe_vars.push_back(g.constant(e));
  auto rhs = [&](double t, const Aug<Var>& y) -> Aug<Var> {
    Var out = f.eval(g, bound, y.z, t);
    if (!out.value().allFinite()) throw Error(ErrorKind::NonFinite, "ode_func produced a non-finite value");
    const Var wrt[] = {y.z};
    Var tr;
    for (const Var& e : probe_vars) {
      Var vjp = g.grad_graph(out, wrt, &e)[0];
      Var term = ad::scale(ad::sum_cols(ad::mul(vjp, e)), probes.weight);
      tr = tr.valid() ? ad::add(tr, term) : term;
    }
    return Aug<Var>{out, tr};
  };
  Aug<Var> start{h, g.constant(Tensor::Zero(h.rows(), 1))};
  Aug<Var> end = integrate_with<Aug<Var>>(rhs, std::move(start), 1.0, 0.0, cfg, stats);
  const double c = -0.5 * static_cast<double>(f.arch().dim) * std::log(2.0 * std::numbers::pi);
  Var base = ad::add_scalar(ad::scale(ad::sum_cols(ad::square(end.z)), -0.5), c);
  return ad::add(base, end.acc);
}

Tensor trace_estimate(const OdeFunc& f, const Tensor& z, double t, const DensityOptions& opts) {
  if (z.cols() != f.arch().dim) throw Error(ErrorKind::ShapeMismatch, "trace_estimate: input width does not match flow dim");
  const Probes probes = make_probes(z.rows(), f.arch().dim, opts);
  ad::Graph g;
  auto p = f.params().bind(g, false);
  Var zv = g.variable(z);
  Var out = f.eval(g, p, zv, t);
  Tensor tr = Tensor::Zero(z.rows(), 1);
  const Var wrt[] = {zv};
  for (const auto& e : probes.vectors) {
    Tensor vjp = g.grad(out, wrt, &e)[0];
    tr += probes.weight * vjp.cwiseProduct(e).rowwise().sum();
  }
  return tr;
}

Tensor jacobian(const OdeFunc& f, const Tensor& z_row, double t) {
  const int d = f.arch().dim;
  ad::Graph g;
  auto p = f.params().bind(g, false);
  Var z = g.variable(z_row);
  Var out = f.eval(g, p, z, t);
  Tensor jac(d, d);
  const Var wrt[] = {z};
  for (int i = 0; i < d; ++i) {
    Tensor seed = Tensor::Zero(1, d);
    seed(0, i) = 1.0;
    jac.row(i) = g.grad(out, wrt, &seed)[0];
  }
  return jac;
}

}  // namespace flowsynth::flow
