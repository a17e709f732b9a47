#pragma once

// Finite-difference checks of the training losses on small random instances.
// Each function builds one instance from `seed` and returns the norm-wise
// relative error between the recorded gradient and central differences,
// taken over every parameter the loss trains.

#include <functional>
#include <random>
#include <vector>

#include "flowsynth/networks.hpp"
#include "flowsynth/nodeflow.hpp"
#include "support.hpp"

namespace gradcheck {

using namespace flowsynth;
using ad::Graph;
using ad::ParamSet;
using ad::Tensor;
using ad::Var;

using LossFn = std::function<Var(Graph&, std::span<const Var>)>;

inline double param_grad_error(ParamSet& ps, const LossFn& loss, double step = 1e-5) {
  std::vector<Tensor> analytic;
  {
    Graph g;
    auto p = ps.bind(g, true);
    analytic = g.grad(loss(g, p), p);
  }
  auto value = [&]() {
    Graph g;
    auto p = ps.bind(g, false);
    return loss(g, p).value()(0, 0);
  };
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    Tensor& v = ps.value(k);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double keep = v.data()[i];
      v.data()[i] = keep + step;
      const double up = value();
      v.data()[i] = keep - step;
      const double down = value();
      v.data()[i] = keep;
      const double num = (up - down) / (2.0 * step);
      const double an = analytic[k].data()[i];
      diff2 += (num - an) * (num - an);
      a2 += an * an;
      n2 += num * num;
    }
  }
  return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
}

// Encoded layout: a 2-mode continuous column (3 slots) and a 3-way categorical.
inline std::vector<prep::Slot> small_slots() {
  return {{prep::Slot::OneHot, 0, 2}, {prep::Slot::Scalar, 2, 1}, {prep::Slot::OneHot, 3, 3}};
}

inline Tensor small_batch(std::mt19937_64& rng, int rows) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> m(0, 1), c(0, 2);
  Tensor x = Tensor::Zero(rows, 6);
  for (int r = 0; r < rows; ++r) {
    x(r, m(rng)) = 1.0;
    x(r, 2) = u(rng);
    x(r, 3 + c(rng)) = 1.0;
  }
  return x;
}

/// L_AE with respect to encoder and decoder parameters together.
inline double ae_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Rng init(seed);
  nets::NetArch arch;
  arch.data_dim = 6;
  arch.latent_dim = 3;
  arch.ae_hidden = 5;
  nets::Mlp enc = nets::make_encoder(arch, init);
  nets::Mlp dec = nets::make_decoder(arch, init);
  const Tensor x = small_batch(rng, 5);
  const Tensor hf = testing_support::random_tensor(5, 3, rng);
  const auto slots = small_slots();
  // One parameter set holding both networks so a single sweep covers them.
  ParamSet joint;
  for (const auto& e : enc.params().entries()) joint.add(e.name, e.value);
  for (const auto& e : dec.params().entries()) joint.add(e.name, e.value);
  const std::size_t ne = enc.params().size();
  return param_grad_error(joint, [&](Graph& g, std::span<const Var> p) {
    return nets::loss_ae(g, enc, p.subspan(0, ne), dec, p.subspan(ne), g.constant(x), g.constant(hf), slots).total;
  });
}

inline nets::Mlp small_critic(Rng& init, int latent) {
  nets::NetArch arch;
  arch.latent_dim = latent;
  arch.disc_hidden = 6;
  arch.dropout = 0.5;
  arch.leaky_slope = 0.2;
  return nets::make_discriminator(arch, init);
}

/// WGAN-GP critic loss (second-order gradient-penalty path) w.r.t. the critic.
inline double critic_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Rng init(seed);
  nets::Mlp disc = small_critic(init, 3);
  const Tensor hr = testing_support::random_tensor(6, 3, rng, -2, 2);
  const Tensor hf = testing_support::random_tensor(6, 3, rng, -2, 2);
  return param_grad_error(disc.params(), [&](Graph& g, std::span<const Var> p) {
    Rng draws(seed + 1000);  // identical masks and interpolation weights per evaluation
    return nets::loss_wgan_gp(g, disc, p, g.constant(hr), g.constant(hf), 10.0, draws).d_loss;
  });
}

inline flow::OdeFunc small_flow(Rng& init, int dim, flow::GateKind gate) {
  flow::FlowArch a;
  a.dim = dim;
  a.layers = 2;
  a.gate = gate;
  return flow::OdeFunc(a, init);
}

inline flow::SolverConfig short_rk4() {
  flow::SolverConfig c;
  c.method = flow::SolverMethod::Rk4;
  c.steps = 4;
  return c;
}

/// WGAN-GP generator loss through the unrolled solver w.r.t. the flow.
inline double generator_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Rng init(seed);
  flow::OdeFunc f = small_flow(init, 3, seed % 2 ? flow::GateKind::Learned : flow::GateKind::Time);
  nets::Mlp disc = small_critic(init, 3);
  const Tensor z = testing_support::random_tensor(5, 3, rng, -2, 2);
  const Tensor hr = testing_support::random_tensor(5, 3, rng, -2, 2);
  auto dp = disc.params();
  return param_grad_error(f.params(), [&](Graph& g, std::span<const Var> p) {
    Rng draws(seed + 2000);
    Var hf = flow::generate(g, p, f, g.constant(z), short_rk4());
    auto d = dp.bind(g, false);
    return nets::loss_wgan_gp(g, disc, d, g.constant(hr), hf, 10.0, draws).g_loss;
  });
}

/// Density regularizer w.r.t. the flow (encoder output held constant).
inline double density_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Rng init(seed);
  flow::OdeFunc f = small_flow(init, 3, seed % 2 ? flow::GateKind::Learned : flow::GateKind::Time);
  const Tensor h = testing_support::random_tensor(4, 3, rng, -1.5, 1.5);
  const double gamma = seed % 2 ? 0.05 : -0.05;
  const flow::DensityOptions probes{flow::ProbeKind::Rademacher, 1, seed};
  return param_grad_error(f.params(), [&](Graph& g, std::span<const Var> p) {
    return nets::reg_density(g, p, f, g.constant(h), gamma, short_rk4(), probes);
  });
}

}  // namespace gradcheck
