#include <cmath>
#include <numbers>

#include "doctest.h"
#include "flowsynth/networks.hpp"
#include "gradcheck.hpp"
#include "support.hpp"

using namespace flowsynth;
using namespace flowsynth::nets;
using testing_support::random_tensor;

namespace {

Mlp identity_stub(const std::string& prefix, int dim) {
  Mlp m = Mlp::zeros(prefix, {dim, dim}, Activation::Relu, 0.0, 0.0);
  m.params().value(0) = Tensor::Identity(dim, dim);
  return m;
}

Mlp linear_critic(const Tensor& w) {
  Mlp m = Mlp::zeros("discriminator", {static_cast<int>(w.rows()), 1}, Activation::LeakyRelu, 0.2, 0.0);
  m.params().value(0) = w;
  return m;
}

}  // namespace

TEST_CASE("encoder and decoder evaluation") {
  NetArch a;
  a.data_dim = 5;
  a.latent_dim = 3;
  a.ae_hidden = 7;
  a.enc_layers = 3;
  Rng rng(1);
  Mlp enc = make_encoder(a, rng);
  CHECK(enc.widths() == std::vector<int>{5, 7, 7, 3});
  CHECK(make_decoder(a, rng).widths() == std::vector<int>{3, 7, 5});
  std::mt19937_64 r(1);
  Tensor x = random_tensor(4, 5, r);
  CHECK(enc.forward(x).rows() == 4);
  CHECK_THROWS_AS(enc.forward(Tensor::Zero(1, 4)), Error);

  Mlp zero = Mlp::zeros("encoder", encoder_widths(a), Activation::Relu, 0.0, 0.0);
  CHECK(zero.forward(x).isZero(0.0));
  CHECK(identity_stub("encoder", 5).forward(x) == x);
}

TEST_CASE("discriminator modes") {
  NetArch a;
  a.latent_dim = 4;
  a.disc_hidden = 16;
  a.dropout = 0.5;
  Rng rng(2);
  Mlp d = make_discriminator(a, rng);
  std::mt19937_64 r(2);
  Tensor h = random_tensor(6, 4, r);
  CHECK(d.forward(h).cols() == 1);
  CHECK(d.forward(h) == d.forward(h));

  ad::Graph g;
  auto p = d.params().bind(g, false);
  Rng m1(10), m2(11);
  Tensor t1 = d.forward(g, p, g.constant(h), &m1).value();
  Tensor t2 = d.forward(g, p, g.constant(h), &m2).value();
  CHECK(t1 != t2);

  Mlp zero = Mlp::zeros("discriminator", discriminator_widths(a), Activation::LeakyRelu, 0.2, 0.5);
  CHECK(zero.forward(h).isZero(0.0));
}

TEST_CASE("autoencoder loss on a perfect identity stub") {
  // One-hot-only layout: two groups of widths 2 and 3.
  const std::vector<prep::Slot> slots{{prep::Slot::OneHot, 0, 2}, {prep::Slot::OneHot, 2, 3}};
  Tensor x(3, 5);
  x << 1, 0, 0, 1, 0,  //
      0, 1, 1, 0, 0,   //
      1, 0, 0, 0, 1;
  Mlp enc = identity_stub("encoder", 5);
  Mlp dec = identity_stub("decoder", 5);
  std::mt19937_64 r(3);
  Tensor hf = random_tensor(4, 5, r, 0.0, 1.0);  // nonnegative so the ReLU-free stub is exact
  ad::Graph g;
  auto ep = enc.params().bind(g, false);
  auto dp = dec.params().bind(g, false);
  AeLoss l = loss_ae(g, enc, ep, dec, dp, g.constant(x), g.constant(hf), slots);
  CHECK(l.cycle.value()(0, 0) == 0.0);
  CHECK(l.latent_l2.value()(0, 0) == doctest::Approx(0.5 * x.squaredNorm() / 3.0).epsilon(1e-14));
  // Cross-entropy of one-hot logits is log(e + w - 1) - 1 per group, not zero.
  const double ce = std::log(std::numbers::e + 1.0) - 1.0 + std::log(std::numbers::e + 2.0) - 1.0;
  CHECK(l.reconstruct.value()(0, 0) == doctest::Approx(ce).epsilon(1e-12));
  CHECK(l.total.value()(0, 0) == doctest::Approx(ce + l.latent_l2.value()(0, 0)).epsilon(1e-12));
}

TEST_CASE("autoencoder loss with a zero encoder has no latent penalty") {
  NetArch a;
  a.data_dim = 6;
  a.latent_dim = 3;
  a.ae_hidden = 4;
  Mlp enc = Mlp::zeros("encoder", encoder_widths(a), Activation::Relu, 0.0, 0.0);
  Rng rng(4);
  Mlp dec = make_decoder(a, rng);
  std::mt19937_64 r(4);
  ad::Graph g;
  auto ep = enc.params().bind(g, false);
  auto dp = dec.params().bind(g, false);
  AeLoss l = loss_ae(g, enc, ep, dec, dp, g.constant(gradcheck::small_batch(r, 4)), g.constant(random_tensor(4, 3, r)),
                     gradcheck::small_slots());
  CHECK(l.latent_l2.value()(0, 0) == 0.0);
  CHECK(l.reconstruct.value()(0, 0) >= 0.0);
}

TEST_CASE("critic loss special cases") {
  std::mt19937_64 r(5);
  Tensor hr = random_tensor(8, 3, r);
  Tensor hf = random_tensor(8, 3, r);
  {
    Mlp zero = Mlp::zeros("discriminator", {3, 4, 1}, Activation::LeakyRelu, 0.2, 0.5);
    ad::Graph g;
    auto p = zero.params().bind(g, false);
    Rng draws(1);
    WganLoss l = loss_wgan_gp(g, zero, p, g.constant(hr), g.constant(hf), 10.0, draws);
    CHECK(l.d_loss.value()(0, 0) == 10.0);
    CHECK(l.g_loss.value()(0, 0) == 0.0);
    CHECK(l.gp_term.value()(0, 0) == 1.0);
  }
  {
    Tensor w = Tensor::Zero(3, 1);
    w(1, 0) = 1.0;
    Mlp d = linear_critic(w);
    ad::Graph g;
    auto p = d.params().bind(g, false);
    Rng draws(2);
    CHECK(loss_wgan_gp(g, d, p, g.constant(hr), g.constant(hf), 10.0, draws).gp_term.value()(0, 0) == 0.0);
  }
  {
    Tensor w(3, 1);
    w << 0.5, -2.0, 1.0;
    Mlp d = linear_critic(w);
    ad::Graph g;
    auto p = d.params().bind(g, false);
    Rng draws(3);
    WganLoss l = loss_wgan_gp(g, d, p, g.constant(hr), g.constant(hr), 10.0, draws);
    const double gp = (w.norm() - 1.0) * (w.norm() - 1.0);
    CHECK(l.gp_term.value()(0, 0) == doctest::Approx(gp).epsilon(1e-12));
    CHECK(l.d_loss.value()(0, 0) == doctest::Approx(10.0 * gp).epsilon(1e-12));
  }
  ad::Graph g;
  Mlp d = linear_critic(Tensor::Ones(3, 1));
  auto p = d.params().bind(g, false);
  Rng draws(4);
  CHECK_THROWS_AS(loss_wgan_gp(g, d, p, g.constant(hr), g.constant(Tensor::Zero(8, 2)), 10.0, draws), Error);
}

TEST_CASE("gradient penalty is never negative") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng init(s);
    Mlp d = gradcheck::small_critic(init, 3);
    std::mt19937_64 r(s);
    ad::Graph g;
    auto p = d.params().bind(g, false);
    Rng draws(s);
    WganLoss l = loss_wgan_gp(g, d, p, g.constant(random_tensor(5, 3, r)), g.constant(random_tensor(5, 3, r)), 10.0, draws);
    CHECK(l.gp_term.value()(0, 0) >= 0.0);
  }
}

TEST_CASE("density regularizer values") {
  flow::FlowArch a;
  a.dim = 2;
  a.layers = 1;
  flow::OdeFunc f = flow::OdeFunc::zeros(a);
  f.params().value(f.weight_a(0)) = Tensor::Identity(2, 2);
  f.params().value(f.weight_b(0)) = Tensor::Identity(2, 2);
  const flow::DensityOptions probes{flow::ProbeKind::Rademacher, 1, 3};
  ad::Graph g;
  auto p = f.params().bind(g, true);
  Var h = g.constant(Tensor::Zero(4, 2));
  Var zero = reg_density(g, p, f, h, 0.0, gradcheck::short_rk4(), probes);
  CHECK(zero.value()(0, 0) == 0.0);
  CHECK(g.grad(zero, p)[0].isZero(0.0));
  Var one = reg_density(g, p, f, h, 1.0, gradcheck::short_rk4(), probes);
  CHECK(one.value()(0, 0) == doctest::Approx(std::log(2.0 * std::numbers::pi)).epsilon(1e-12));

  Rng init(6);
  flow::OdeFunc r = gradcheck::small_flow(init, 2, flow::GateKind::Learned);
  std::mt19937_64 rr(6);
  Tensor hb = random_tensor(5, 2, rr);
  ad::Graph g2;
  auto p2 = r.params().bind(g2, false);
  const double plus = reg_density(g2, p2, r, g2.constant(hb), 0.05, gradcheck::short_rk4(), probes).value()(0, 0);
  const double minus = reg_density(g2, p2, r, g2.constant(hb), -0.05, gradcheck::short_rk4(), probes).value()(0, 0);
  CHECK(plus == -minus);
}

TEST_CASE("loss gradients match finite differences") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    CHECK(gradcheck::ae_error(s) < 1e-4);
    CHECK(gradcheck::critic_error(s) < 1e-3);
    CHECK(gradcheck::generator_error(s) < 1e-4);
    CHECK(gradcheck::density_error(s) < 1e-4);
  }
}

TEST_CASE("autoencoder overfits a fixed batch") {
  NetArch a;
  a.data_dim = 6;
  a.latent_dim = 4;
  a.ae_hidden = 32;
  Rng rng(7);
  Mlp enc = make_encoder(a, rng);
  Mlp dec = make_decoder(a, rng);
  std::mt19937_64 r(7);
  const Tensor x = gradcheck::small_batch(r, 8);
  const Tensor hf = random_tensor(8, 4, r, -0.5, 0.5);
  const auto slots = gradcheck::small_slots();
  ad::AdamConfig cfg;
  std::vector<double> trace;
  for (int step = 0; step < 200; ++step) {
    cfg.lr = 1e-2 / (1.0 + step / 25.0);
    ad::Graph g;
    auto ep = enc.params().bind(g, true);
    auto dp = dec.params().bind(g, true);
    Var loss = loss_ae(g, enc, ep, dec, dp, g.constant(x), g.constant(hf), slots).total;
    trace.push_back(loss.value()(0, 0));
    std::vector<Var> all(ep);
    all.insert(all.end(), dp.begin(), dp.end());
    auto grads = g.grad(loss, all);
    ad::adam_step(enc.params(), std::vector<Tensor>(grads.begin(), grads.begin() + static_cast<long>(ep.size())), cfg);
    ad::adam_step(dec.params(), std::vector<Tensor>(grads.begin() + static_cast<long>(ep.size()), grads.end()), cfg);
  }
  for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1]);
  CHECK(trace.back() < 0.1 * trace.front());
}

TEST_CASE("density regularizer moves the log-likelihood in the sign of gamma") {
  std::mt19937_64 r(8);
  const Tensor h = random_tensor(16, 2, r, -1.5, 1.5);
  const flow::DensityOptions exact{flow::ProbeKind::Exact, 1, 0};
  auto nll = [&](const flow::OdeFunc& f) { return -flow::log_density(f, h, gradcheck::short_rk4(), exact).log_density.mean(); };
  for (double gamma : {1.0, -1.0}) {
    Rng init(8);
    flow::OdeFunc f = gradcheck::small_flow(init, 2, flow::GateKind::Learned);
    const double before = nll(f);
    ad::AdamConfig cfg;
    cfg.lr = 2e-3;
    for (int step = 0; step < 200; ++step) {
      ad::Graph g;
      auto p = f.params().bind(g, true);
      Var loss = reg_density(g, p, f, g.constant(h), gamma, gradcheck::short_rk4(),
                             flow::DensityOptions{flow::ProbeKind::Rademacher, 1, static_cast<std::uint64_t>(step)});
      ad::adam_step(f.params(), g.grad(loss, p), cfg);
    }
    const double after = nll(f);
    INFO("gamma=" << gamma);
    if (gamma > 0) {
      CHECK(after < before);
    } else {
      CHECK(after > before);
    }
  }
}
