#include "flowsynth/synthbench.hpp"

#include <random>
#include <string>

#include "flowsynth/rng.hpp"

namespace flowsynth::bench {

Schema benchmark_schema() {
  return Schema({{"x1", ColumnKind::Continuous, ColumnRole::Feature},
                 {"x2", ColumnKind::Continuous, ColumnRole::Feature},
                 {"c", ColumnKind::Categorical, ColumnRole::Feature},
                 {"y", ColumnKind::Categorical, ColumnRole::Label}});
}

Table make_table(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution label(0.4), coin(0.5);
  std::normal_distribution<double> nd(0.0, 1.0);
  // Component means and spread of x1 per class.
  const double means[2][2] = {{-2.0, 1.0}, {-0.5, 3.0}};
  const double spread = 0.6;
  std::discrete_distribution<int> cat0({0.5, 0.3, 0.2}), cat1({0.15, 0.3, 0.55});
  static const char* kCats[] = {"a", "b", "c"};
  Table t(benchmark_schema());
  for (std::size_t i = 0; i < n; ++i) {
    const int y = label(rng) ? 1 : 0;
    const double x1 = means[y][coin(rng) ? 1 : 0] + spread * nd(rng);
    const double x2 = 0.5 * x1 + 1.2 * y + nd(rng);
    const int c = y ? cat1(rng) : cat0(rng);
    t.append({x1, x2, std::string(kCats[c]), std::string(y ? "1" : "0")});
  }
  return t;
}

Benchmark make_benchmark(std::uint64_t seed, std::size_t n_train, std::size_t n_val, std::size_t n_test) {
  return {make_table(n_train, derive_seed(seed, 1)), make_table(n_val, derive_seed(seed, 2)), make_table(n_test, derive_seed(seed, 3))};
}

train::TrainConfig desk_config() {
  train::TrainConfig c;
  c.max_iter = 2000;
  c.period_g = 3;
  c.batch_size = 500;
  c.latent_dim = 16;
  c.ae_hidden = 64;
  c.disc_hidden = 64;
  c.solver.steps = 4;
  c.lr = 1e-3;
  c.gen_lr = 5e-3;
  c.disc_lr = 3e-3;
  c.beta1 = 0.5;
  c.beta2 = 0.9;
  c.adv_weight = 0.0;
  c.validation_interval = 50;
  return c;
}

}  // namespace flowsynth::bench
