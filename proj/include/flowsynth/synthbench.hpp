#pragma once

// Built-in synthetic classification benchmark: two continuous features, one
// categorical feature and a binary label.
//
//   y  ~ Bernoulli(0.4), written as "0" / "1"
//   x1 ~ class-conditional two-component Gaussian mixture
//   x2 = 0.5 * x1 + N(1.2 * y, 1)
//   c  ~ categorical over {a, b, c} with class-dependent frequencies

#include <cstdint>

#include "flowsynth/table.hpp"
#include "flowsynth/trainer.hpp"

namespace flowsynth::bench {

Schema benchmark_schema();
Table make_table(std::size_t n, std::uint64_t seed);

struct Benchmark {
  Table train;
  Table val;
  Table test;
};

Benchmark make_benchmark(std::uint64_t seed, std::size_t n_train = 2000, std::size_t n_val = 500, std::size_t n_test = 1000);

/// Training configuration sized for the benchmark on a single CPU core.
train::TrainConfig desk_config();

}  // namespace flowsynth::bench
