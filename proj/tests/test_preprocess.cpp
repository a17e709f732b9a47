#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "flowsynth/preprocess.hpp"

using namespace flowsynth;
using namespace flowsynth::prep;

namespace {

std::vector<double> normal_samples(std::size_t n, double mean, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(mean, sd);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Schema mixed_schema() {
  return Schema({{"x", ColumnKind::Continuous, ColumnRole::Feature},
                 {"c", ColumnKind::Categorical, ColumnRole::Feature},
                 {"y", ColumnKind::Categorical, ColumnRole::Label}});
}

TransformSpec handmade_spec() {
  ColumnTransform x{ColumnKind::Continuous, {{0.3, -2.0, 0.5}, {0.7, 3.0, 1.5}}, {}};
  ColumnTransform c{ColumnKind::Categorical, {}, {"A", "B", "C"}};
  ColumnTransform y{ColumnKind::Categorical, {}, {"0", "1"}};
  return TransformSpec(mixed_schema(), {x, c, y});
}

}  // namespace

TEST_CASE("single Gaussian fit") {
  auto v = normal_samples(10000, 0.0, 1.0, 1);
  ColumnTransform t = fit_gmm(v, 1);
  REQUIRE(t.modes.size() == 1);
  CHECK(std::abs(t.modes[0].mean) < 0.05);
  CHECK(std::abs(t.modes[0].stddev - 1.0) < 0.05);
  CHECK(t.modes[0].weight == 1.0);
}

TEST_CASE("well separated mixture yields exactly two modes") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> v(10000);
  for (auto& x : v) x = (coin(rng) ? 5.0 : -5.0) + n(rng);
  ColumnTransform t = fit_gmm(v, 5);
  REQUIRE(t.modes.size() == 2);
  std::vector<double> means{t.modes[0].mean, t.modes[1].mean};
  std::sort(means.begin(), means.end());
  CHECK(std::abs(means[0] + 5.0) < 0.2);
  CHECK(std::abs(means[1] - 5.0) < 0.2);
  double wsum = 0.0;
  for (const auto& m : t.modes) wsum += m.weight;
  CHECK(std::abs(wsum - 1.0) < 1e-9);
}

TEST_CASE("constant column degenerates to one floored mode") {
  std::vector<double> v(50, 3.0);
  ColumnTransform t = fit_gmm(v);
  REQUIRE(t.modes.size() == 1);
  CHECK(t.modes[0].mean == 3.0);
  CHECK(t.modes[0].stddev == 1e-4);
  CHECK_THROWS_AS(fit_gmm(std::vector<double>{}), Error);
}

TEST_CASE("EM log-likelihood never decreases") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(2000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 3 == 0 ? 4.0 : 0.0) + (i % 3 == 0 ? 0.5 : 1.5) * n(rng);
    for (int k = 1; k <= 5; ++k) {
      GmmOptions o;
      o.max_modes = k;
      GmmFit fit = fit_gmm_traced(v, o);
      for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1] - 1e-8);
    }
  }
}

TEST_CASE("encoding examples") {
  Schema s({{"x", ColumnKind::Continuous, ColumnRole::Feature}});
  auto v = normal_samples(10000, 0.0, 1.0, 3);
  ColumnTransform t = fit_gmm(v, 1);
  TransformSpec spec(s, {t});
  CHECK(spec.width() == 2);
  ad::Tensor e = spec.encode({2.0});
  CHECK(e(0, 0) == 1.0);
  CHECK(e(0, 1) == doctest::Approx(0.5).epsilon(0.05));
  CHECK(e(0, 1) == (2.0 - t.modes[0].mean) / (4.0 * t.modes[0].stddev));
  ad::Tensor centered = spec.encode({t.modes[0].mean});
  CHECK(centered(0, 1) == 0.0);

  TransformSpec h = handmade_spec();
  ad::Tensor cat = h.encode({Value{3.0}, Value{std::string("B")}, Value{std::string("0")}});
  CHECK(cat(0, 3) == 0.0);
  CHECK(cat(0, 4) == 1.0);
  CHECK(cat(0, 5) == 0.0);
}

TEST_CASE("layout covers the encoded width without overlap") {
  TransformSpec h = handmade_spec();
  CHECK(h.width() == 3 + 3 + 2);
  std::vector<int> hits(static_cast<std::size_t>(h.width()), 0);
  for (const auto& s : h.slots()) {
    for (int i = 0; i < s.width; ++i) ++hits[static_cast<std::size_t>(s.offset + i)];
  }
  for (int n : hits) CHECK(n == 1);
  CHECK(h.offset(0) == 0);
  CHECK(h.offset(1) == 3);
  CHECK(h.offset(2) == 6);
}

TEST_CASE("round trip for unclipped records") {
  TransformSpec h = handmade_spec();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-5.0, 9.0);
  std::uniform_int_distribution<int> pick(0, 2);
  const std::vector<std::string> cats{"A", "B", "C"};
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng);
    const auto& m = h.column(0).modes[best_mode(h.column(0), v)];
    if (std::abs(v - m.mean) > 4.0 * m.stddev) continue;
    Record r{Value{v}, Value{cats[static_cast<std::size_t>(pick(rng))]}, Value{std::string(i % 2 ? "1" : "0")}};
    ad::Tensor e = h.encode(r);
    Record back = h.decode(std::span<const double>(e.data(), static_cast<std::size_t>(e.size())));
    CHECK(std::abs(std::get<double>(back[0]) - v) < 1e-9);
    CHECK(std::get<std::string>(back[1]) == std::get<std::string>(r[1]));
    CHECK(std::get<std::string>(back[2]) == std::get<std::string>(r[2]));
    ++checked;
  }
  CHECK(checked > 1000);
}

TEST_CASE("clipping bound on decode") {
  Schema s({{"x", ColumnKind::Continuous, ColumnRole::Feature}});
  TransformSpec spec(s, {ColumnTransform{ColumnKind::Continuous, {{1.0, 2.0, 0.5}}, {}}});
  ad::Tensor e = spec.encode({2.0 + 10 * 0.5});
  CHECK(e(0, 1) == 1.0);
  Record back = spec.decode(std::span<const double>(e.data(), 2));
  CHECK(std::get<double>(back[0]) == 2.0 + 4 * 0.5);
}

TEST_CASE("decode breaks ties toward the lowest index") {
  TransformSpec h = handmade_spec();
  std::vector<double> v{0.2, 0.2, 0.0, 0.7, 0.7, 0.7, 0.4, 0.4};
  Record r = h.decode(v);
  CHECK(std::get<double>(r[0]) == -2.0);
  CHECK(std::get<std::string>(r[1]) == "A");
  CHECK(std::get<std::string>(r[2]) == "0");
}

TEST_CASE("encoding errors") {
  TransformSpec h = handmade_spec();
  try {
    h.encode({Value{std::nan("")}, Value{std::string("A")}, Value{std::string("0")}});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
  CHECK_THROWS_AS(h.encode({Value{0.0}, Value{std::string("Z")}, Value{std::string("0")}}), Error);
  CHECK_THROWS_AS(h.encode({Value{0.0}, Value{std::string("A")}}), Error);
}

TEST_CASE("transform validation") {
  Schema s({{"x", ColumnKind::Continuous, ColumnRole::Feature}});
  CHECK_THROWS_AS(TransformSpec(s, {ColumnTransform{ColumnKind::Continuous, {{0.5, 0.0, 1.0}}, {}}}), Error);
  CHECK_THROWS_AS(TransformSpec(s, {ColumnTransform{ColumnKind::Continuous, {{1.0, 0.0, 0.0}}, {}}}), Error);
  Schema c({{"c", ColumnKind::Categorical, ColumnRole::Feature}});
  CHECK_THROWS_AS(TransformSpec(c, {ColumnTransform{ColumnKind::Categorical, {}, {"a", "a"}}}), Error);
  CHECK_THROWS_AS(TransformSpec(c, {ColumnTransform{ColumnKind::Categorical, {}, {}}}), Error);
}

TEST_CASE("fit on a table is deterministic and sorted") {
  Table t(mixed_schema());
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  const char* cats[] = {"q", "b", "m"};
  for (int i = 0; i < 500; ++i) t.append({Value{n(rng)}, Value{std::string(cats[i % 3])}, Value{std::string(i % 2 ? "1" : "0")}});
  TransformSpec a = TransformSpec::fit(t);
  TransformSpec b = TransformSpec::fit(t);
  CHECK(a == b);
  CHECK(a.column(1).vocabulary == std::vector<std::string>{"b", "m", "q"});
  CHECK(a.encode_table(t) == b.encode_table(t));
  Table decoded = a.decode_table(a.encode_table(t));
  CHECK(decoded.cats(1) == t.cats(1));
  CHECK(decoded.cats(2) == t.cats(2));
}

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(Schema({{"a", ColumnKind::Continuous, ColumnRole::Feature}, {"a", ColumnKind::Continuous, ColumnRole::Feature}}), Error);
  CHECK_THROWS_AS(Schema({{"y", ColumnKind::Categorical, ColumnRole::Label}}), Error);
  CHECK_THROWS_AS(Schema({{"a", ColumnKind::Continuous, ColumnRole::Feature},
                          {"y", ColumnKind::Categorical, ColumnRole::Label},
                          {"z", ColumnKind::Categorical, ColumnRole::Label}}),
                  Error);
}
