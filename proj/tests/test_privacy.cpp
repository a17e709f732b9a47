#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "flowsynth/io.hpp"
#include "flowsynth/privacy.hpp"
#include "flowsynth/synthbench.hpp"

using namespace flowsynth;

namespace {

// Exhaustive reference: pairwise squared distances, pair counting.
double brute_force_attack(const Table& fake, const privacy::AttackSet& set, const prep::TransformSpec& spec) {
  const ad::Tensor f = spec.encode_table(fake);
  auto error = [&](const ad::Tensor& x, Eigen::Index i) {
    double best = INFINITY;
    for (Eigen::Index j = 0; j < f.rows(); ++j) best = std::min(best, (x.row(i) - f.row(j)).squaredNorm());
    return std::sqrt(best);
  };
  const ad::Tensor m = spec.encode_table(set.members);
  const ad::Tensor n = spec.encode_table(set.nonmembers);
  double wins = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double sm = -error(m, i);
    for (Eigen::Index j = 0; j < n.rows(); ++j) {
      const double sn = -error(n, j);
      wins += sm > sn ? 1.0 : (sm == sn ? 0.5 : 0.0);
    }
  }
  return wins / (static_cast<double>(m.rows()) * static_cast<double>(n.rows()));
}

Table rows_of(const Table& t, std::size_t from, std::size_t n) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = from + i;
  return t.take(idx);
}

}  // namespace

TEST_CASE("attack matches exhaustive reference") {
  const Table pool = bench::make_table(600, 3);
  const auto spec = prep::TransformSpec::fit(pool);
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    CAPTURE(trial);
    const std::size_t k = 1 + rng() % 100;
    const std::size_t nf = 1 + rng() % 100;
    Table fake = rows_of(pool, 400, nf);
    privacy::AttackSet set{rows_of(pool, rng() % 150, k), rows_of(pool, 200 + rng() % 50, k)};
    if (trial % 3 == 0) fake = rows_of(pool, 0, nf);  // overlaps the member range: zero errors and ties
    const auto r = privacy::fbb_attack(fake, set, spec);
    CHECK(r.roc_auc == brute_force_attack(fake, set, spec));
    CHECK(r.member_errors.size() == k);
  }
}

TEST_CASE("verbatim records have zero error") {
  const Table pool = bench::make_table(200, 4);
  const auto spec = prep::TransformSpec::fit(pool);
  privacy::AttackSet set{rows_of(pool, 0, 30), rows_of(pool, 100, 30)};
  const Table fake = rows_of(pool, 10, 50);  // contains members 10..29
  const auto r = privacy::fbb_attack(fake, set, spec);
  for (std::size_t i = 10; i < 30; ++i) CHECK(r.member_errors[i] == 0.0);
  for (double e : r.nonmember_errors) CHECK(e > 0.0);
}

TEST_CASE("fake row order is irrelevant") {
  const Table pool = bench::make_table(300, 5);
  const auto spec = prep::TransformSpec::fit(pool);
  privacy::AttackSet set{rows_of(pool, 0, 40), rows_of(pool, 40, 40)};
  const Table fake = rows_of(pool, 100, 120);
  std::vector<std::size_t> perm(fake.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(2));
  const auto a = privacy::fbb_attack(fake, set, spec);
  const auto b = privacy::fbb_attack(fake.take(perm), set, spec);
  CHECK(a.roc_auc == b.roc_auc);
  CHECK(a.member_errors == b.member_errors);
  CHECK(a.nonmember_errors == b.nonmember_errors);
}

TEST_CASE("perfect leak and exchangeable null") {
  const Table members = bench::make_table(200, 6);
  const auto spec = prep::TransformSpec::fit(members);
  SUBCASE("fake equals members, nonmembers far away") {
    Table far(members.schema());
    for (std::size_t i = 0; i < members.rows(); ++i) {
      Record r = members.row(i);
      r[0] = std::get<double>(r[0]) + 50.0;
      far.append(r);
    }
    CHECK(privacy::fbb_attack(members, {members, far}, spec).roc_auc == 1.0);
  }
  SUBCASE("independent fake") {
    double total = 0.0;
    const int seeds = 10;
    for (int s = 0; s < seeds; ++s) {
      const auto set = privacy::AttackSet{bench::make_table(200, 100 + s), bench::make_table(200, 200 + s)};
      const double auc = privacy::fbb_attack(bench::make_table(400, 300 + s), set, spec).roc_auc;
      CHECK(std::abs(auc - 0.5) < 0.1);
      total += auc;
    }
    CHECK(std::abs(total / seeds - 0.5) < 0.05);
  }
}

TEST_CASE("attack sets and errors") {
  const Table a = bench::make_table(50, 1);
  const Table b = bench::make_table(30, 2);
  const auto spec = prep::TransformSpec::fit(a);
  const auto set = privacy::make_attack_set(a, b, 20, 9);
  CHECK(set.members.rows() == 20);
  CHECK(set.nonmembers.rows() == 20);
  CHECK(privacy::make_attack_set(a, b, 20, 9).members == set.members);
  CHECK_THROWS_AS(privacy::make_attack_set(a, b, 31, 9), Error);
  CHECK_THROWS_AS(privacy::fbb_attack(Table(a.schema()), set, spec), Error);
  CHECK_THROWS_AS(privacy::fbb_attack(a, {a, b}, spec), Error);  // unbalanced

  CHECK(privacy::quantile({3.0, 1.0, 2.0, 4.0}, 0.5) == 2.5);
  CHECK(privacy::quantile({3.0, 1.0, 2.0}, 1.0) == 3.0);
  CHECK(privacy::quantile({7.0}, 0.25) == 7.0);

  const auto r = privacy::fbb_attack(a, set, spec);
  const auto kv = io::attack_report_kv(r);
  CHECK(kv.get("roc_auc") == io::format_real(r.roc_auc));
  CHECK(kv.get("member_error_min") == "0");
  CHECK(kv.has("nonmember_error_q75"));
}

TEST_CASE("gamma sweep") {
  train::TrainConfig c;
  c.max_iter = 3;
  c.batch_size = 20;
  c.latent_dim = 3;
  c.ae_hidden = 6;
  c.disc_hidden = 6;
  c.flow_layers = 2;
  c.solver.steps = 2;
  c.period_l = 1;
  const Table tr = bench::make_table(40, 1);
  const Table va = bench::make_table(20, 2);
  const auto set = privacy::make_attack_set(tr, va, 20, 3);
  c.gamma = -0.05;
  const auto lo = train::train(tr, va, c);
  c.gamma = 0.05;
  const auto hi = train::train(tr, va, c);

  const auto one = privacy::gamma_sweep_attack({lo}, set, 50, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].gamma == -0.05);
  const auto rep = privacy::gamma_sweep_attack({lo, hi, lo}, set, 50, 1);
  REQUIRE(rep.size() == 3);
  CHECK(rep[1].gamma == 0.05);
  CHECK(rep[0].roc_auc == rep[2].roc_auc);
  CHECK(rep[0].roc_auc == one[0].roc_auc);

  auto other = lo;
  other.transform = prep::TransformSpec::fit(va);
  CHECK_THROWS_AS(privacy::gamma_sweep_attack({lo, other}, set, 50, 1), Error);
  CHECK_THROWS_AS(privacy::gamma_sweep_attack({}, set, 50, 1), Error);
}
