#include "flowsynth/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowsynth/error.hpp"
#include "flowsynth/evalkit.hpp"
#include "flowsynth/rng.hpp"

namespace flowsynth::privacy {

void AttackSet::validate() const {
  if (members.rows() == 0 || nonmembers.rows() == 0) throw Error(ErrorKind::InvalidArgument, "attack set: members and nonmembers must be nonempty");
  if (members.rows() != nonmembers.rows())
    throw Error(ErrorKind::InvalidArgument, "attack set is unbalanced: " + std::to_string(members.rows()) + " members vs " +
                                                std::to_string(nonmembers.rows()) + " nonmembers");
  if (!(members.schema() == nonmembers.schema())) throw Error(ErrorKind::InvalidArgument, "attack set: member and nonmember schemas differ");
}

namespace {

Table draw(const Table& t, std::size_t n, Rng& rng, const char* what) {
  if (n > t.rows())
    throw Error(ErrorKind::InvalidArgument, std::string("attack set: asked for ") + std::to_string(n) + " " + what + " but only " +
                                                std::to_string(t.rows()) + " rows are available");
  std::vector<std::size_t> idx(t.rows());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first n entries are a uniform sample.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  return t.take(idx);
}

}  // namespace

AttackSet make_attack_set(const Table& train, const Table& holdout, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "attack set: size must be positive");
  Rng rm = make_rng(seed, 1);
  Rng rn = make_rng(seed, 2);
  AttackSet s{draw(train, n, rm, "members"), draw(holdout, n, rn, "nonmembers")};
  s.validate();
  return s;
}

AttackResult fbb_attack(const Table& fake, const AttackSet& set, const prep::TransformSpec& spec) {
  if (fake.rows() == 0) throw Error(ErrorKind::InvalidArgument, "attack: fake table is empty");
  set.validate();
  const ad::Tensor ref = spec.encode_table(fake);
  AttackResult r;
  r.member_errors = eval::nearest_distances(spec.encode_table(set.members), ref);
  r.nonmember_errors = eval::nearest_distances(spec.encode_table(set.nonmembers), ref);
  std::vector<double> scores;
  std::vector<int> labels;
  for (double e : r.member_errors) {
    scores.push_back(-e);
    labels.push_back(1);
  }
  for (double e : r.nonmember_errors) {
    scores.push_back(-e);
    labels.push_back(0);
  }
  r.roc_auc = eval::roc_auc(scores, labels);
  return r;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw Error(ErrorKind::InvalidArgument, "quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorKind::InvalidArgument, "quantile level must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<SweepRow> gamma_sweep_attack(const std::vector<train::Checkpoint>& checkpoints, const AttackSet& set, std::size_t n_fake,
                                         std::uint64_t seed) {
  if (checkpoints.empty()) throw Error(ErrorKind::InvalidArgument, "gamma sweep: no checkpoints");
  if (n_fake == 0) throw Error(ErrorKind::InvalidArgument, "gamma sweep: n_fake must be positive");
  const prep::TransformSpec& spec = checkpoints.front().transform;
  std::vector<SweepRow> rows;
  for (const auto& c : checkpoints) {
    if (!(c.transform == spec)) throw Error(ErrorKind::InvalidArgument, "gamma sweep: checkpoints were fitted on different data");
    rows.push_back({c.config.gamma, fbb_attack(train::sample(c, n_fake, seed), set, spec).roc_auc});
  }
  return rows;
}

}  // namespace flowsynth::privacy
