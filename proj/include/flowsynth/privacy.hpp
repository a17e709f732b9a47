#pragma once

// Full black-box membership inference: an attacker who sees only the fake
// table reconstructs each candidate record by its nearest fake neighbour.

#include <cstdint>
#include <vector>

#include "flowsynth/preprocess.hpp"
#include "flowsynth/table.hpp"
#include "flowsynth/trainer.hpp"

namespace flowsynth::privacy {

struct AttackSet {
  Table members;     // rows drawn from the training data
  Table nonmembers;  // rows the model never saw

  /// Throws unless both tables are nonempty, share a schema and have equal size.
  void validate() const;
};

/// `n` random rows from each side (without replacement).
AttackSet make_attack_set(const Table& train, const Table& holdout, std::size_t n, std::uint64_t seed);

struct AttackResult {
  double roc_auc = 0.0;
  std::vector<double> member_errors;     // nearest fake distance per member
  std::vector<double> nonmember_errors;  // same for nonmembers
};

/// Error e(x) = min over fake rows of the encoded Euclidean distance; the
/// membership score is -e(x). Fake row order does not matter.
AttackResult fbb_attack(const Table& fake, const AttackSet& set, const prep::TransformSpec& spec);

/// Linear-interpolated quantile of an unsorted sample.
double quantile(std::vector<double> v, double q);

struct SweepRow {
  double gamma = 0.0;
  double roc_auc = 0.0;
};

/// Samples `n_fake` rows from every checkpoint with `seed` and attacks each.
/// Distances use the transform of the first checkpoint; all checkpoints must
/// share it.
std::vector<SweepRow> gamma_sweep_attack(const std::vector<train::Checkpoint>& checkpoints, const AttackSet& set, std::size_t n_fake,
                                         std::uint64_t seed);

}  // namespace flowsynth::privacy
