#pragma once

// Mode-specific normalization of tabular records.
//
// A continuous column is modelled by a 1-D Gaussian mixture; a value is encoded
// as the one-hot of its most responsible mode followed by one scalar
// (v - mean) / (4 * stddev) clipped to [-1, 1]. A categorical column is a
// one-hot over its vocabulary.

#include <span>
#include <string>
#include <vector>

#include "flowsynth/autodiff.hpp"
#include "flowsynth/table.hpp"

namespace flowsynth::prep {

struct Mode {
  double weight = 1.0;
  double mean = 0.0;
  double stddev = 1.0;

  bool operator==(const Mode&) const = default;
};

struct ColumnTransform {
  ColumnKind kind = ColumnKind::Continuous;
  std::vector<Mode> modes;              // continuous
  std::vector<std::string> vocabulary;  // categorical, sorted

  std::size_t width() const { return kind == ColumnKind::Continuous ? modes.size() + 1 : vocabulary.size(); }
  bool operator==(const ColumnTransform&) const = default;
};

struct GmmOptions {
  int max_modes = 5;
  int max_iters = 200;
  double tol = 1e-6;             // on mean per-sample log-likelihood
  double prune_weight = 0.005;   // modes lighter than this are dropped
  double stddev_floor = 1e-4;
};

struct GmmFit {
  ColumnTransform transform;
  /// Mean per-sample log-likelihood after every EM iteration of the selected fit.
  std::vector<double> loglik_trace;
  int selected_modes = 0;
};

/// EM for every mode count in [1, max_modes], keeping the fit with the lowest
/// BIC, then pruning light modes.
GmmFit fit_gmm_traced(std::span<const double> values, const GmmOptions& opts = {});
ColumnTransform fit_gmm(std::span<const double> values, int max_modes = 5, int max_iters = 200, double tol = 1e-6);
ColumnTransform fit_vocabulary(std::span<const std::string> values);

/// Index of the mode with the largest responsibility for `v`.
std::size_t best_mode(const ColumnTransform& t, double v);

struct Slot {
  enum Kind { OneHot, Scalar };
  Kind kind;
  int offset;
  int width;
};

class TransformSpec {
 public:
  TransformSpec() = default;
  TransformSpec(Schema schema, std::vector<ColumnTransform> columns);

  static TransformSpec fit(const Table& table, const GmmOptions& opts = {});

  const Schema& schema() const { return schema_; }
  const std::vector<ColumnTransform>& columns() const { return columns_; }
  const ColumnTransform& column(std::size_t c) const { return columns_.at(c); }
  int width() const { return width_; }
  int offset(std::size_t c) const { return offsets_.at(c); }
  /// Encoded layout: one-hot groups and scalar slots in column order.
  const std::vector<Slot>& slots() const { return slots_; }

  void encode_into(const Record& r, std::span<double> out) const;
  ad::Tensor encode(const Record& r) const;
  ad::Tensor encode_table(const Table& t) const;

  /// Argmax decoding (lowest index wins ties), inverse normalization with clipping.
  Record decode(std::span<const double> v) const;
  Table decode_table(const ad::Tensor& m) const;

  bool operator==(const TransformSpec& o) const { return schema_ == o.schema_ && columns_ == o.columns_; }

 private:
  Schema schema_;
  std::vector<ColumnTransform> columns_;
  std::vector<int> offsets_;
  std::vector<Slot> slots_;
  int width_ = 0;
};

}  // namespace flowsynth::prep
