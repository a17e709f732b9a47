#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace flowsynth {

enum class ColumnKind { Continuous, Categorical };
enum class ColumnRole { Feature, Label };

const char* to_string(ColumnKind k);
const char* to_string(ColumnRole r);

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  ColumnRole role = ColumnRole::Feature;

  bool operator==(const ColumnSpec&) const = default;
};

class Schema {
 public:
  Schema() = default;
  /// Throws on duplicate names, more than one label, or no feature column.
  explicit Schema(std::vector<ColumnSpec> columns);

  const std::vector<ColumnSpec>& columns() const { return columns_; }
  std::size_t size() const { return columns_.size(); }
  const ColumnSpec& operator[](std::size_t i) const { return columns_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;
  std::optional<std::size_t> label_index() const;
  /// Throws unless exactly one label column exists.
  std::size_t require_label() const;

  bool operator==(const Schema&) const = default;

 private:
  std::vector<ColumnSpec> columns_;
};

using Value = std::variant<double, std::string>;
using Record = std::vector<Value>;

/// Column-major table. Continuous columns populate `reals`, categorical
/// columns populate `cats`.
class Table {
 public:
  struct Column {
    std::vector<double> reals;
    std::vector<std::string> cats;
    bool operator==(const Column&) const = default;
  };

  Table() = default;
  explicit Table(Schema schema);

  const Schema& schema() const { return schema_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return schema_.size(); }
  const Column& column(std::size_t c) const { return columns_.at(c); }
  const std::vector<double>& reals(std::size_t c) const { return columns_.at(c).reals; }
  const std::vector<std::string>& cats(std::size_t c) const { return columns_.at(c).cats; }

  void append(const Record& r);
  Record row(std::size_t i) const;
  Table take(const std::vector<std::size_t>& indices) const;
  /// Replaces categorical column `c` (used for label shuffling probes).
  void set_cats(std::size_t c, std::vector<std::string> values);
  void set_reals(std::size_t c, std::vector<double> values);

  bool operator==(const Table&) const = default;

 private:
  Schema schema_;
  std::vector<Column> columns_;
  std::size_t rows_ = 0;
};

}  // namespace flowsynth
