#include "flowsynth/table.hpp"

#include <unordered_set>

#include "flowsynth/error.hpp"

namespace flowsynth {

const char* to_string(ColumnKind k) { return k == ColumnKind::Continuous ? "continuous" : "categorical"; }
const char* to_string(ColumnRole r) { return r == ColumnRole::Feature ? "feature" : "label"; }

Schema::Schema(std::vector<ColumnSpec> columns) : columns_(std::move(columns)) {
  std::unordered_set<std::string> seen;
  std::size_t labels = 0;
  std::size_t features = 0;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw Error(ErrorKind::InvalidArgument, "schema column with empty name");
    if (!seen.insert(c.name).second) throw Error(ErrorKind::InvalidArgument, "duplicate column name '" + c.name + "'");
    (c.role == ColumnRole::Label ? labels : features)++;
  }
  if (labels > 1) throw Error(ErrorKind::InvalidArgument, "schema declares more than one label column");
  if (features == 0) throw Error(ErrorKind::InvalidArgument, "schema needs at least one feature column");
}

std::optional<std::size_t> Schema::find(const std::string& name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Schema::label_index() const {
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    if (columns_[i].role == ColumnRole::Label) return i;
  }
  return std::nullopt;
}

std::size_t Schema::require_label() const {
  auto l = label_index();
  if (!l) throw Error(ErrorKind::InvalidArgument, "a downstream task needs a label column in the schema");
  return *l;
}

Table::Table(Schema schema) : schema_(std::move(schema)), columns_(schema_.size()) {}

void Table::append(const Record& r) {
  if (r.size() != schema_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "record has " + std::to_string(r.size()) + " fields, schema has " + std::to_string(schema_.size()));
  }
  for (std::size_t c = 0; c < r.size(); ++c) {
    if (schema_[c].kind == ColumnKind::Continuous) {
      const double* v = std::get_if<double>(&r[c]);
      if (v == nullptr) throw Error(ErrorKind::InvalidArgument, "column '" + schema_[c].name + "' expects a real value");
    } else if (std::get_if<std::string>(&r[c]) == nullptr) {
      throw Error(ErrorKind::InvalidArgument, "column '" + schema_[c].name + "' expects a category");
    }
  }
  for (std::size_t c = 0; c < r.size(); ++c) {
    if (schema_[c].kind == ColumnKind::Continuous) {
      columns_[c].reals.push_back(std::get<double>(r[c]));
    } else {
      columns_[c].cats.push_back(std::get<std::string>(r[c]));
    }
  }
  ++rows_;
}

Record Table::row(std::size_t i) const {
  if (i >= rows_) throw Error(ErrorKind::InvalidArgument, "row index out of range");
  Record r;
  r.reserve(schema_.size());
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    if (schema_[c].kind == ColumnKind::Continuous) {
      r.emplace_back(columns_[c].reals[i]);
    } else {
      r.emplace_back(columns_[c].cats[i]);
    }
  }
  return r;
}

Table Table::take(const std::vector<std::size_t>& indices) const {
  Table out(schema_);
  for (std::size_t c = 0; c < schema_.size(); ++c) {
    auto& dst = out.columns_[c];
    if (schema_[c].kind == ColumnKind::Continuous) {
      dst.reals.reserve(indices.size());
      for (auto i : indices) dst.reals.push_back(columns_[c].reals.at(i));
    } else {
      dst.cats.reserve(indices.size());
      for (auto i : indices) dst.cats.push_back(columns_[c].cats.at(i));
    }
  }
  out.rows_ = indices.size();
  return out;
}

void Table::set_cats(std::size_t c, std::vector<std::string> values) {
  if (schema_[c].kind != ColumnKind::Categorical || values.size() != rows_) throw Error(ErrorKind::InvalidArgument, "set_cats: wrong column kind or length");
  columns_[c].cats = std::move(values);
}

void Table::set_reals(std::size_t c, std::vector<double> values) {
  if (schema_[c].kind != ColumnKind::Continuous || values.size() != rows_) throw Error(ErrorKind::InvalidArgument, "set_reals: wrong column kind or length");
  columns_[c].reals = std::move(values);
}

}  // namespace flowsynth
