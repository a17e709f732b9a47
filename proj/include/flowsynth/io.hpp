#pragma once

// File formats: CSV tables, schema triplets, key=value documents (configs,
// manifests, reports), TSV histograms and the binary checkpoint container.
// Layouts are described in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "flowsynth/evalkit.hpp"
#include "flowsynth/privacy.hpp"
#include "flowsynth/table.hpp"
#include "flowsynth/trainer.hpp"

namespace flowsynth::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// CSV

/// Columns are matched to the schema by header name, in any order. Errors
/// cite the 1-based data row and the column name.
Table parse_csv(std::istream& in, const Schema& schema, const std::string& source = "<csv>");
Table read_csv(const fs::path& path, const Schema& schema);
/// Header plus one line per record; reals use 17 significant digits.
void write_csv(std::ostream& out, const Table& t);
void write_csv(const fs::path& path, const Table& t);
/// Header names of a CSV file (used to infer a schema when none is given).
std::vector<std::string> read_csv_header(const fs::path& path);
/// A column is continuous when every cell parses as a finite real, otherwise
/// categorical. `label`, if nonempty, names the label column (always categorical).
Schema infer_schema(const fs::path& csv_path, const std::string& label = "");

std::string format_real(double v);

// ---------------------------------------------------------------------------
// Schema file: one `name,kind,role` line per column, `#` comments.

Schema parse_schema(std::istream& in, const std::string& source = "<schema>");
Schema read_schema(const fs::path& path);
void write_schema(std::ostream& out, const Schema& s);
void write_schema(const fs::path& path, const Schema& s);

// ---------------------------------------------------------------------------
// key=value documents

class KeyValues {
 public:
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value) { set(key, format_real(value)); }
  bool has(const std::string& key) const;
  /// Throws Parse if absent.
  const std::string& get(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

/// Duplicate keys and lines without '=' are errors; blank lines and lines
/// starting with '#' are skipped; whitespace around keys and values is trimmed.
KeyValues parse_key_values(std::istream& in, const std::string& source = "<kv>");
KeyValues read_key_values(const fs::path& path);
void write_key_values(std::ostream& out, const KeyValues& kv);
void write_key_values(const fs::path& path, const KeyValues& kv);

KeyValues config_to_kv(const train::TrainConfig& c);
/// Keys absent from `kv` keep their defaults; unknown keys are errors unless
/// listed in `ignore`.
train::TrainConfig config_from_kv(const KeyValues& kv, const std::vector<std::string>& ignore = {});

// ---------------------------------------------------------------------------
// Run manifest: a config document plus data paths and seeds.

struct RunManifest {
  fs::path train;
  fs::path val;
  fs::path test;
  fs::path schema;
  fs::path checkpoint_dir;
  fs::path output_dir;
  std::vector<std::uint64_t> seeds;
  std::size_t n_samples = 0;  // 0: as many as the training table
  int bins = 50;
  eval::Task task = eval::Task::Classification;
  train::TrainConfig config;
};

/// Relative paths resolve against the manifest's directory. Input files must
/// exist; the seed list must be nonempty.
RunManifest read_manifest(const fs::path& path);

// ---------------------------------------------------------------------------
// Reports

KeyValues eval_report_kv(const eval::EvalReport& r);
/// roc_auc, counts and the 0/25/50/75/100% quantiles of both error samples.
KeyValues attack_report_kv(const privacy::AttackResult& r);
void write_histogram_tsv(std::ostream& out, const eval::DistanceHistogram& h);
void write_histogram_tsv(const fs::path& path, const eval::DistanceHistogram& h);

// ---------------------------------------------------------------------------
// Checkpoint container

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const train::Checkpoint& c);
train::Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const train::Checkpoint& c, const fs::path& path);
train::Checkpoint load_checkpoint(const fs::path& path);

std::uint64_t fnv1a64(const void* data, std::size_t n);

}  // namespace flowsynth::io
