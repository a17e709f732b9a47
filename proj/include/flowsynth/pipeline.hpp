#pragma once

// Multi-step workflows shared by the command-line tool and the C API:
// evaluation reports, benchmark export and manifest-driven runs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowsynth/io.hpp"

namespace flowsynth::pipeline {

namespace fs = std::filesystem;

/// task_eval of `fake` against `test` plus the mean column EMD under key `emd`.
io::KeyValues evaluate(const Table& fake, const Table& test, eval::Task task, std::span<const std::uint64_t> seeds);

/// Writes train.csv, val.csv, test.csv, schema.txt and a manifest.txt running
/// the benchmark configuration over `seeds`.
void write_benchmark(const fs::path& dir, std::uint64_t data_seed, const std::vector<std::uint64_t>& seeds);

struct SeedArtifacts {
  std::uint64_t seed = 0;
  fs::path checkpoint;
  fs::path fake_csv;
  fs::path eval_report;
  fs::path histogram;
  fs::path attack_report;
  double metric = 0.0;  // validation metric of the fake table on the test set
  double emd = 0.0;
  double mean_distance = 0.0;
  double attack_auc = 0.0;
};

using Logger = std::function<void(const std::string&)>;

/// For every seed: train, save the checkpoint, sample, then write the
/// evaluation report, distance histogram and attack report. A summary.tsv
/// with one line per seed goes to the output directory.
std::vector<SeedArtifacts> run_manifest(const io::RunManifest& m, const Logger& log = {});

}  // namespace flowsynth::pipeline
