// Command-line front end. Talks to the library only through flowsynth.h.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flowsynth/flowsynth.h"

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check(fs_status s) {
  if (s != FS_OK) {
    std::string msg = fs_last_error();
    if (msg.empty()) msg = fs_status_name(s);
    throw Failure(msg);
  }
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Schema = std::unique_ptr<fs_schema, Deleter<fs_schema, fs_schema_free>>;
using Table = std::unique_ptr<fs_table, Deleter<fs_table, fs_table_free>>;
using Config = std::unique_ptr<fs_config, Deleter<fs_config, fs_config_free>>;
using Checkpoint = std::unique_ptr<fs_checkpoint, Deleter<fs_checkpoint, fs_checkpoint_free>>;
using Report = std::unique_ptr<fs_report, Deleter<fs_report, fs_report_free>>;
using Histogram = std::unique_ptr<fs_histogram, Deleter<fs_histogram, fs_histogram_free>>;

template <class Handle, class F>
Handle make(F&& f) {
  typename Handle::pointer raw = nullptr;
  check(f(&raw));
  return Handle(raw);
}

Table load_table(const std::string& path, const fs_schema* s) {
  return make<Table>([&](fs_table** o) { return fs_table_read(path.c_str(), s, o); });
}

Checkpoint load_checkpoint(const std::string& path) {
  return make<Checkpoint>([&](fs_checkpoint** o) { return fs_checkpoint_load(path.c_str(), o); });
}

// Schema from --schema, else from the checkpoint, else inferred from a CSV.
Schema resolve_schema(const std::string& schema_path, const fs_checkpoint* ckpt, const std::string& infer_from, const std::string& label) {
  if (!schema_path.empty()) return make<Schema>([&](fs_schema** o) { return fs_schema_read(schema_path.c_str(), o); });
  if (ckpt) return make<Schema>([&](fs_schema** o) { return fs_checkpoint_schema(ckpt, o); });
  return make<Schema>([&](fs_schema** o) { return fs_schema_infer(infer_from.c_str(), label.c_str(), o); });
}

void print_report(const fs_report* r) {
  for (std::size_t i = 0; i < fs_report_size(r); ++i) std::printf("%s=%s\n", fs_report_key(r, i), fs_report_value(r, i));
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

const char* step_name(fs_step_kind k) {
  switch (k) {
    case FS_STEP_AUTOENCODER: return "ae";
    case FS_STEP_DISCRIMINATOR: return "critic";
    case FS_STEP_GENERATOR: return "generator";
    case FS_STEP_DENSITY: return "density";
    case FS_STEP_VALIDATION: return "validation";
  }
  return "?";
}

void progress(fs_step_kind kind, int64_t k, double value, void* user) {
  const bool verbose = *static_cast<bool*>(user);
  if (kind == FS_STEP_VALIDATION || verbose) std::fprintf(stderr, "[%lld] %s %.6g\n", static_cast<long long>(k), step_name(kind), value);
}

}  // namespace

int main(int argc, char** argv) {
  fs_tune_allocator();
  CLI::App app{"Tabular data synthesis with an invertible generator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(fs_version()));

  // fit
  std::string fit_train, fit_val, fit_schema, fit_label, fit_config, fit_out;
  std::vector<std::string> fit_set;
  std::optional<std::uint64_t> fit_seed;
  bool fit_benchmark = false, fit_verbose = false;
  auto* fit = app.add_subcommand("fit", "Train a model and write its checkpoint");
  fit->add_option("--train", fit_train, "Training CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--val", fit_val, "Validation CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--schema", fit_schema, "Schema file (name,kind,role per line)")->check(CLI::ExistingFile);
  fit->add_option("--label", fit_label, "Label column when the schema is inferred");
  fit->add_option("--config", fit_config, "key=value training configuration")->check(CLI::ExistingFile);
  fit->add_flag("--benchmark-config", fit_benchmark, "Start from the configuration tuned for the built-in benchmark");
  fit->add_option("--set", fit_set, "Override one configuration key (key=value), repeatable");
  fit->add_option("--seed", fit_seed, "Training seed (overrides the configuration)");
  fit->add_option("--out", fit_out, "Checkpoint path")->required();
  fit->add_flag("-v,--verbose", fit_verbose, "Print every step's loss");

  // sample
  std::string smp_ckpt, smp_out;
  std::size_t smp_n = 0;
  std::uint64_t smp_seed = 0;
  auto* smp = app.add_subcommand("sample", "Draw synthetic records from a checkpoint");
  smp->add_option("--ckpt", smp_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  smp->add_option("--n", smp_n, "Number of records")->required()->check(CLI::PositiveNumber);
  smp->add_option("--seed", smp_seed, "Sampling seed");
  smp->add_option("--out", smp_out, "Output CSV")->required();

  // eval
  std::string ev_fake, ev_test, ev_schema, ev_task = "cls", ev_out;
  std::uint64_t ev_seed = 0;
  int ev_repeats = 1;
  auto* ev = app.add_subcommand("eval", "Train downstream models on fake data and score them on test data");
  ev->add_option("--fake", ev_fake, "Fake CSV (training set of the downstream models)")->required()->check(CLI::ExistingFile);
  ev->add_option("--test", ev_test, "Test CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--schema", ev_schema, "Schema file")->required()->check(CLI::ExistingFile);
  ev->add_option("--task", ev_task, "cls or reg")->check(CLI::IsMember({"cls", "reg"}));
  ev->add_option("--seed", ev_seed, "First model seed");
  ev->add_option("--repeats", ev_repeats, "Number of model seeds (seed, seed+1, ...)")->check(CLI::PositiveNumber);
  ev->add_option("--out", ev_out, "Report path (key=value)")->required();

  // distances
  std::string ds_real, ds_fake, ds_schema, ds_ckpt, ds_label, ds_out;
  int ds_bins = 50;
  auto* ds = app.add_subcommand("distances", "Histogram of each fake record's distance to its nearest real record");
  ds->add_option("--real", ds_real, "Real CSV")->required()->check(CLI::ExistingFile);
  ds->add_option("--fake", ds_fake, "Fake CSV")->required()->check(CLI::ExistingFile);
  ds->add_option("--bins", ds_bins, "Histogram bins")->check(CLI::PositiveNumber);
  ds->add_option("--schema", ds_schema, "Schema file")->check(CLI::ExistingFile);
  ds->add_option("--ckpt", ds_ckpt, "Use this checkpoint's encoding")->check(CLI::ExistingFile);
  ds->add_option("--label", ds_label, "Label column when the schema is inferred");
  ds->add_option("--out", ds_out, "Histogram TSV")->required();

  // attack
  std::string at_fake, at_mem, at_non, at_schema, at_ckpt, at_label, at_out;
  auto* at = app.add_subcommand("attack", "Full black-box membership inference against a fake table");
  at->add_option("--fake", at_fake, "Fake CSV")->required()->check(CLI::ExistingFile);
  at->add_option("--members", at_mem, "Training records")->required()->check(CLI::ExistingFile);
  at->add_option("--nonmembers", at_non, "Held-out records (same count)")->required()->check(CLI::ExistingFile);
  at->add_option("--schema", at_schema, "Schema file")->check(CLI::ExistingFile);
  at->add_option("--ckpt", at_ckpt, "Use this checkpoint's encoding")->check(CLI::ExistingFile);
  at->add_option("--label", at_label, "Label column when the schema is inferred");
  at->add_option("--out", at_out, "Report path (key=value)")->required();

  // synthbench
  std::string sb_out;
  std::uint64_t sb_seed = 0;
  std::vector<std::uint64_t> sb_seeds{1, 2, 3};
  auto* sb = app.add_subcommand("synthbench", "Write the built-in synthetic benchmark and a manifest for it");
  sb->add_option("--out", sb_out, "Output directory")->required();
  sb->add_option("--seed", sb_seed, "Data seed");
  sb->add_option("--seeds", sb_seeds, "Training seeds listed in the manifest")->delimiter(',');

  // run
  std::string run_manifest;
  auto* run = app.add_subcommand("run", "Run every seed of a manifest end to end");
  run->add_option("--manifest", run_manifest, "Manifest file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "flowsynth: %s\n", one_line(e.what()).c_str());
    const CLI::App* scope = &app;
    for (const auto* sub : app.get_subcommands()) scope = sub;
    std::fprintf(stderr, "%s", scope->help().c_str());
    return 2;
  }

  try {
    if (*fit) {
      Config cfg;
      if (!fit_config.empty()) {
        cfg = make<Config>([&](fs_config** o) { return fs_config_read(fit_config.c_str(), o); });
      } else if (fit_benchmark) {
        cfg = make<Config>([](fs_config** o) { return fs_config_benchmark(o); });
      } else {
        cfg = make<Config>([](fs_config** o) { return fs_config_default(o); });
      }
      for (const auto& kv : fit_set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Failure("--set expects key=value, got '" + kv + "'");
        check(fs_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
      }
      if (fit_seed) check(fs_config_set(cfg.get(), "seed", std::to_string(*fit_seed).c_str()));
      const Schema s = resolve_schema(fit_schema, nullptr, fit_train, fit_label);
      const Table tr = load_table(fit_train, s.get());
      const Table va = load_table(fit_val, s.get());
      const Checkpoint ck = make<Checkpoint>([&](fs_checkpoint** o) { return fs_fit(tr.get(), va.get(), cfg.get(), progress, &fit_verbose, o); });
      check(fs_checkpoint_save(ck.get(), fit_out.c_str()));
      std::printf("best_iteration=%lld\nbest_score=%.17g\n", static_cast<long long>(fs_checkpoint_iteration(ck.get())), fs_checkpoint_score(ck.get()));
    } else if (*smp) {
      const Checkpoint ck = load_checkpoint(smp_ckpt);
      const Table t = make<Table>([&](fs_table** o) { return fs_sample(ck.get(), smp_n, smp_seed, o); });
      check(fs_table_write(t.get(), smp_out.c_str()));
    } else if (*ev) {
      const Schema s = resolve_schema(ev_schema, nullptr, "", "");
      const Table fake = load_table(ev_fake, s.get());
      const Table test = load_table(ev_test, s.get());
      std::vector<std::uint64_t> seeds;
      for (int i = 0; i < ev_repeats; ++i) seeds.push_back(ev_seed + static_cast<std::uint64_t>(i));
      const Report r = make<Report>([&](fs_report** o) { return fs_evaluate(fake.get(), test.get(), ev_task.c_str(), seeds.data(), seeds.size(), o); });
      check(fs_report_write(r.get(), ev_out.c_str()));
      print_report(r.get());
    } else if (*ds) {
      Checkpoint ck;
      if (!ds_ckpt.empty()) ck = load_checkpoint(ds_ckpt);
      const Schema s = resolve_schema(ds_schema, ck.get(), ds_real, ds_label);
      const Table real = load_table(ds_real, s.get());
      const Table fake = load_table(ds_fake, s.get());
      const Histogram h = make<Histogram>([&](fs_histogram** o) { return fs_distances(real.get(), fake.get(), ck.get(), ds_bins, o); });
      check(fs_histogram_write(h.get(), ds_out.c_str()));
      std::printf("mean=%.17g\nmedian=%.17g\n", fs_histogram_mean(h.get()), fs_histogram_median(h.get()));
    } else if (*at) {
      Checkpoint ck;
      if (!at_ckpt.empty()) ck = load_checkpoint(at_ckpt);
      const Schema s = resolve_schema(at_schema, ck.get(), at_mem, at_label);
      const Table fake = load_table(at_fake, s.get());
      const Table mem = load_table(at_mem, s.get());
      const Table non = load_table(at_non, s.get());
      const Report r = make<Report>([&](fs_report** o) { return fs_attack(fake.get(), mem.get(), non.get(), ck.get(), o); });
      check(fs_report_write(r.get(), at_out.c_str()));
      print_report(r.get());
    } else if (*sb) {
      check(fs_synthbench_write(sb_out.c_str(), sb_seed, sb_seeds.data(), sb_seeds.size()));
    } else if (*run) {
      auto log = [](const char* line, void*) { std::fprintf(stderr, "%s\n", line); };
      check(fs_run_manifest(run_manifest.c_str(), log, nullptr));
    }
  } catch (const Failure& e) {
    std::fprintf(stderr, "flowsynth %s: %s\n", app.get_subcommands().front()->get_name().c_str(), one_line(e.what()).c_str());
    return 1;
  }
  return 0;
}
