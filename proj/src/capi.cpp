#include "flowsynth/flowsynth.h"

#include <exception>
#include <new>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "flowsynth/error.hpp"
#include "flowsynth/io.hpp"
#include "flowsynth/pipeline.hpp"
#include "flowsynth/privacy.hpp"
#include "flowsynth/synthbench.hpp"

using namespace flowsynth;

struct fs_schema {
  Schema value;
};
struct fs_table {
  Table value;
};
struct fs_config {
  train::TrainConfig value;
};
struct fs_checkpoint {
  train::Checkpoint value;
};
struct fs_report {
  io::KeyValues value;
};
struct fs_histogram {
  eval::DistanceHistogram value;
};

namespace {

thread_local std::string last_error;

fs_status code_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return FS_ERR_INVALID_ARGUMENT;
    case ErrorKind::ShapeMismatch: return FS_ERR_SHAPE;
    case ErrorKind::NonFinite: return FS_ERR_NON_FINITE;
    case ErrorKind::Io: return FS_ERR_IO;
    case ErrorKind::Parse: return FS_ERR_PARSE;
    case ErrorKind::Format: return FS_ERR_FORMAT;
    case ErrorKind::Solver: return FS_ERR_SOLVER;
  }
  return FS_ERR_INTERNAL;
}

template <class F>
fs_status guard(F&& body) {
  try {
    body();
    last_error.clear();
    return FS_OK;
  } catch (const Error& e) {
    last_error = e.what();
    return code_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return FS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return FS_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown failure";
    return FS_ERR_INTERNAL;
  }
}

template <class T>
void need(const T* p, const char* what) {
  if (!p) throw Error(ErrorKind::InvalidArgument, std::string(what) + " is NULL");
}

const prep::TransformSpec& encoding_for(const fs_checkpoint* ckpt, const Table& fallback, prep::TransformSpec& storage) {
  if (ckpt) {
    if (!(ckpt->value.transform.schema() == fallback.schema()))
      throw Error(ErrorKind::InvalidArgument, "table schema does not match the checkpoint's schema");
    return ckpt->value.transform;
  }
  storage = prep::TransformSpec::fit(fallback);
  return storage;
}

fs_step_kind step_kind(train::StepKind k) {
  switch (k) {
    case train::StepKind::Autoencoder: return FS_STEP_AUTOENCODER;
    case train::StepKind::Discriminator: return FS_STEP_DISCRIMINATOR;
    case train::StepKind::Generator: return FS_STEP_GENERATOR;
    case train::StepKind::Density: return FS_STEP_DENSITY;
    case train::StepKind::Validation: break;
  }
  return FS_STEP_VALIDATION;
}

double step_value(const train::StepEvent& e) {
  switch (e.kind) {
    case train::StepKind::Autoencoder: return e.losses.l_ae_total;
    case train::StepKind::Discriminator: return e.losses.d_loss;
    case train::StepKind::Generator: return e.losses.g_loss;
    case train::StepKind::Density: return e.losses.r_density;
    case train::StepKind::Validation: break;
  }
  return e.score;
}

}  // namespace

extern "C" {

const char* fs_version(void) { return "1.0.0"; }
const char* fs_last_error(void) { return last_error.c_str(); }

const char* fs_status_name(fs_status s) {
  switch (s) {
    case FS_OK: return "ok";
    case FS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case FS_ERR_SHAPE: return "shape mismatch";
    case FS_ERR_NON_FINITE: return "non-finite value";
    case FS_ERR_IO: return "i/o error";
    case FS_ERR_PARSE: return "parse error";
    case FS_ERR_FORMAT: return "format error";
    case FS_ERR_SOLVER: return "solver failure";
    case FS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void fs_tune_allocator(void) {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

// --- schemas

fs_status fs_schema_read(const char* path, fs_schema** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new fs_schema{io::read_schema(path)};
  });
}

fs_status fs_schema_infer(const char* csv_path, const char* label, fs_schema** out) {
  return guard([&] {
    need(csv_path, "csv_path");
    need(out, "out");
    *out = new fs_schema{io::infer_schema(csv_path, label ? label : "")};
  });
}

fs_status fs_schema_write(const fs_schema* s, const char* path) {
  return guard([&] {
    need(s, "schema");
    need(path, "path");
    io::write_schema(std::filesystem::path(path), s->value);
  });
}

size_t fs_schema_columns(const fs_schema* s) { return s ? s->value.size() : 0; }
void fs_schema_free(fs_schema* s) { delete s; }

// --- tables

fs_status fs_table_read(const char* path, const fs_schema* schema, fs_table** out) {
  return guard([&] {
    need(path, "path");
    need(schema, "schema");
    need(out, "out");
    *out = new fs_table{io::read_csv(path, schema->value)};
  });
}

fs_status fs_table_write(const fs_table* t, const char* path) {
  return guard([&] {
    need(t, "table");
    need(path, "path");
    io::write_csv(std::filesystem::path(path), t->value);
  });
}

size_t fs_table_rows(const fs_table* t) { return t ? t->value.rows() : 0; }
void fs_table_free(fs_table* t) { delete t; }

// --- configs

fs_status fs_config_default(fs_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new fs_config{};
  });
}

fs_status fs_config_benchmark(fs_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new fs_config{bench::desk_config()};
  });
}

fs_status fs_config_read(const char* path, fs_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new fs_config{io::config_from_kv(io::read_key_values(path))};
  });
}

fs_status fs_config_set(fs_config* c, const char* key, const char* value) {
  return guard([&] {
    need(c, "config");
    need(key, "key");
    need(value, "value");
    io::KeyValues merged = io::config_to_kv(c->value);
    if (!merged.has(key)) throw Error(ErrorKind::InvalidArgument, "unknown configuration key '" + std::string(key) + "'");
    io::KeyValues updated;
    for (const auto& [k, v] : merged.items()) updated.set(k, k == key ? std::string(value) : v);
    c->value = io::config_from_kv(updated);
  });
}

fs_status fs_config_write(const fs_config* c, const char* path) {
  return guard([&] {
    need(c, "config");
    need(path, "path");
    io::write_key_values(std::filesystem::path(path), io::config_to_kv(c->value));
  });
}

void fs_config_free(fs_config* c) { delete c; }

// --- training and sampling

fs_status fs_fit(const fs_table* train_t, const fs_table* val, const fs_config* config, fs_progress_fn progress, void* user,
                 fs_checkpoint** out) {
  return guard([&] {
    need(train_t, "train");
    need(val, "val");
    need(config, "config");
    need(out, "out");
    train::StepRecorder rec;
    if (progress) rec = [&](const train::StepEvent& e) { progress(step_kind(e.kind), e.iteration, step_value(e), user); };
    *out = new fs_checkpoint{train::train(train_t->value, val->value, config->value, rec)};
  });
}

fs_status fs_sample(const fs_checkpoint* c, size_t n, uint64_t seed, fs_table** out) {
  return guard([&] {
    need(c, "checkpoint");
    need(out, "out");
    *out = new fs_table{train::sample(c->value, n, seed)};
  });
}

fs_status fs_checkpoint_save(const fs_checkpoint* c, const char* path) {
  return guard([&] {
    need(c, "checkpoint");
    need(path, "path");
    io::save_checkpoint(c->value, path);
  });
}

fs_status fs_checkpoint_load(const char* path, fs_checkpoint** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new fs_checkpoint{io::load_checkpoint(path)};
  });
}

int64_t fs_checkpoint_iteration(const fs_checkpoint* c) { return c ? c->value.iteration : -1; }
double fs_checkpoint_score(const fs_checkpoint* c) { return c ? c->value.best_score : 0.0; }

fs_status fs_checkpoint_schema(const fs_checkpoint* c, fs_schema** out) {
  return guard([&] {
    need(c, "checkpoint");
    need(out, "out");
    *out = new fs_schema{c->value.transform.schema()};
  });
}

void fs_checkpoint_free(fs_checkpoint* c) { delete c; }

// --- reports

size_t fs_report_size(const fs_report* r) { return r ? r->value.items().size() : 0; }

const char* fs_report_key(const fs_report* r, size_t i) {
  if (!r || i >= r->value.items().size()) return nullptr;
  return r->value.items()[i].first.c_str();
}

const char* fs_report_value(const fs_report* r, size_t i) {
  if (!r || i >= r->value.items().size()) return nullptr;
  return r->value.items()[i].second.c_str();
}

fs_status fs_report_get(const fs_report* r, const char* key, double* out) {
  return guard([&] {
    need(r, "report");
    need(key, "key");
    need(out, "out");
    const std::string& v = r->value.get(key);
    try {
      *out = std::stod(v);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Parse, "report value of '" + std::string(key) + "' is not a number: '" + v + "'");
    }
  });
}

fs_status fs_report_write(const fs_report* r, const char* path) {
  return guard([&] {
    need(r, "report");
    need(path, "path");
    io::write_key_values(std::filesystem::path(path), r->value);
  });
}

void fs_report_free(fs_report* r) { delete r; }

// --- evaluation, distances, attack

fs_status fs_evaluate(const fs_table* fake, const fs_table* test, const char* task, const uint64_t* seeds, size_t n_seeds, fs_report** out) {
  return guard([&] {
    need(fake, "fake");
    need(test, "test");
    need(task, "task");
    need(out, "out");
    if (n_seeds == 0) throw Error(ErrorKind::InvalidArgument, "at least one evaluation seed is required");
    need(seeds, "seeds");
    *out = new fs_report{pipeline::evaluate(fake->value, test->value, eval::task_from_string(task), std::span(seeds, n_seeds))};
  });
}

fs_status fs_distances(const fs_table* real, const fs_table* fake, const fs_checkpoint* encoding, int bins, fs_histogram** out) {
  return guard([&] {
    need(real, "real");
    need(fake, "fake");
    need(out, "out");
    prep::TransformSpec fitted;
    const auto& spec = encoding_for(encoding, real->value, fitted);
    *out = new fs_histogram{eval::real_fake_distance_pdf(real->value, fake->value, spec, bins)};
  });
}

double fs_histogram_mean(const fs_histogram* h) { return h ? h->value.mean : 0.0; }
double fs_histogram_median(const fs_histogram* h) { return h ? h->value.median : 0.0; }

fs_status fs_histogram_write(const fs_histogram* h, const char* path) {
  return guard([&] {
    need(h, "histogram");
    need(path, "path");
    io::write_histogram_tsv(std::filesystem::path(path), h->value);
  });
}

void fs_histogram_free(fs_histogram* h) { delete h; }

fs_status fs_attack(const fs_table* fake, const fs_table* members, const fs_table* nonmembers, const fs_checkpoint* encoding, fs_report** out) {
  return guard([&] {
    need(fake, "fake");
    need(members, "members");
    need(nonmembers, "nonmembers");
    need(out, "out");
    prep::TransformSpec fitted;
    const auto& spec = encoding_for(encoding, members->value, fitted);
    const privacy::AttackSet set{members->value, nonmembers->value};
    *out = new fs_report{io::attack_report_kv(privacy::fbb_attack(fake->value, set, spec))};
  });
}

// --- workflows

fs_status fs_synthbench_write(const char* dir, uint64_t data_seed, const uint64_t* seeds, size_t n_seeds) {
  return guard([&] {
    need(dir, "dir");
    if (n_seeds > 0) need(seeds, "seeds");
    pipeline::write_benchmark(dir, data_seed, std::vector<std::uint64_t>(seeds, seeds + n_seeds));
  });
}

fs_status fs_run_manifest(const char* path, fs_log_fn log, void* user) {
  return guard([&] {
    need(path, "path");
    pipeline::Logger logger;
    if (log) logger = [&](const std::string& line) { log(line.c_str(), user); };
    pipeline::run_manifest(io::read_manifest(path), logger);
  });
}

}  // extern "C"
