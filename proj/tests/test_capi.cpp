#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "flowsynth/flowsynth.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("flowsynth_capi_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void tiny(fs_config* c) {
  const char* kv[][2] = {{"max_iter", "6"},   {"batch_size", "50"}, {"latent_dim", "3"}, {"ae_hidden", "6"}, {"disc_hidden", "6"},
                         {"flow_layers", "2"}, {"solver_steps", "2"}, {"period_l", "3"},   {"gamma", "0.05"}, {"seed", "3"}};
  for (auto& p : kv) REQUIRE(fs_config_set(c, p[0], p[1]) == FS_OK);
}

}  // namespace

TEST_CASE("status reporting") {
  fs_schema* s = nullptr;
  CHECK(fs_schema_read(nullptr, &s) == FS_ERR_INVALID_ARGUMENT);
  CHECK(std::string(fs_last_error()).find("NULL") != std::string::npos);
  CHECK(fs_schema_read("/nonexistent/schema.txt", &s) == FS_ERR_IO);
  CHECK(s == nullptr);
  CHECK(std::string(fs_last_error()).find("/nonexistent/schema.txt") != std::string::npos);
  CHECK(fs_checkpoint_load("/nonexistent.ckpt", nullptr) == FS_ERR_INVALID_ARGUMENT);

  fs_config* c = nullptr;
  REQUIRE(fs_config_default(&c) == FS_OK);
  CHECK(std::string(fs_last_error()).empty());
  CHECK(fs_config_set(c, "no_such_key", "1") == FS_ERR_INVALID_ARGUMENT);
  CHECK(fs_config_set(c, "period_d", "zero") == FS_ERR_PARSE);
  CHECK(fs_config_set(c, "period_d", "0") == FS_ERR_INVALID_ARGUMENT);
  CHECK(fs_config_set(c, "period_d", "3") == FS_OK);
  fs_config_free(c);
  fs_config_free(nullptr);
  CHECK(std::string(fs_status_name(FS_ERR_FORMAT)) == "format error");
  CHECK(fs_table_rows(nullptr) == 0);
}

TEST_CASE("benchmark, training, persistence and analysis through the C interface") {
  TempDir dir;
  const std::uint64_t seeds[] = {1, 2};
  REQUIRE(fs_synthbench_write(dir.path.c_str(), 0, seeds, 2) == FS_OK);
  for (const char* f : {"train.csv", "val.csv", "test.csv", "schema.txt", "manifest.txt"}) CHECK(fs::exists(dir.path / f));

  fs_schema* schema = nullptr;
  REQUIRE(fs_schema_read((dir / "schema.txt").c_str(), &schema) == FS_OK);
  CHECK(fs_schema_columns(schema) == 4);
  fs_schema* inferred = nullptr;
  REQUIRE(fs_schema_infer((dir / "train.csv").c_str(), "y", &inferred) == FS_OK);
  REQUIRE(fs_schema_write(inferred, (dir / "inferred.txt").c_str()) == FS_OK);
  CHECK(slurp(dir / "inferred.txt") == slurp(dir / "schema.txt"));
  fs_schema_free(inferred);

  fs_table *tr = nullptr, *va = nullptr, *te = nullptr;
  REQUIRE(fs_table_read((dir / "train.csv").c_str(), schema, &tr) == FS_OK);
  REQUIRE(fs_table_read((dir / "val.csv").c_str(), schema, &va) == FS_OK);
  REQUIRE(fs_table_read((dir / "test.csv").c_str(), schema, &te) == FS_OK);
  CHECK(fs_table_rows(tr) == 2000);

  fs_config* cfg = nullptr;
  REQUIRE(fs_config_default(&cfg) == FS_OK);
  tiny(cfg);
  int validations = 0;
  auto count = [](fs_step_kind k, int64_t, double, void* user) {
    if (k == FS_STEP_VALIDATION) ++*static_cast<int*>(user);
  };
  fs_checkpoint* ck = nullptr;
  REQUIRE(fs_fit(tr, va, cfg, count, &validations, &ck) == FS_OK);
  CHECK(validations >= 2);
  CHECK(fs_checkpoint_iteration(ck) >= 0);

  REQUIRE(fs_checkpoint_save(ck, (dir / "m.ckpt").c_str()) == FS_OK);
  fs_checkpoint* back = nullptr;
  REQUIRE(fs_checkpoint_load((dir / "m.ckpt").c_str(), &back) == FS_OK);
  fs_table *a = nullptr, *b = nullptr;
  REQUIRE(fs_sample(ck, 300, 9, &a) == FS_OK);
  REQUIRE(fs_sample(back, 300, 9, &b) == FS_OK);
  REQUIRE(fs_table_write(a, (dir / "a.csv").c_str()) == FS_OK);
  REQUIRE(fs_table_write(b, (dir / "b.csv").c_str()) == FS_OK);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

  fs_report* rep = nullptr;
  const std::uint64_t eval_seeds[] = {1};
  REQUIRE(fs_evaluate(te, te, "cls", eval_seeds, 1, &rep) == FS_OK);
  double emd = -1.0, f1 = -1.0;
  REQUIRE(fs_report_get(rep, "emd", &emd) == FS_OK);
  REQUIRE(fs_report_get(rep, "f1", &f1) == FS_OK);
  CHECK(emd == 0.0);
  CHECK(f1 > 0.5);
  CHECK(std::string(fs_report_key(rep, 0)) == "task");
  CHECK(fs_report_key(rep, fs_report_size(rep)) == nullptr);
  CHECK(fs_report_get(rep, "task", &f1) == FS_ERR_PARSE);
  CHECK(fs_report_get(rep, "missing", &f1) == FS_ERR_PARSE);
  CHECK(fs_evaluate(te, te, "ranking", eval_seeds, 1, &rep) == FS_ERR_INVALID_ARGUMENT);
  fs_report_free(rep);

  fs_histogram* h = nullptr;
  REQUIRE(fs_distances(tr, a, ck, 20, &h) == FS_OK);
  CHECK(fs_histogram_mean(h) > 0.0);
  REQUIRE(fs_histogram_write(h, (dir / "h.tsv").c_str()) == FS_OK);
  fs_histogram_free(h);
  REQUIRE(fs_distances(tr, tr, nullptr, 20, &h) == FS_OK);
  CHECK(fs_histogram_mean(h) == 0.0);
  fs_histogram_free(h);

  fs_report* att = nullptr;
  REQUIRE(fs_attack(a, va, va, nullptr, &att) == FS_OK);  // identical sides: every pair ties
  double auc = 0.0;
  REQUIRE(fs_report_get(att, "roc_auc", &auc) == FS_OK);
  CHECK(auc == 0.5);
  fs_report_free(att);
  CHECK(fs_attack(a, tr, va, ck, &att) == FS_ERR_INVALID_ARGUMENT);  // unbalanced
  CHECK(std::string(fs_last_error()).find("unbalanced") != std::string::npos);

  fs_table_free(a);
  fs_table_free(b);
  fs_checkpoint_free(back);
  fs_checkpoint_free(ck);
  fs_config_free(cfg);
  fs_table_free(tr);
  fs_table_free(va);
  fs_table_free(te);
  fs_schema_free(schema);
}
