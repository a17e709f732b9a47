#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"

#ifndef FLOWSYNTH_CLI
#error "FLOWSYNTH_CLI must point at the command-line binary"
#endif

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("flowsynth_cli_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Outcome {
  int code;
  std::string err;
};

Outcome cli(const std::string& args, const fs::path& dir) {
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string(FLOWSYNTH_CLI) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

const char* kTiny =
    "max_iter=4\nbatch_size=100\nlatent_dim=3\nae_hidden=6\ndisc_hidden=6\nflow_layers=2\nsolver_steps=2\nperiod_l=2\ngamma=0.05\n";

void head_lines(const fs::path& from, const fs::path& to, int n) {
  std::ifstream in(from);
  std::ofstream out(to);
  std::string line;
  for (int i = 0; i <= n && std::getline(in, line); ++i) out << line << '\n';
}

}  // namespace

TEST_CASE("full pipeline through the command line") {
  TempDir t;
  const fs::path d = t.path;
  const std::string D = d.string();
  REQUIRE(cli("synthbench --out " + D + " --seeds 1", d).code == 0);
  std::ofstream(d / "tiny.cfg") << kTiny;

  const std::string data = " --train " + D + "/train.csv --val " + D + "/val.csv --schema " + D + "/schema.txt";
  REQUIRE(cli("fit" + data + " --config " + D + "/tiny.cfg --seed 5 --out " + D + "/m.ckpt", d).code == 0);
  REQUIRE(cli("sample --ckpt " + D + "/m.ckpt --n 500 --seed 3 --out " + D + "/f1.csv", d).code == 0);
  REQUIRE(cli("sample --ckpt " + D + "/m.ckpt --n 500 --seed 3 --out " + D + "/f2.csv", d).code == 0);
  REQUIRE(cli("sample --ckpt " + D + "/m.ckpt --n 500 --seed 4 --out " + D + "/f3.csv", d).code == 0);
  CHECK(slurp(d / "f1.csv") == slurp(d / "f2.csv"));
  CHECK(slurp(d / "f1.csv") != slurp(d / "f3.csv"));

  REQUIRE(cli("eval --fake " + D + "/test.csv --test " + D + "/test.csv --schema " + D + "/schema.txt --task cls --out " + D + "/eval.txt", d).code == 0);
  CHECK(slurp(d / "eval.txt").find("\nemd=0\n") != std::string::npos);
  REQUIRE(cli("eval --fake " + D + "/f1.csv --test " + D + "/test.csv --schema " + D + "/schema.txt --repeats 2 --out " + D + "/eval2.txt", d).code == 0);
  CHECK(slurp(d / "eval2.txt").find("roc_auc=") != std::string::npos);

  REQUIRE(cli("distances --real " + D + "/train.csv --fake " + D + "/f1.csv --bins 10 --ckpt " + D + "/m.ckpt --out " + D + "/h.tsv", d).code == 0);
  CHECK(slurp(d / "h.tsv").find("bin_center\tdensity\n") != std::string::npos);
  REQUIRE(cli("distances --real " + D + "/train.csv --fake " + D + "/f1.csv --out " + D + "/h2.tsv", d).code == 0);  // inferred schema

  head_lines(d / "train.csv", d / "members.csv", 500);
  REQUIRE(cli("attack --fake " + D + "/f1.csv --members " + D + "/members.csv --nonmembers " + D + "/val.csv --ckpt " + D + "/m.ckpt --out " + D +
                  "/attack.txt",
              d)
              .code == 0);
  const std::string att = slurp(d / "attack.txt");
  CHECK(att.find("roc_auc=") == 0);
  CHECK(att.find("member_error_median=") != std::string::npos);

  SUBCASE("manifest runs are reproducible") {
    std::string manifest = "train=train.csv\nval=val.csv\ntest=test.csv\nschema=schema.txt\nseeds=1,2\nbins=10\n";
    std::ofstream(d / "a.txt") << manifest << "output_dir=out_a\n" << kTiny;
    std::ofstream(d / "b.txt") << manifest << "output_dir=out_b\n" << kTiny;
    REQUIRE(cli("run --manifest " + D + "/a.txt", d).code == 0);
    REQUIRE(cli("run --manifest " + D + "/b.txt", d).code == 0);
    for (const char* f : {"seed_1.ckpt", "seed_2.ckpt", "summary.tsv", "seed_1/fake.csv", "seed_1/eval.txt", "seed_1/distances.tsv", "seed_2/attack.txt"}) {
      CAPTURE(f);
      REQUIRE(fs::exists(d / "out_a" / f));
      CHECK(slurp(d / "out_a" / f) == slurp(d / "out_b" / f));
    }
    CHECK(slurp(d / "out_a/seed_1.ckpt") != slurp(d / "out_a/seed_2.ckpt"));
  }

  SUBCASE("failures exit nonzero with one diagnostic line") {
    Outcome o = cli("sample --ckpt " + D + "/m.ckpt --n 5 --out " + D + "/x.csv --frobnicate", d);
    CHECK(o.code == 2);
    CHECK(o.err.find("--frobnicate") != std::string::npos);
    CHECK(o.err.find("Usage:") != std::string::npos);
    CHECK(cli("", d).code == 2);

    o = cli("sample --ckpt " + D + "/train.csv --n 5 --out " + D + "/x.csv", d);
    CHECK(o.code == 1);
    CHECK(o.err.find("not a checkpoint") != std::string::npos);
    CHECK(std::count(o.err.begin(), o.err.end(), '\n') == 1);

    std::string bad = slurp(d / "val.csv");
    const auto third = bad.find('\n', bad.find('\n', bad.find('\n') + 1) + 1);
    bad.replace(third + 1, bad.find(',', third) - third - 1, "abc");
    std::ofstream(d / "bad.csv") << bad;
    o = cli("fit --train " + D + "/train.csv --val " + D + "/bad.csv --schema " + D + "/schema.txt --config " + D + "/tiny.cfg --out " + D + "/n.ckpt", d);
    CHECK(o.code == 1);
    CHECK(o.err.find("row 3") != std::string::npos);
    CHECK(std::count(o.err.begin(), o.err.end(), '\n') == 1);

    o = cli("fit" + data + " --set nonsense=1 --out " + D + "/n.ckpt", d);
    CHECK(o.code == 1);
    CHECK(o.err.find("nonsense") != std::string::npos);
  }
}
