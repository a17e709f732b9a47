#include "flowsynth/pipeline.hpp"

#include <algorithm>
#include <fstream>

#include "flowsynth/error.hpp"
#include "flowsynth/privacy.hpp"
#include "flowsynth/synthbench.hpp"

namespace flowsynth::pipeline {

io::KeyValues evaluate(const Table& fake, const Table& test, eval::Task task, std::span<const std::uint64_t> seeds) {
  io::KeyValues kv = io::eval_report_kv(eval::task_eval(fake, test, task, seeds));
  kv.set("emd", eval::column_emd(test, fake));
  return kv;
}

void write_benchmark(const fs::path& dir, std::uint64_t data_seed, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "benchmark manifest needs at least one seed");
  fs::create_directories(dir);
  const bench::Benchmark b = bench::make_benchmark(data_seed);
  io::write_csv(dir / "train.csv", b.train);
  io::write_csv(dir / "val.csv", b.val);
  io::write_csv(dir / "test.csv", b.test);
  io::write_schema(dir / "schema.txt", bench::benchmark_schema());

  io::KeyValues kv;
  kv.set("train", "train.csv");
  kv.set("val", "val.csv");
  kv.set("test", "test.csv");
  kv.set("schema", "schema.txt");
  kv.set("output_dir", "run");
  std::string list;
  for (std::size_t i = 0; i < seeds.size(); ++i) list += (i ? "," : "") + std::to_string(seeds[i]);
  kv.set("seeds", list);
  kv.set("task", "cls");
  const io::KeyValues config = io::config_to_kv(bench::desk_config());
  for (const auto& [k, v] : config.items()) {
    if (k != "seed") kv.set(k, v);
  }
  io::write_key_values(dir / "manifest.txt", kv);
}

std::vector<SeedArtifacts> run_manifest(const io::RunManifest& m, const Logger& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const Schema schema = io::read_schema(m.schema);
  const Table tr = io::read_csv(m.train, schema);
  const Table va = io::read_csv(m.val, schema);
  const Table te = io::read_csv(m.test, schema);
  fs::create_directories(m.checkpoint_dir);
  fs::create_directories(m.output_dir);

  std::vector<SeedArtifacts> out;
  for (std::uint64_t seed : m.seeds) {
    SeedArtifacts a;
    a.seed = seed;
    train::TrainConfig cfg = m.config;
    cfg.seed = seed;
    say("seed " + std::to_string(seed) + ": training for " + std::to_string(cfg.max_iter) + " iterations");
    const train::Checkpoint ck = train::train(tr, va, cfg);
    a.checkpoint = m.checkpoint_dir / ("seed_" + std::to_string(seed) + ".ckpt");
    io::save_checkpoint(ck, a.checkpoint);

    const fs::path dir = m.output_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const Table fake = train::sample(ck, m.n_samples ? m.n_samples : tr.rows(), seed);
    a.fake_csv = dir / "fake.csv";
    io::write_csv(a.fake_csv, fake);

    const std::uint64_t eval_seeds[] = {seed};
    const io::KeyValues report = evaluate(fake, te, m.task, eval_seeds);
    a.eval_report = dir / "eval.txt";
    io::write_key_values(a.eval_report, report);
    a.metric = std::stod(report.get(m.task == eval::Task::Regression ? "r2" : "f1"));
    a.emd = std::stod(report.get("emd"));

    const eval::DistanceHistogram h = eval::real_fake_distance_pdf(tr, fake, ck.transform, m.bins);
    a.histogram = dir / "distances.tsv";
    io::write_histogram_tsv(a.histogram, h);
    a.mean_distance = h.mean;

    const auto set = privacy::make_attack_set(tr, te, std::min(tr.rows(), te.rows()), seed);
    const privacy::AttackResult att = privacy::fbb_attack(fake, set, ck.transform);
    a.attack_report = dir / "attack.txt";
    io::write_key_values(a.attack_report, io::attack_report_kv(att));
    a.attack_auc = att.roc_auc;
    say("seed " + std::to_string(seed) + ": best iteration " + std::to_string(ck.iteration) + ", " +
        (m.task == eval::Task::Regression ? "r2 " : "f1 ") + io::format_real(a.metric) + ", attack auc " + io::format_real(a.attack_auc));
    out.push_back(a);
  }

  std::ofstream summary(m.output_dir / "summary.tsv");
  summary << "seed\tmetric\temd\tmean_distance\tattack_auc\n";
  for (const auto& a : out) {
    summary << a.seed << '\t' << io::format_real(a.metric) << '\t' << io::format_real(a.emd) << '\t' << io::format_real(a.mean_distance) << '\t'
            << io::format_real(a.attack_auc) << '\n';
  }
  if (!summary) throw Error(ErrorKind::Io, "cannot write " + (m.output_dir / "summary.tsv").string());
  return out;
}

}  // namespace flowsynth::pipeline
