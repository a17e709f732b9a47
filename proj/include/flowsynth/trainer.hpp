#pragma once

// Interleaved autoencoder / critic / generator / density training with
// periodic validation and best-model selection.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flowsynth/autodiff.hpp"
#include "flowsynth/evalkit.hpp"
#include "flowsynth/networks.hpp"
#include "flowsynth/nodeflow.hpp"
#include "flowsynth/preprocess.hpp"
#include "flowsynth/table.hpp"

namespace flowsynth::train {

using ad::Tensor;
using ad::Var;

enum class ValidationMetric { F1, MacroF1, Mse };
const char* to_string(ValidationMetric m);
ValidationMetric validation_metric_from_string(const std::string& s);
inline bool higher_is_better(ValidationMetric m) { return m != ValidationMetric::Mse; }
inline eval::Task task_of(ValidationMetric m) { return m == ValidationMetric::Mse ? eval::Task::Regression : eval::Task::Classification; }

struct TrainConfig {
  std::int64_t max_iter = 1000;
  int period_d = 1;
  int period_g = 1;
  int period_l = 6;
  double gamma = 0.0;
  int batch_size = 2000;  // clamped to the number of training rows
  int latent_dim = 128;   // dim(h) = dim(z)

  int enc_layers = 2;    // n_e
  int dec_layers = 2;    // n_r
  int disc_layers = 2;   // n_d
  int ae_hidden = 128;
  int disc_hidden = 128;
  double dropout = 0.5;      // a
  double leaky_slope = 0.2;  // b
  int flow_layers = 3;       // K
  double flow_width_mult = 1.0;  // M
  flow::GateKind gate = flow::GateKind::Time;

  flow::SolverConfig solver;
  flow::ProbeKind probe = flow::ProbeKind::Rademacher;
  int probe_samples = 1;

  double lr = 2e-4;
  double gen_lr = 0.0;   // generator and density steps; 0: use lr
  double disc_lr = 0.0;  // critic steps; 0: use lr
  double beta1 = 0.9;
  double beta2 = 0.999;
  double gp_lambda = 10.0;
  double adv_weight = 1.0;  // weight of the critic term in the autoencoder step
  double adv_sign = 1.0;    // +1: encoder minimizes -mean D(E(x)); -1: maximizes it
  bool adv_decoder = false; // also route the critic term through the decoder

  ValidationMetric metric = ValidationMetric::F1;
  int validation_interval = 1;  // in epochs
  std::uint64_t seed = 0;

  /// Throws InvalidArgument naming the first offending field.
  void validate() const;
  nets::NetArch net_arch(int data_dim) const;
  flow::FlowArch flow_arch() const;
  enum class Net { Autoencoder, Critic, Generator };
  ad::AdamConfig adam(Net which = Net::Autoencoder) const;

  bool operator==(const TrainConfig&) const = default;
};

struct ValidationRecord {
  std::int64_t iteration = 0;
  double score = 0.0;
  bool operator==(const ValidationRecord&) const = default;
};

/// Self-contained model snapshot: everything sampling and validation need.
struct Checkpoint {
  TrainConfig config;
  prep::TransformSpec transform;
  nets::Mlp encoder;
  nets::Mlp decoder;
  nets::Mlp discriminator;
  flow::OdeFunc generator;
  std::int64_t iteration = 0;  // iteration at which these parameters were taken
  double best_score = 0.0;
  std::vector<ValidationRecord> history;  // every validation of the run
};

bool same_parameters(const Checkpoint& a, const Checkpoint& b);

enum class StepKind { Autoencoder, Discriminator, Generator, Density, Validation };
const char* to_string(StepKind k);

struct StepEvent {
  StepKind kind;
  std::int64_t iteration;
  nets::LossReport losses;  // fields relevant to the step are filled
  double score = 0.0;       // validation steps only
};

using StepRecorder = std::function<void(const StepEvent&)>;

/// Runs the training schedule and returns the best checkpoint. Iterations are
/// k = 1..max_iter; each runs an autoencoder step, then a critic step when
/// k % period_d == 0, a generator step when k % period_g == 0 and a density
/// step when k % period_l == 0 (a no-op update when gamma == 0). Validation
/// runs before the first iteration, every `validation_interval` epochs and
/// after the last iteration.
Checkpoint train(const Table& train_table, const Table& val_table, const TrainConfig& config, const StepRecorder& recorder = {});

/// Samples |val| records from the checkpoint and scores them with task_eval.
double validate(const Checkpoint& ckpt, const Table& val_table, std::uint64_t seed);

/// Metric of `fake` used as a training set against `val`. A single eval seed.
double score_fake(const Table& fake, const Table& val, ValidationMetric metric, std::uint64_t seed);

/// z ~ N(0, I), generate, decode, inverse-transform.
Table sample(const Checkpoint& ckpt, std::size_t n, std::uint64_t seed);

/// Decoder output before inverse transformation (rows x encoded width).
Tensor sample_encoded(const Checkpoint& ckpt, std::size_t n, std::uint64_t seed);

}  // namespace flowsynth::train
