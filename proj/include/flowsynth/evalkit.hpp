#pragma once

// Task-oriented evaluation: fit simple predictors on one table, score them on
// another. Plus column-wise EMD and nearest-real distance diagnostics.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flowsynth/autodiff.hpp"
#include "flowsynth/preprocess.hpp"
#include "flowsynth/table.hpp"

namespace flowsynth::eval {

using ad::Tensor;

enum class Task { Classification, Regression };
const char* to_string(Task t);
Task task_from_string(const std::string& s);

/// Feature matrix for downstream models: continuous columns z-scored with
/// statistics of the fitting table, categorical columns one-hot over its
/// vocabulary (unseen categories map to all zeros). The label is excluded.
class Featurizer {
 public:
  static Featurizer fit(const Table& t);
  Tensor transform(const Table& t) const;
  int width() const { return width_; }

 private:
  struct Col {
    std::size_t index;
    ColumnKind kind;
    double mean = 0.0;
    double scale = 1.0;
    std::vector<std::string> vocabulary;
  };
  std::vector<Col> cols_;
  int width_ = 0;
};

// ---------------------------------------------------------------------------
// Downstream models. Labels are class indices in [0, classes).

class DecisionTree {
 public:
  explicit DecisionTree(int max_depth = 8) : max_depth_(max_depth) {}
  void fit(const Tensor& x, std::span<const int> y, int classes);
  Tensor predict_proba(const Tensor& x) const;

 private:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> proba;
  };
  int build(const Tensor& x, std::span<const int> y, std::vector<int>& idx, int depth);
  int max_depth_;
  int classes_ = 0;
  std::vector<Node> nodes_;
};

class LogisticRegression {
 public:
  void fit(const Tensor& x, std::span<const int> y, int classes);
  Tensor predict_proba(const Tensor& x) const;

 private:
  Tensor w_;  // (features + 1) x classes, last row is the bias
};

/// One hidden ReLU layer; softmax output for classification, linear for regression.
class MlpModel {
 public:
  MlpModel(int hidden, std::uint64_t seed, int epochs = 60, int batch = 64, double lr = 1e-3)
      : hidden_(hidden), seed_(seed), epochs_(epochs), batch_(batch), lr_(lr) {}
  void fit_classifier(const Tensor& x, std::span<const int> y, int classes);
  void fit_regressor(const Tensor& x, std::span<const double> y);
  Tensor predict_proba(const Tensor& x) const;
  std::vector<double> predict(const Tensor& x) const;

 private:
  void train(const Tensor& x, const Tensor& target, bool softmax);
  Tensor forward(const Tensor& x) const;
  int hidden_;
  std::uint64_t seed_;
  int epochs_;
  int batch_;
  double lr_;
  Tensor w1_, b1_, w2_, b2_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
};

class LinearRegression {
 public:
  void fit(const Tensor& x, std::span<const double> y);
  std::vector<double> predict(const Tensor& x) const;

 private:
  Eigen::VectorXd coef_;  // features + intercept
};

// ---------------------------------------------------------------------------
// Metrics

/// Mann-Whitney AUC: P(score of a random positive > a random negative),
/// ties counted one half. Throws unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct ClassificationScores {
  double accuracy = 0.0;
  double f1 = 0.0;  // binary: positive class index 1; multi-class: macro
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  double roc_auc = 0.0;  // binary, or one-vs-rest macro average; NaN if undefined
};
ClassificationScores score_classification(std::span<const int> truth, const Tensor& proba);

struct RegressionScores {
  double r2 = 0.0;
  double explained_variance = 0.0;
  double mse = 0.0;
  double mae = 0.0;
};
RegressionScores score_regression(std::span<const double> truth, std::span<const double> pred);

// ---------------------------------------------------------------------------

using Metrics = std::vector<std::pair<std::string, double>>;

struct EvalReport {
  Task task = Task::Classification;
  Metrics averaged;  // over models and seeds
  std::vector<std::pair<std::string, Metrics>> per_model;  // averaged over seeds

  /// Throws if absent.
  double value(const std::string& metric) const;
};

/// Trains the model set on `train` and scores on `test` once per seed.
/// Classification: decision tree (depth 8), multinomial logistic regression,
/// MLP(64). Regression: least squares, MLP(64).
EvalReport task_eval(const Table& train, const Table& test, Task task, std::span<const std::uint64_t> seeds);

/// Mean over columns of W1 (continuous) or total variation (categorical).
double column_emd(const Table& real, const Table& fake);
/// Exact 1-D Wasserstein-1 between two empirical samples.
double wasserstein1(std::span<const double> a, std::span<const double> b);
/// Total variation between category frequency vectors.
double categorical_tv(std::span<const std::string> a, std::span<const std::string> b);

struct DistanceHistogram {
  std::vector<double> centers;
  std::vector<double> density;
  double bin_width = 0.0;
  double mean = 0.0;
  double median = 0.0;
  std::vector<double> distances;  // one per fake record
};

/// Euclidean distance from each row of `queries` to its nearest row of `refs`.
std::vector<double> nearest_distances(const Tensor& queries, const Tensor& refs);

/// Nearest-real distance of every fake record in the shared encoded space.
DistanceHistogram real_fake_distance_pdf(const Table& real, const Table& fake, const prep::TransformSpec& spec, int bins);
DistanceHistogram histogram(std::vector<double> distances, int bins);

}  // namespace flowsynth::eval
