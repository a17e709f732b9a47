#include "flowsynth/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "flowsynth/rng.hpp"

namespace flowsynth::eval {

const char* to_string(Task t) { return t == Task::Classification ? "cls" : "reg"; }

Task task_from_string(const std::string& s) {
  if (s == "cls" || s == "classification") return Task::Classification;
  if (s == "reg" || s == "regression") return Task::Regression;
  throw Error(ErrorKind::InvalidArgument, "unknown task '" + s + "' (expected cls or reg)");
}

// ---------------------------------------------------------------------------
// Featurizer

Featurizer Featurizer::fit(const Table& t) {
  if (t.rows() == 0) throw Error(ErrorKind::InvalidArgument, "cannot fit features on an empty table");
  Featurizer f;
  for (std::size_t c = 0; c < t.cols(); ++c) {
    const auto& spec = t.schema()[c];
    if (spec.role == ColumnRole::Label) continue;
    Col col{c, spec.kind, 0.0, 1.0, {}};
    if (spec.kind == ColumnKind::Continuous) {
      // Sorted summation keeps the statistics independent of row order.
      std::vector<double> v = t.reals(c);
      std::sort(v.begin(), v.end());
      double s = 0.0;
      for (double x : v) s += x;
      col.mean = s / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - col.mean) * (x - col.mean);
      const double sd = std::sqrt(ss / static_cast<double>(v.size()));
      col.scale = sd > 0.0 ? sd : 1.0;
      f.width_ += 1;
    } else {
      col.vocabulary = t.cats(c);
      std::sort(col.vocabulary.begin(), col.vocabulary.end());
      col.vocabulary.erase(std::unique(col.vocabulary.begin(), col.vocabulary.end()), col.vocabulary.end());
      f.width_ += static_cast<int>(col.vocabulary.size());
    }
    f.cols_.push_back(std::move(col));
  }
  return f;
}

Tensor Featurizer::transform(const Table& t) const {
  Tensor x = Tensor::Zero(static_cast<Eigen::Index>(t.rows()), width_);
  int off = 0;
  for (const auto& col : cols_) {
    if (col.index >= t.cols()) throw Error(ErrorKind::ShapeMismatch, "featurizer: table has fewer columns than expected");
    if (col.kind == ColumnKind::Continuous) {
      const auto& v = t.reals(col.index);
      for (std::size_t r = 0; r < t.rows(); ++r) x(static_cast<Eigen::Index>(r), off) = (v[r] - col.mean) / col.scale;
      off += 1;
    } else {
      const auto& v = t.cats(col.index);
      for (std::size_t r = 0; r < t.rows(); ++r) {
        auto it = std::lower_bound(col.vocabulary.begin(), col.vocabulary.end(), v[r]);
        if (it != col.vocabulary.end() && *it == v[r]) x(static_cast<Eigen::Index>(r), off + static_cast<int>(it - col.vocabulary.begin())) = 1.0;
      }
      off += static_cast<int>(col.vocabulary.size());
    }
  }
  return x;
}

// ---------------------------------------------------------------------------
// Decision tree (Gini)

namespace {

double gini(const std::vector<double>& counts, double n) {
  if (n <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return 1.0 - s;
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    double s = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      p(r, c) = std::exp(logits(r, c) - m);
      s += p(r, c);
    }
    p.row(r) /= s;
  }
  return p;
}

Tensor one_hot(std::span<const int> y, int classes) {
  Tensor t = Tensor::Zero(static_cast<Eigen::Index>(y.size()), classes);
  for (std::size_t i = 0; i < y.size(); ++i) t(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return t;
}

void check_fit_input(const Tensor& x, std::size_t n) {
  if (x.rows() == 0) throw Error(ErrorKind::InvalidArgument, "cannot fit a model on zero rows");
  if (static_cast<std::size_t>(x.rows()) != n) throw Error(ErrorKind::ShapeMismatch, "feature and label row counts differ");
}

}  // namespace

void DecisionTree::fit(const Tensor& x, std::span<const int> y, int classes) {
  check_fit_input(x, y.size());
  classes_ = classes;
  nodes_.clear();
  std::vector<int> idx(y.size());
  std::iota(idx.begin(), idx.end(), 0);
  build(x, y, idx, 0);
}

int DecisionTree::build(const Tensor& x, std::span<const int> y, std::vector<int>& idx, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  std::vector<double> counts(static_cast<std::size_t>(classes_), 0.0);
  for (int i : idx) counts[static_cast<std::size_t>(y[static_cast<std::size_t>(i)])] += 1.0;
  const double n = static_cast<double>(idx.size());
  std::vector<double> proba(counts);
  for (double& p : proba) p /= n;
  nodes_[static_cast<std::size_t>(id)].proba = proba;

  const double parent = gini(counts, n);
  if (depth >= max_depth_ || idx.size() < 2 || parent <= 0.0) return id;

  int best_f = -1;
  double best_thr = 0.0;
  double best_imp = parent - 1e-12;
  std::vector<int> order(idx);
  for (int f = 0; f < x.cols(); ++f) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      const double va = x(a, f), vb = x(b, f);
      return va < vb || (va == vb && a < b);
    });
    std::vector<double> left(static_cast<std::size_t>(classes_), 0.0);
    std::vector<double> right(counts);
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      const int i = order[k];
      const auto cls = static_cast<std::size_t>(y[static_cast<std::size_t>(i)]);
      left[cls] += 1.0;
      right[cls] -= 1.0;
      const double v = x(i, f);
      const double next = x(order[k + 1], f);
      if (!(next > v)) continue;
      const double nl = static_cast<double>(k + 1);
      const double nr = n - nl;
      const double imp = (nl * gini(left, nl) + nr * gini(right, nr)) / n;
      if (imp < best_imp) {
        best_imp = imp;
        best_f = f;
        best_thr = 0.5 * (v + next);
      }
    }
  }
  if (best_f < 0) return id;

  std::vector<int> li, ri;
  for (int i : idx) (x(i, best_f) <= best_thr ? li : ri).push_back(i);
  const int l = build(x, y, li, depth + 1);
  const int r = build(x, y, ri, depth + 1);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.feature = best_f;
  node.threshold = best_thr;
  node.left = l;
  node.right = r;
  return id;
}

Tensor DecisionTree::predict_proba(const Tensor& x) const {
  if (nodes_.empty()) throw Error(ErrorKind::InvalidArgument, "decision tree is not fitted");
  Tensor p(x.rows(), classes_);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    int id = 0;
    while (nodes_[static_cast<std::size_t>(id)].feature >= 0) {
      const Node& n = nodes_[static_cast<std::size_t>(id)];
      id = x(r, n.feature) <= n.threshold ? n.left : n.right;
    }
    const auto& pr = nodes_[static_cast<std::size_t>(id)].proba;
    for (int c = 0; c < classes_; ++c) p(r, c) = pr[static_cast<std::size_t>(c)];
  }
  return p;
}

// ---------------------------------------------------------------------------
// Multinomial logistic regression: full-batch Adam on mean cross-entropy + L2.

namespace {

Tensor with_bias(const Tensor& x) {
  Tensor a(x.rows(), x.cols() + 1);
  a.leftCols(x.cols()) = x;
  a.col(x.cols()).setOnes();
  return a;
}

struct Adam {
  Tensor m, v;
  int t = 0;
  void step(Tensor& w, const Tensor& g, double lr) {
    if (m.size() == 0) {
      m = Tensor::Zero(w.rows(), w.cols());
      v = Tensor::Zero(w.rows(), w.cols());
    }
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(0.9, t);
    const double c2 = 1.0 - std::pow(0.999, t);
    w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + 1e-8);
  }
};

}  // namespace

void LogisticRegression::fit(const Tensor& x, std::span<const int> y, int classes) {
  check_fit_input(x, y.size());
  const Tensor a = with_bias(x);
  const Tensor t = one_hot(y, classes);
  w_ = Tensor::Zero(a.cols(), classes);
  const double l2 = 1e-4;
  const double n = static_cast<double>(x.rows());
  Adam opt;
  for (int it = 0; it < 300; ++it) {
    Tensor p = softmax_rows(a * w_);
    Tensor g = a.transpose() * (p - t) / n;
    g.topRows(x.cols()) += l2 * w_.topRows(x.cols());
    opt.step(w_, g, 0.05);
  }
}

Tensor LogisticRegression::predict_proba(const Tensor& x) const { return softmax_rows(with_bias(x) * w_); }

// ---------------------------------------------------------------------------
// One-hidden-layer MLP, mini-batch Adam.

void MlpModel::fit_classifier(const Tensor& x, std::span<const int> y, int classes) {
  check_fit_input(x, y.size());
  y_mean_ = 0.0;
  y_scale_ = 1.0;
  train(x, one_hot(y, classes), true);
}

void MlpModel::fit_regressor(const Tensor& x, std::span<const double> y) {
  check_fit_input(x, y.size());
  const double n = static_cast<double>(y.size());
  y_mean_ = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : y) ss += (v - y_mean_) * (v - y_mean_);
  y_scale_ = std::sqrt(ss / n);
  if (!(y_scale_ > 0.0)) y_scale_ = 1.0;
  Tensor t(static_cast<Eigen::Index>(y.size()), 1);
  for (std::size_t i = 0; i < y.size(); ++i) t(static_cast<Eigen::Index>(i), 0) = (y[i] - y_mean_) / y_scale_;
  train(x, t, false);
}

void MlpModel::train(const Tensor& x, const Tensor& target, bool softmax) {
  Rng rng(derive_seed(seed_, 0x6d6c70));
  const auto p = x.cols();
  const auto k = target.cols();
  auto init = [&](Eigen::Index r, Eigen::Index c, double fan_in) {
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    Tensor t(r, c);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
    return t;
  };
  const double fan1 = static_cast<double>(std::max<Eigen::Index>(p, 1));
  w1_ = init(p, hidden_, fan1);
  b1_ = init(1, hidden_, fan1);
  w2_ = init(hidden_, k, hidden_);
  b2_ = init(1, k, hidden_);
  Adam o1, o2, o3, o4;
  const Eigen::Index n = x.rows();
  const Eigen::Index bs = std::min<Eigen::Index>(batch_, n);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < epochs_; ++e) {
    for (Eigen::Index i = n - 1; i > 0; --i) {
      std::uniform_int_distribution<Eigen::Index> pick(0, i);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
    }
    for (Eigen::Index s = 0; s < n; s += bs) {
      const Eigen::Index m = std::min(bs, n - s);
      Tensor xb(m, p), tb(m, k);
      for (Eigen::Index r = 0; r < m; ++r) {
        xb.row(r) = x.row(order[static_cast<std::size_t>(s + r)]);
        tb.row(r) = target.row(order[static_cast<std::size_t>(s + r)]);
      }
      Tensor pre = (xb * w1_).rowwise() + b1_.row(0);
      Tensor h = pre.cwiseMax(0.0);
      Tensor out = (h * w2_).rowwise() + b2_.row(0);
      Tensor d_out = softmax ? Tensor((softmax_rows(out) - tb) / static_cast<double>(m)) : Tensor(2.0 * (out - tb) / static_cast<double>(m));
      Tensor g_w2 = h.transpose() * d_out;
      Tensor g_b2 = d_out.colwise().sum();
      Tensor d_h = (d_out * w2_.transpose()).array() * (pre.array() > 0.0).cast<double>();
      Tensor g_w1 = xb.transpose() * d_h;
      Tensor g_b1 = d_h.colwise().sum();
      o1.step(w1_, g_w1, lr_);
      o2.step(b1_, g_b1, lr_);
      o3.step(w2_, g_w2, lr_);
      o4.step(b2_, g_b2, lr_);
    }
  }
}

Tensor MlpModel::forward(const Tensor& x) const {
  if (w1_.size() == 0) throw Error(ErrorKind::InvalidArgument, "MLP model is not fitted");
  Tensor h = ((x * w1_).rowwise() + b1_.row(0)).cwiseMax(0.0);
  return (h * w2_).rowwise() + b2_.row(0);
}

Tensor MlpModel::predict_proba(const Tensor& x) const { return softmax_rows(forward(x)); }

std::vector<double> MlpModel::predict(const Tensor& x) const {
  Tensor o = forward(x);
  std::vector<double> y(static_cast<std::size_t>(o.rows()));
  for (Eigen::Index r = 0; r < o.rows(); ++r) y[static_cast<std::size_t>(r)] = o(r, 0) * y_scale_ + y_mean_;
  return y;
}

// ---------------------------------------------------------------------------

void LinearRegression::fit(const Tensor& x, std::span<const double> y) {
  check_fit_input(x, y.size());
  Eigen::MatrixXd a = with_bias(x);
  Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  coef_ = a.colPivHouseholderQr().solve(b);
}

std::vector<double> LinearRegression::predict(const Tensor& x) const {
  if (coef_.size() == 0) throw Error(ErrorKind::InvalidArgument, "linear regression is not fitted");
  Eigen::VectorXd p = Eigen::MatrixXd(with_bias(x)) * coef_;
  return std::vector<double>(p.data(), p.data() + p.size());
}

// ---------------------------------------------------------------------------
// Metrics

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorKind::ShapeMismatch, "roc_auc: scores and labels differ in length");
  std::size_t np = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw Error(ErrorKind::InvalidArgument, "roc_auc: labels must be 0 or 1");
    np += static_cast<std::size_t>(l);
  }
  const std::size_t nn = labels.size() - np;
  if (np == 0 || nn == 0) throw Error(ErrorKind::InvalidArgument, "roc_auc: both classes must be present");
  for (double s : scores) {
    if (std::isnan(s)) throw Error(ErrorKind::NonFinite, "roc_auc: NaN score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of (1-based, tie-averaged) ranks of the positives. Ranks are kept
  // doubled so every quantity stays an exact integer.
  double doubled_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double doubled_avg = static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) doubled_rank_sum += doubled_avg;
    }
    i = j + 1;
  }
  const double pairs = static_cast<double>(np) * static_cast<double>(nn);
  const double doubled_u = doubled_rank_sum - static_cast<double>(np) * static_cast<double>(np + 1);
  return (0.5 * doubled_u) / pairs;
}

ClassificationScores score_classification(std::span<const int> truth, const Tensor& proba) {
  if (static_cast<std::size_t>(proba.rows()) != truth.size()) throw Error(ErrorKind::ShapeMismatch, "score: prediction rows differ from truth");
  if (truth.empty()) throw Error(ErrorKind::InvalidArgument, "score: empty truth");
  const int k = static_cast<int>(proba.cols());
  std::vector<int> pred(truth.size());
  for (std::size_t r = 0; r < truth.size(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < k; ++c) {
      if (proba(static_cast<Eigen::Index>(r), c) > proba(static_cast<Eigen::Index>(r), best)) best = c;
    }
    pred[r] = static_cast<int>(best);
  }
  std::vector<double> tp(static_cast<std::size_t>(k), 0.0), fp(tp), fn(tp);
  std::vector<char> seen(static_cast<std::size_t>(k), 0);
  double correct = 0.0;
  for (std::size_t r = 0; r < truth.size(); ++r) {
    const auto t = static_cast<std::size_t>(truth[r]);
    const auto p = static_cast<std::size_t>(pred[r]);
    seen[t] = seen[p] = 1;
    if (t == p) {
      tp[t] += 1.0;
      correct += 1.0;
    } else {
      fp[p] += 1.0;
      fn[t] += 1.0;
    }
  }
  auto f1 = [&](std::size_t c) {
    const double d = 2.0 * tp[c] + fp[c] + fn[c];
    return d > 0.0 ? 2.0 * tp[c] / d : 0.0;
  };
  ClassificationScores s;
  s.accuracy = correct / static_cast<double>(truth.size());
  s.micro_f1 = s.accuracy;
  double macro = 0.0;
  int used = 0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
    if (!seen[c]) continue;
    macro += f1(c);
    ++used;
  }
  s.macro_f1 = used > 0 ? macro / used : 0.0;
  s.f1 = k == 2 ? f1(1) : s.macro_f1;

  auto auc_for = [&](int c) {
    std::vector<int> lab(truth.size());
    std::vector<double> sc(truth.size());
    std::size_t pos = 0;
    for (std::size_t r = 0; r < truth.size(); ++r) {
      lab[r] = truth[r] == c ? 1 : 0;
      pos += static_cast<std::size_t>(lab[r]);
      sc[r] = proba(static_cast<Eigen::Index>(r), c);
    }
    if (pos == 0 || pos == truth.size()) return std::numeric_limits<double>::quiet_NaN();
    return roc_auc(sc, lab);
  };
  if (k == 2) {
    s.roc_auc = auc_for(1);
  } else {
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < k; ++c) {
      const double a = auc_for(c);
      if (std::isnan(a)) continue;
      sum += a;
      ++n;
    }
    s.roc_auc = n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  }
  return s;
}

RegressionScores score_regression(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw Error(ErrorKind::ShapeMismatch, "score: prediction length differs from truth");
  if (truth.empty()) throw Error(ErrorKind::InvalidArgument, "score: empty truth");
  const double n = static_cast<double>(truth.size());
  double mean = 0.0, res_mean = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    mean += truth[i];
    res_mean += truth[i] - pred[i];
  }
  mean /= n;
  res_mean /= n;
  double sse = 0.0, sae = 0.0, sst = 0.0, res_var = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - pred[i];
    sse += e * e;
    sae += std::abs(e);
    sst += (truth[i] - mean) * (truth[i] - mean);
    res_var += (e - res_mean) * (e - res_mean);
  }
  RegressionScores s;
  s.mse = sse / n;
  s.mae = sae / n;
  s.r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
  s.explained_variance = sst > 0.0 ? 1.0 - res_var / sst : 0.0;
  return s;
}

// ---------------------------------------------------------------------------

double EvalReport::value(const std::string& metric) const {
  for (const auto& [k, v] : averaged) {
    if (k == metric) return v;
  }
  throw Error(ErrorKind::InvalidArgument, "report has no metric '" + metric + "'");
}

namespace {

// Row permutation that sorts records by their values, column by column.
std::vector<std::size_t> canonical_order(const Table& t) {
  std::vector<std::size_t> idx(t.rows());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      if (t.schema()[c].kind == ColumnKind::Continuous) {
        const double x = t.reals(c)[a], y = t.reals(c)[b];
        if (x != y) return x < y;
      } else {
        const int cmp = t.cats(c)[a].compare(t.cats(c)[b]);
        if (cmp != 0) return cmp < 0;
      }
    }
    return false;
  });
  return idx;
}

void accumulate(Metrics& acc, const Metrics& m) {
  if (acc.empty()) {
    acc = m;
    return;
  }
  for (std::size_t i = 0; i < m.size(); ++i) acc[i].second += m[i].second;
}

void divide(Metrics& m, double n) {
  for (auto& kv : m) kv.second /= n;
}

Metrics as_metrics(const ClassificationScores& s) {
  return {{"accuracy", s.accuracy}, {"f1", s.f1}, {"macro_f1", s.macro_f1}, {"micro_f1", s.micro_f1}, {"roc_auc", s.roc_auc}};
}

Metrics as_metrics(const RegressionScores& s) {
  return {{"r2", s.r2}, {"explained_variance", s.explained_variance}, {"mse", s.mse}, {"mae", s.mae}};
}

}  // namespace

EvalReport task_eval(const Table& train_in, const Table& test, Task task, std::span<const std::uint64_t> seeds) {
  if (!(train_in.schema() == test.schema())) throw Error(ErrorKind::InvalidArgument, "task_eval: train and test schemas differ");
  if (train_in.rows() == 0 || test.rows() == 0) throw Error(ErrorKind::InvalidArgument, "task_eval: empty table");
  if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "task_eval: at least one seed is required");
  const auto label = train_in.schema().label_index();
  if (!label) throw Error(ErrorKind::InvalidArgument, "task_eval: no label column in schema");
  const ColumnKind lk = train_in.schema()[*label].kind;
  if (task == Task::Classification && lk != ColumnKind::Categorical) throw Error(ErrorKind::InvalidArgument, "classification needs a categorical label");
  if (task == Task::Regression && lk != ColumnKind::Continuous) throw Error(ErrorKind::InvalidArgument, "regression needs a continuous label");

  const Table train = train_in.take(canonical_order(train_in));
  const Featurizer feat = Featurizer::fit(train);
  const Tensor xtr = feat.transform(train);
  const Tensor xte = feat.transform(test);

  EvalReport report;
  report.task = task;
  std::vector<std::string> names;
  std::vector<Metrics> per(task == Task::Classification ? 3 : 2);
  if (task == Task::Classification) {
    names = {"decision_tree", "logistic_regression", "mlp"};
    std::vector<std::string> classes = train.cats(*label);
    classes.insert(classes.end(), test.cats(*label).begin(), test.cats(*label).end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    auto encode = [&](const std::vector<std::string>& v) {
      std::vector<int> y(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) y[i] = static_cast<int>(std::lower_bound(classes.begin(), classes.end(), v[i]) - classes.begin());
      return y;
    };
    const std::vector<int> ytr = encode(train.cats(*label));
    const std::vector<int> yte = encode(test.cats(*label));
    const int k = static_cast<int>(classes.size());
    if (std::adjacent_find(ytr.begin(), ytr.end(), std::not_equal_to<>()) == ytr.end()) {
      // One class in the training labels: every model degenerates to a
      // constant prediction. F1 is guarded to 0 and the ranking carries no signal.
      Tensor constant = Tensor::Zero(static_cast<Eigen::Index>(yte.size()), k);
      constant.col(ytr.front()).setOnes();
      ClassificationScores s = score_classification(yte, constant);
      s.f1 = 0.0;
      s.macro_f1 = 0.0;
      s.roc_auc = 0.5;
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        for (auto& m : per) accumulate(m, as_metrics(s));
      }
    } else {
      for (std::uint64_t seed : seeds) {
        DecisionTree dt(8);
        dt.fit(xtr, ytr, k);
        accumulate(per[0], as_metrics(score_classification(yte, dt.predict_proba(xte))));
        LogisticRegression lr;
        lr.fit(xtr, ytr, k);
        accumulate(per[1], as_metrics(score_classification(yte, lr.predict_proba(xte))));
        MlpModel mlp(64, seed);
        mlp.fit_classifier(xtr, ytr, k);
        accumulate(per[2], as_metrics(score_classification(yte, mlp.predict_proba(xte))));
      }
    }
  } else {
    names = {"linear_regression", "mlp"};
    const auto& ytr = train.reals(*label);
    const auto& yte = test.reals(*label);
    for (std::uint64_t seed : seeds) {
      LinearRegression ols;
      ols.fit(xtr, ytr);
      accumulate(per[0], as_metrics(score_regression(yte, ols.predict(xte))));
      MlpModel mlp(64, seed);
      mlp.fit_regressor(xtr, ytr);
      accumulate(per[1], as_metrics(score_regression(yte, mlp.predict(xte))));
    }
  }
  for (std::size_t m = 0; m < per.size(); ++m) {
    divide(per[m], static_cast<double>(seeds.size()));
    accumulate(report.averaged, per[m]);
    report.per_model.emplace_back(names[m], per[m]);
  }
  divide(report.averaged, static_cast<double>(per.size()));
  return report;
}

// ---------------------------------------------------------------------------

double wasserstein1(std::span<const double> a_in, std::span<const double> b_in) {
  if (a_in.empty() || b_in.empty()) throw Error(ErrorKind::InvalidArgument, "wasserstein1: empty sample");
  std::vector<double> a(a_in.begin(), a_in.end()), b(b_in.begin(), b_in.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> all(a);
  all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double total = 0.0;
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k + 1 < all.size(); ++k) {
    const double x = all[k];
    while (ia < a.size() && a[ia] <= x) ++ia;
    while (ib < b.size() && b[ib] <= x) ++ib;
    const double dx = all[k + 1] - x;
    if (dx > 0.0) total += std::abs(static_cast<double>(ia) / na - static_cast<double>(ib) / nb) * dx;
  }
  return total;
}

double categorical_tv(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::InvalidArgument, "categorical distance: empty sample");
  std::map<std::string, std::pair<double, double>> freq;
  for (const auto& s : a) freq[s].first += 1.0;
  for (const auto& s : b) freq[s].second += 1.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double tv = 0.0;
  for (const auto& [k, v] : freq) tv += std::abs(v.first / na - v.second / nb);
  return 0.5 * tv;
}

double column_emd(const Table& real, const Table& fake) {
  if (!(real.schema() == fake.schema())) throw Error(ErrorKind::InvalidArgument, "column_emd: schemas differ");
  if (real.rows() == 0 || fake.rows() == 0) throw Error(ErrorKind::InvalidArgument, "column_emd: empty table");
  double sum = 0.0;
  for (std::size_t c = 0; c < real.cols(); ++c) {
    sum += real.schema()[c].kind == ColumnKind::Continuous ? wasserstein1(real.reals(c), fake.reals(c)) : categorical_tv(real.cats(c), fake.cats(c));
  }
  return sum / static_cast<double>(real.cols());
}

std::vector<double> nearest_distances(const Tensor& q, const Tensor& refs) {
  if (refs.rows() == 0) throw Error(ErrorKind::InvalidArgument, "nearest distance: no reference records");
  if (q.cols() != refs.cols()) throw Error(ErrorKind::ShapeMismatch, "nearest distance: widths differ");
  std::vector<double> out(static_cast<std::size_t>(q.rows()));
  const Eigen::Index w = q.cols();
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < refs.rows(); ++j) {
      double d = 0.0;
      for (Eigen::Index k = 0; k < w; ++k) {
        const double e = q(i, k) - refs(j, k);
        d += e * e;
      }
      if (d < best) best = d;
    }
    out[static_cast<std::size_t>(i)] = std::sqrt(best);
  }
  return out;
}

DistanceHistogram histogram(std::vector<double> d, int bins) {
  if (bins < 1) throw Error(ErrorKind::InvalidArgument, "histogram needs at least one bin");
  if (d.empty()) throw Error(ErrorKind::InvalidArgument, "histogram of an empty sample");
  DistanceHistogram h;
  const double mx = *std::max_element(d.begin(), d.end());
  const double range = mx > 0.0 ? mx : 1.0;
  h.bin_width = range / bins;
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  double sum = 0.0;
  for (double v : d) {
    auto b = static_cast<std::size_t>(std::floor(v / h.bin_width));
    counts[std::min(b, counts.size() - 1)] += 1.0;
    sum += v;
  }
  const double n = static_cast<double>(d.size());
  for (int b = 0; b < bins; ++b) {
    h.centers.push_back((b + 0.5) * h.bin_width);
    h.density.push_back(counts[static_cast<std::size_t>(b)] / (n * h.bin_width));
  }
  h.mean = sum / n;
  std::vector<double> s(d);
  std::sort(s.begin(), s.end());
  const std::size_t m = s.size() / 2;
  h.median = s.size() % 2 ? s[m] : 0.5 * (s[m - 1] + s[m]);
  h.distances = std::move(d);
  return h;
}

DistanceHistogram real_fake_distance_pdf(const Table& real, const Table& fake, const prep::TransformSpec& spec, int bins) {
  if (real.rows() == 0 || fake.rows() == 0) throw Error(ErrorKind::InvalidArgument, "distance histogram: empty table");
  return histogram(nearest_distances(spec.encode_table(fake), spec.encode_table(real)), bins);
}

}  // namespace flowsynth::eval
