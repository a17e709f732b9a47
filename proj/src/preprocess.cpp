#include "flowsynth/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace flowsynth::prep {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double log_normal(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

struct EmResult {
  std::vector<Mode> modes;
  std::vector<double> trace;
  double loglik = -std::numeric_limits<double>::infinity();
};

EmResult run_em(std::span<const double> x, const std::vector<double>& sorted, int k, const GmmOptions& opts) {
  const std::size_t n = x.size();
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double sd0 = std::max(std::sqrt(var), opts.stddev_floor);

  EmResult res;
  res.modes.resize(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const double q = (static_cast<double>(j) + 0.5) / static_cast<double>(k);
    const auto idx = std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n)));
    res.modes[static_cast<std::size_t>(j)] = Mode{1.0 / k, sorted[idx], sd0};
  }

  std::vector<double> resp(n * static_cast<std::size_t>(k));
  std::vector<double> logw(static_cast<std::size_t>(k));
  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iters; ++it) {
    // E-step
    for (int j = 0; j < k; ++j) {
      const double w = res.modes[static_cast<std::size_t>(j)].weight;
      logw[static_cast<std::size_t>(j)] = w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity();
    }
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double* r = &resp[i * static_cast<std::size_t>(k)];
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const auto& m = res.modes[static_cast<std::size_t>(j)];
        r[j] = logw[static_cast<std::size_t>(j)] + log_normal(x[i], m.mean, m.stddev);
        mx = std::max(mx, r[j]);
      }
      double s = 0.0;
      for (int j = 0; j < k; ++j) {
        r[j] = std::exp(r[j] - mx);
        s += r[j];
      }
      for (int j = 0; j < k; ++j) r[j] /= s;
      ll += mx + std::log(s);
    }
    ll /= static_cast<double>(n);
    res.trace.push_back(ll);
    res.loglik = ll;
    if (ll - prev < opts.tol) break;
    prev = ll;
    // M-step
    for (int j = 0; j < k; ++j) {
      double nk = 0.0;
      double sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = resp[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)];
        nk += r;
        sx += r * x[i];
      }
      auto& m = res.modes[static_cast<std::size_t>(j)];
      if (nk < 1e-12) {
        m.weight = 0.0;
        continue;
      }
      m.weight = nk / static_cast<double>(n);
      m.mean = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - m.mean;
        sv += resp[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] * d * d;
      }
      m.stddev = std::max(std::sqrt(sv / nk), opts.stddev_floor);
    }
  }
  return res;
}

}  // namespace

GmmFit fit_gmm_traced(std::span<const double> values, const GmmOptions& opts) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "fit_gmm: empty input");
  if (opts.max_modes < 1) throw Error(ErrorKind::InvalidArgument, "fit_gmm: max_modes must be >= 1");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "fit_gmm: non-finite value in column");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  GmmFit out;
  out.transform.kind = ColumnKind::Continuous;
  if (sorted.front() == sorted.back()) {
    out.transform.modes = {Mode{1.0, sorted.front(), opts.stddev_floor}};
    out.selected_modes = 1;
    return out;
  }

  const double n = static_cast<double>(values.size());
  double best_bic = std::numeric_limits<double>::infinity();
  EmResult best;
  for (int k = 1; k <= opts.max_modes; ++k) {
    EmResult r = run_em(values, sorted, k, opts);
    const double bic = -2.0 * n * r.loglik + (3.0 * k - 1.0) * std::log(n);
    if (bic < best_bic) {
      best_bic = bic;
      best = std::move(r);
      out.selected_modes = k;
    }
  }

  std::vector<Mode> kept;
  double total = 0.0;
  for (const auto& m : best.modes) {
    if (m.weight >= opts.prune_weight) {
      kept.push_back(m);
      total += m.weight;
    }
  }
  if (kept.empty()) {
    kept.push_back(*std::max_element(best.modes.begin(), best.modes.end(), [](const Mode& a, const Mode& b) { return a.weight < b.weight; }));
    total = kept.front().weight;
  }
  for (auto& m : kept) m.weight /= total;
  out.transform.modes = std::move(kept);
  out.loglik_trace = std::move(best.trace);
  return out;
}

ColumnTransform fit_gmm(std::span<const double> values, int max_modes, int max_iters, double tol) {
  GmmOptions o;
  o.max_modes = max_modes;
  o.max_iters = max_iters;
  o.tol = tol;
  return fit_gmm_traced(values, o).transform;
}

ColumnTransform fit_vocabulary(std::span<const std::string> values) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "fit_vocabulary: empty input");
  std::set<std::string> uniq(values.begin(), values.end());
  ColumnTransform t;
  t.kind = ColumnKind::Categorical;
  t.vocabulary.assign(uniq.begin(), uniq.end());
  return t;
}

std::size_t best_mode(const ColumnTransform& t, double v) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t.modes.size(); ++k) {
    const auto& m = t.modes[k];
    const double s = std::log(m.weight) + log_normal(v, m.mean, m.stddev);
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return best;
}

TransformSpec::TransformSpec(Schema schema, std::vector<ColumnTransform> columns) : schema_(std::move(schema)), columns_(std::move(columns)) {
  if (columns_.size() != schema_.size()) throw Error(ErrorKind::InvalidArgument, "transform count does not match schema");
  int off = 0;
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& t = columns_[c];
    if (t.kind != schema_[c].kind) throw Error(ErrorKind::InvalidArgument, "transform kind mismatch for column '" + schema_[c].name + "'");
    offsets_.push_back(off);
    if (t.kind == ColumnKind::Continuous) {
      if (t.modes.empty()) throw Error(ErrorKind::InvalidArgument, "continuous column '" + schema_[c].name + "' has no modes");
      double wsum = 0.0;
      for (const auto& m : t.modes) {
        if (!(m.weight > 0.0) || !(m.stddev > 0.0)) throw Error(ErrorKind::InvalidArgument, "invalid mixture mode in column '" + schema_[c].name + "'");
        wsum += m.weight;
      }
      if (std::abs(wsum - 1.0) > 1e-9) throw Error(ErrorKind::InvalidArgument, "mixture weights of column '" + schema_[c].name + "' do not sum to 1");
      const int k = static_cast<int>(t.modes.size());
      slots_.push_back(Slot{Slot::OneHot, off, k});
      slots_.push_back(Slot{Slot::Scalar, off + k, 1});
    } else {
      if (t.vocabulary.empty()) throw Error(ErrorKind::InvalidArgument, "empty vocabulary for column '" + schema_[c].name + "'");
      std::set<std::string> uniq(t.vocabulary.begin(), t.vocabulary.end());
      if (uniq.size() != t.vocabulary.size()) throw Error(ErrorKind::InvalidArgument, "duplicate category in column '" + schema_[c].name + "'");
      slots_.push_back(Slot{Slot::OneHot, off, static_cast<int>(t.vocabulary.size())});
    }
    off += static_cast<int>(t.width());
  }
  width_ = off;
}

TransformSpec TransformSpec::fit(const Table& table, const GmmOptions& opts) {
  if (table.rows() == 0) throw Error(ErrorKind::InvalidArgument, "cannot fit transforms on an empty table");
  std::vector<ColumnTransform> cols;
  for (std::size_t c = 0; c < table.cols(); ++c) {
    if (table.schema()[c].kind == ColumnKind::Continuous) {
      cols.push_back(fit_gmm_traced(table.reals(c), opts).transform);
    } else {
      cols.push_back(fit_vocabulary(table.cats(c)));
    }
  }
  return TransformSpec(table.schema(), std::move(cols));
}

void TransformSpec::encode_into(const Record& r, std::span<double> out) const {
  if (r.size() != columns_.size()) throw Error(ErrorKind::ShapeMismatch, "record width does not match schema");
  if (out.size() != static_cast<std::size_t>(width_)) throw Error(ErrorKind::ShapeMismatch, "encode buffer has wrong width");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& t = columns_[c];
    const auto off = static_cast<std::size_t>(offsets_[c]);
    if (t.kind == ColumnKind::Continuous) {
      const double* pv = std::get_if<double>(&r[c]);
      if (pv == nullptr) throw Error(ErrorKind::InvalidArgument, "column '" + schema_[c].name + "' expects a real value");
      const double v = *pv;
      if (std::isnan(v)) throw Error(ErrorKind::NonFinite, "NaN value in column '" + schema_[c].name + "'");
      const std::size_t k = best_mode(t, v);
      const auto& m = t.modes[k];
      out[off + k] = 1.0;
      out[off + t.modes.size()] = std::clamp((v - m.mean) / (4.0 * m.stddev), -1.0, 1.0);
    } else {
      const std::string* ps = std::get_if<std::string>(&r[c]);
      if (ps == nullptr) throw Error(ErrorKind::InvalidArgument, "column '" + schema_[c].name + "' expects a category");
      auto it = std::lower_bound(t.vocabulary.begin(), t.vocabulary.end(), *ps);
      if (it == t.vocabulary.end() || *it != *ps) {
        throw Error(ErrorKind::InvalidArgument, "unseen category '" + *ps + "' in column '" + schema_[c].name + "'");
      }
      out[off + static_cast<std::size_t>(it - t.vocabulary.begin())] = 1.0;
    }
  }
}

ad::Tensor TransformSpec::encode(const Record& r) const {
  ad::Tensor out(1, width_);
  encode_into(r, std::span<double>(out.data(), static_cast<std::size_t>(width_)));
  return out;
}

ad::Tensor TransformSpec::encode_table(const Table& t) const {
  if (!(t.schema() == schema_)) throw Error(ErrorKind::InvalidArgument, "table schema does not match the fitted transform");
  ad::Tensor out(static_cast<Eigen::Index>(t.rows()), width_);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    encode_into(t.row(i), std::span<double>(out.row(static_cast<Eigen::Index>(i)).data(), static_cast<std::size_t>(width_)));
  }
  return out;
}

namespace {
std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}
}  // namespace

Record TransformSpec::decode(std::span<const double> v) const {
  if (v.size() != static_cast<std::size_t>(width_)) throw Error(ErrorKind::ShapeMismatch, "decode: vector width does not match transform");
  Record r;
  r.reserve(columns_.size());
  for (std::size_t c = 0; c < columns_.size(); ++c) {
    const auto& t = columns_[c];
    const auto off = static_cast<std::size_t>(offsets_[c]);
    if (t.kind == ColumnKind::Continuous) {
      const std::size_t k = argmax(v.subspan(off, t.modes.size()));
      const auto& m = t.modes[k];
      const double s = std::clamp(v[off + t.modes.size()], -1.0, 1.0);
      r.emplace_back(m.mean + 4.0 * m.stddev * s);
    } else {
      r.emplace_back(t.vocabulary[argmax(v.subspan(off, t.vocabulary.size()))]);
    }
  }
  return r;
}

Table TransformSpec::decode_table(const ad::Tensor& m) const {
  Table out(schema_);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out.append(decode(std::span<const double>(m.row(i).data(), static_cast<std::size_t>(m.cols()))));
  }
  return out;
}

}  // namespace flowsynth::prep
