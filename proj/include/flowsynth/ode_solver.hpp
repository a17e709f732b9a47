#pragma once

// Fixed-step (Euler, classic RK4) and adaptive Dormand-Prince 5(4) integrators,
// generic over the state type so the same code drives eager tensors, recorded
// graph variables and augmented (state, log-density) pairs.
//
// A state type S needs: S + S, double * S, and flat(const S&) -> Eigen::VectorXd.

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "flowsynth/error.hpp"

namespace flowsynth::flow {

enum class SolverMethod { Euler, Rk4, Dopri5 };

const char* to_string(SolverMethod m);
SolverMethod solver_method_from_string(const std::string& s);

struct SolverConfig {
  SolverMethod method = SolverMethod::Rk4;
  int steps = 20;      // euler / rk4
  double rtol = 1e-5;  // dopri5
  double atol = 1e-5;

  void validate() const {
    if (steps < 1) throw Error(ErrorKind::InvalidArgument, "solver steps must be >= 1");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw Error(ErrorKind::InvalidArgument, "solver tolerances must be > 0");
  }
  bool operator==(const SolverConfig&) const = default;
};

struct SolveStats {
  int rhs_evals = 0;
  int accepted = 0;
  int rejected = 0;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::VectorXd flat(const RowMatrix& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

namespace detail {

inline double rms(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : std::sqrt(v.squaredNorm() / static_cast<double>(v.size())); }
// Max-norm so one badly resolved record in a batch cannot hide behind the rest.
inline double max_abs(const Eigen::VectorXd& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

template <class S, class Rhs>
S euler(Rhs& rhs, S y, double t0, double t1, int steps, SolveStats& st) {
  const double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    S k = rhs(t, y);
    ++st.rhs_evals;
    y = y + h * k;
    ++st.accepted;
  }
  return y;
}

template <class S, class Rhs>
S rk4(Rhs& rhs, S y, double t0, double t1, int steps, SolveStats& st) {
  const double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double t = t0 + i * h;
    S k1 = rhs(t, y);
    S k2 = rhs(t + 0.5 * h, y + (0.5 * h) * k1);
    S k3 = rhs(t + 0.5 * h, y + (0.5 * h) * k2);
    S k4 = rhs(t + h, y + h * k3);
    st.rhs_evals += 4;
    y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    ++st.accepted;
  }
  return y;
}

// Dormand-Prince 5(4) tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b* (fifth minus embedded fourth order weights)
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

template <class S, class Rhs>
S dopri5(Rhs& rhs, S y, double t0, double t1, double rtol, double atol, SolveStats& st) {
  constexpr double kMinStep = 1e-10;
  constexpr int kMaxSteps = 100000;
  const double span = t1 - t0;
  if (span == 0.0) return y;
  const double dir = span > 0.0 ? 1.0 : -1.0;

  S k1 = rhs(t0, y);
  ++st.rhs_evals;

  // Initial step (Hairer, Norsett & Wanner, II.4).
  double h;
  {
    const Eigen::VectorXd y0 = flat(y);
    const Eigen::VectorXd f0 = flat(k1);
    const Eigen::VectorXd sc = (atol + rtol * y0.array().abs()).matrix();
    const double d0 = rms(y0.cwiseQuotient(sc));
    const double d1 = rms(f0.cwiseQuotient(sc));
    const double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    S ytmp = y + (dir * h0) * k1;
    S f1 = rhs(t0 + dir * h0, ytmp);
    ++st.rhs_evals;
    const double d2 = rms((flat(f1) - f0).cwiseQuotient(sc)) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 1.0 / 5.0);
    h = std::min({100.0 * h0, h1, std::abs(span)});
  }

  double t = t0;
  int steps = 0;
  while (dir * (t1 - t) > 0.0) {
    if (++steps > kMaxSteps) throw Error(ErrorKind::Solver, "dopri5: exceeded maximum number of steps");
    if (h < kMinStep) throw Error(ErrorKind::Solver, "dopri5: step size underflow (h=" + std::to_string(h) + ")");
    bool last = false;
    if (h >= std::abs(t1 - t)) {
      h = std::abs(t1 - t);
      last = true;
    }
    const double hs = dir * h;
    S k2 = rhs(t + c2 * hs, y + (hs * a21) * k1);
    S k3 = rhs(t + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
    S k4 = rhs(t + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    S k5 = rhs(t + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    S k6 = rhs(t + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    S y_new = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    S k7 = rhs(t + hs, y_new);
    st.rhs_evals += 6;

    const Eigen::VectorXd err = hs * (e1 * flat(k1) + e3 * flat(k3) + e4 * flat(k4) + e5 * flat(k5) + e6 * flat(k6) + e7 * flat(k7));
    const Eigen::VectorXd yo = flat(y);
    const Eigen::VectorXd yn = flat(y_new);
    const Eigen::VectorXd sc = (atol + rtol * yo.array().abs().max(yn.array().abs())).matrix();
    const double ratio = max_abs(err.cwiseQuotient(sc));
    if (!std::isfinite(ratio)) throw Error(ErrorKind::NonFinite, "dopri5: non-finite error estimate");

    if (ratio <= 1.0) {
      t = last ? t1 : t + hs;
      y = y_new;
      k1 = k7;
      ++st.accepted;
    } else {
      ++st.rejected;
    }
    const double factor = ratio == 0.0 ? 10.0 : std::clamp(0.9 * std::pow(ratio, -1.0 / 5.0), 0.2, 10.0);
    h *= ratio <= 1.0 ? factor : std::min(1.0, factor);
  }
  return y;
}

}  // namespace detail

/// Integrates dy/dt = rhs(t, y) from t0 to t1 (t1 < t0 runs backward in time).
template <class S, class Rhs>
S integrate_with(Rhs& rhs, S y0, double t0, double t1, const SolverConfig& cfg, SolveStats* stats = nullptr) {
  cfg.validate();
  SolveStats local;
  SolveStats& st = stats != nullptr ? *stats : local;
  switch (cfg.method) {
    case SolverMethod::Euler: return detail::euler(rhs, std::move(y0), t0, t1, cfg.steps, st);
    case SolverMethod::Rk4: return detail::rk4(rhs, std::move(y0), t0, t1, cfg.steps, st);
    case SolverMethod::Dopri5: return detail::dopri5(rhs, std::move(y0), t0, t1, cfg.rtol, cfg.atol, st);
  }
  return y0;
}

}  // namespace flowsynth::flow
