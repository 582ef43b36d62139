#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adamsep/errors.hpp"
#include "adamsep/optimizers.hpp"

namespace adamsep {

/// Cumulative trajectory functionals. Each `prefix_*` array has one entry per
/// recorded step: prefix_X[t-1] is the sum over steps 1..t.
///
/// For SGD the scalar step eta_t plays the role of gamma_t, so E equals w_gsq
/// and S starts at 0.
struct Ledger {
  std::size_t T = 0;
  std::size_t d = 0;
  double E = 0.0;      // sum_t sum_i gamma_{t,i} (grad f(x_t))_i^2
  double ASGE = 0.0;   // sum_t sum_i gamma_{t,i}^2 g_{t,i}^2
  double MomE = 0.0;   // sum_t |gamma_t * m_t|^2
  double QV = 0.0;     // sum_t |x_{t+1} - x_t|^2
  std::vector<double> S;  // S_0 .. S_T,  S_t = d v0 + sum_{s<=t} |g_s|^2
  double avg_gsq = 0.0;   // (1/T) sum_t |grad f(x_t)|^2
  std::optional<double> w_gsq;  // sum_t eta_t |grad f(x_t)|^2 (SGD only)
  std::vector<double> prefix_E, prefix_ASGE, prefix_MomE, prefix_QV, prefix_gsq;
  std::optional<std::size_t> diverged_at;
};

inline Ledger compute_ledger(const Trajectory& traj) {
  const std::size_t T = traj.steps();
  if (T == 0) throw InputError("compute_ledger: empty trajectory");
  const std::size_t d = traj.dim();
  const bool sgd = traj.kind() == OptimizerKind::sgd;

  Ledger L;
  L.T = T;
  L.d = d;
  L.diverged_at = traj.diverged_at();
  L.S.reserve(T + 1);
  L.S.push_back(static_cast<double>(d) * traj.v0());
  double gsq_sum = 0.0, wsum = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const auto g = traj.g(t), grad = traj.grad(t), m = traj.m(t);
    const auto x = traj.x(t), xn = traj.x(t + 1);
    double e = 0.0, a = 0.0, mo = 0.0, q = 0.0, gs = 0.0, gn = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double step = sgd ? traj.eta(t) : traj.gamma(t)[i];
      e += step * grad[i] * grad[i];
      a += step * step * g[i] * g[i];
      const double gm = step * m[i];
      mo += gm * gm;
      const double dx = xn[i] - x[i];
      q += dx * dx;
      gs += grad[i] * grad[i];
      gn += g[i] * g[i];
    }
    L.E += e;
    L.ASGE += a;
    L.MomE += mo;
    L.QV += q;
    gsq_sum += gs;
    if (sgd) wsum += traj.eta(t) * gs;
    L.S.push_back(L.S.back() + gn);
    L.prefix_E.push_back(L.E);
    L.prefix_ASGE.push_back(L.ASGE);
    L.prefix_MomE.push_back(L.MomE);
    L.prefix_QV.push_back(L.QV);
    L.prefix_gsq.push_back(gsq_sum);
  }
  L.avg_gsq = gsq_sum / static_cast<double>(T);
  if (sgd) L.w_gsq = wsum;
  return L;
}

namespace detail {

inline void require_adam(const Trajectory& traj, const char* where) {
  if (traj.kind() != OptimizerKind::adam)
    throw InputError(std::string(where) + ": requires an Adam trajectory");
}

inline void require_calibrated(const Trajectory& traj, const char* where) {
  require_adam(traj, where);
  if (!traj.adam().calibrated)
    throw PreconditionError(std::string(where) + ": requires calibrated Adam parameters");
}

}  // namespace detail

/// y_t = (x_t - beta1 x_{t-1}) / (1 - beta1) for t >= 2, y_1 = x_1.
/// Valid for t in [1, steps + 1] (the last uses the terminal iterate).
inline std::vector<double> momentum_removed_point(const Trajectory& traj, double beta1,
                                                  std::size_t t) {
  const auto x = traj.x(t);
  std::vector<double> y(x.begin(), x.end());
  if (t >= 2) {
    const auto xp = traj.x(t - 1);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = (x[i] - beta1 * xp[i]) / (1.0 - beta1);
  }
  return y;
}

/// Momentum-removed sequence y_1..y_T, row-major (T x d).
inline std::vector<double> momentum_removed(const Trajectory& traj, double beta1) {
  detail::require_adam(traj, "momentum_removed");
  if (traj.adam().beta1 != beta1) throw InputError("momentum_removed: beta1 mismatch");
  std::vector<double> out;
  out.reserve(traj.steps() * traj.dim());
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    const auto y = momentum_removed_point(traj, beta1, t);
    out.insert(out.end(), y.begin(), y.end());
  }
  return out;
}

/// Relative residual |a - b| / max(|a|, |b|), or 0 when both vanish.
inline double relative_residual(double a, double b) noexcept {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

struct DeltaSplit {
  std::size_t t = 0;
  std::size_t i = 0;
  double delta1 = 0.0;
  double delta2 = 0.0;
};

/// Split of gamma_{t-1,i} - gamma_{t,i} for calibrated Adam:
///   delta1 = eta/sqrt(T-1) / (sqrt(v_{t-1,i}) + eps) - eta/sqrt(T) / (sqrt(v_{t,i}) + eps)
///   delta2 = eta (1/sqrt(T) - 1/sqrt(T-1)) / (sqrt(v_{t-1,i}) + eps)
inline double delta1_from(double eta, double T, double eps, double v_prev, double v_cur) noexcept {
  return eta / std::sqrt(T - 1.0) / (std::sqrt(v_prev) + eps) -
         eta / std::sqrt(T) / (std::sqrt(v_cur) + eps);
}

inline DeltaSplit delta_split(const Trajectory& traj, std::size_t t, std::size_t i) {
  detail::require_calibrated(traj, "delta_split");
  if (t < 1 || t > traj.steps() || i >= traj.dim())
    throw InputError("delta_split: index out of range");
  const auto& p = traj.adam();
  const double T = static_cast<double>(p.T);
  const double vp = traj.v(t - 1)[i], vc = traj.v(t)[i];
  const double d2 = p.eta * (1.0 / std::sqrt(T) - 1.0 / std::sqrt(T - 1.0)) / (std::sqrt(vp) + p.eps);
  return {t, i, delta1_from(p.eta, T, p.eps, vp, vc), d2};
}

/// First t in [1, T] with f(x_t) - f_star + 1 >= G; nullopt when never reached.
inline std::optional<std::size_t> stopping_time(const Trajectory& traj, double G) {
  if (!(G >= 1.0)) throw InputError("stopping_time: G must be >= 1");
  const auto& obj = traj.objective();
  for (std::size_t t = 1; t <= traj.steps(); ++t)
    if (obj.shifted_value(traj.x(t)) >= G) return t;
  return std::nullopt;
}

}  // namespace adamsep
