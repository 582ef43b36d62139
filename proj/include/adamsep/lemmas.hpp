#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "adamsep/errors.hpp"
#include "adamsep/instrument.hpp"
#include "adamsep/kernel.hpp"
#include "adamsep/optimizers.hpp"
#include "adamsep/parallel.hpp"
#include "adamsep/problems.hpp"

namespace adamsep {

/// Worst case of a family of inequalities lhs <= rhs (or identity residuals).
///
/// `margin` is rhs - lhs at `worst_t`/`worst_i`, the instance whose margin is
/// smallest relative to 1 + |lhs| + |rhs|. `holds` is true when no instance
/// fails: inequalities may undershoot by at most 1e-9 (1 + |lhs| + |rhs|),
/// identity residuals must not exceed their tolerance.
struct CheckResult {
  std::string check_id;
  bool holds = true;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = std::numeric_limits<double>::infinity();
  std::size_t worst_t = 0;
  std::size_t worst_i = 0;
  std::size_t instances = 0;
};

inline constexpr double kRoundingSlack = 1e-9;
inline constexpr double kIdentityTol = 1e-10;
inline constexpr double kSplitTol = 1e-12;

namespace detail {

class CheckAccumulator {
public:
  explicit CheckAccumulator(std::string id) { r_.check_id = std::move(id); }

  /// lhs <= rhs up to rounding slack.
  void leq(double lhs, double rhs, std::size_t t, std::size_t i = 0) {
    const double scale = 1.0 + std::abs(lhs) + std::abs(rhs);
    const double margin = rhs - lhs;
    if (!(margin >= -kRoundingSlack * scale)) r_.holds = false;
    consider(lhs, rhs, margin, margin / scale, t, i);
  }

  /// residual <= tol, no slack.
  void within(double residual, double tol, std::size_t t, std::size_t i = 0) {
    const double margin = tol - residual;
    if (!(residual <= tol)) r_.holds = false;
    consider(residual, tol, margin, margin / tol, t, i);
  }

  CheckResult result() && {
    if (r_.instances == 0) r_.margin = 0.0;
    return std::move(r_);
  }

private:
  void consider(double lhs, double rhs, double margin, double normalized, std::size_t t,
                std::size_t i) {
    ++r_.instances;
    if (std::isnan(normalized) || normalized < worst_) {
      worst_ = std::isnan(normalized) ? -std::numeric_limits<double>::infinity() : normalized;
      r_.lhs = lhs;
      r_.rhs = rhs;
      r_.margin = margin;
      r_.worst_t = t;
      r_.worst_i = i;
    }
  }

  CheckResult r_;
  double worst_ = std::numeric_limits<double>::infinity();
};

/// log(1 + exp(a)) without overflow.
inline double log1p_exp(double a) noexcept {
  return a > 30.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

}  // namespace detail

inline const std::vector<std::string>& check_catalog() {
  static const std::vector<std::string> ids = {
      "GRAD-LB", "LOG-ENERGY", "DELTA-SUM", "M-RECUR", "FBAR-CMP", "V-CMP",    "M-BOUNDS",
      "INC-BOUND", "GEN-BETA", "Y-IDENT",  "V-EXPAND", "QV-IDENT", "DELTA-SIGN"};
  return ids;
}

namespace checks {

inline CheckResult grad_lb(const Trajectory& traj) {
  detail::CheckAccumulator acc("GRAD-LB");
  const auto& obj = traj.objective();
  const double L = obj.smoothness();
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    double gsq = 0.0;
    for (double e : traj.grad(t)) gsq += e * e;
    acc.leq(gsq, 2.0 * L * obj.shifted_value(traj.x(t)), t);
  }
  return std::move(acc).result();
}

inline CheckResult log_energy(const Trajectory& traj) {
  detail::require_calibrated(traj, "LOG-ENERGY");
  detail::CheckAccumulator acc("LOG-ENERGY");
  const auto& p = traj.adam();
  const auto ledger = compute_ledger(traj);
  const double d = static_cast<double>(traj.dim());
  const double scale = p.v0 * d * static_cast<double>(p.T);
  for (std::size_t n = 1; n <= traj.steps(); ++n) {
    const double lg = std::log1p(ledger.S[n] / scale);
    acc.leq(ledger.prefix_ASGE[n - 1], 4.0 * p.eta * p.eta * d * lg, n, 0);
    acc.leq(ledger.prefix_MomE[n - 1], 16.0 * p.eta * p.eta * d * lg, n, 1);
  }
  return std::move(acc).result();
}

inline CheckResult delta_sum(const Trajectory& traj) {
  detail::require_calibrated(traj, "DELTA-SUM");
  detail::CheckAccumulator acc("DELTA-SUM");
  const auto& p = traj.adam();
  const double d = static_cast<double>(traj.dim());
  double total = 0.0;
  for (std::size_t t = 1; t <= traj.steps(); ++t)
    for (std::size_t i = 0; i < traj.dim(); ++i) total += std::abs(delta_split(traj, t, i).delta1);
  const double bound = (8.0 * d * p.eps / std::pow(p.v0, 1.5) + 8.0 * d / std::sqrt(p.v0)) * p.eta;
  acc.leq(total, bound, traj.steps());
  return std::move(acc).result();
}

inline CheckResult m_recur(const Trajectory& traj) {
  detail::require_adam(traj, "M-RECUR");
  detail::CheckAccumulator acc("M-RECUR");
  const double b1 = traj.adam().beta1;
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    const auto m = traj.m(t), mp = traj.m(t - 1), g = traj.g(t);
    for (std::size_t i = 0; i < traj.dim(); ++i)
      acc.leq(m[i] * m[i] - mp[i] * mp[i], -(1.0 - b1) * mp[i] * mp[i] + (1.0 - b1) * g[i] * g[i],
              t, i);
  }
  return std::move(acc).result();
}

inline CheckResult fbar_cmp(const Trajectory& traj) {
  detail::require_adam(traj, "FBAR-CMP");
  detail::CheckAccumulator acc("FBAR-CMP");
  const double b1 = traj.adam().beta1;
  const auto& obj = traj.objective();
  const double coef = obj.smoothness() * b1 * b1 / ((1.0 - b1) * (1.0 - b1));
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    const auto y = momentum_removed_point(traj, b1, t);
    const auto gp = traj.gamma(t - 1), mp = traj.m(t - 1);
    double inc = 0.0;
    for (std::size_t i = 0; i < traj.dim(); ++i) inc += (gp[i] * mp[i]) * (gp[i] * mp[i]);
    const double fy = obj.shifted_value(y), fx = obj.shifted_value(traj.x(t));
    acc.leq(fy, 2.0 * fx + coef * inc, t, 0);
    acc.leq(fx, 2.0 * fy + coef * inc, t, 1);
  }
  return std::move(acc).result();
}

/// v_{k,i} <= 4 v_{h,i} for all k < h, evaluated as max_{k<h} v_{k,i} <= 4 v_{h,i}.
inline CheckResult v_cmp(const Trajectory& traj) {
  detail::require_adam(traj, "V-CMP");
  const auto& p = traj.adam();
  if (p.T < 2 || p.beta2 != 1.0 - 1.0 / static_cast<double>(p.T))
    throw PreconditionError("V-CMP: requires beta2 = 1 - 1/T with T >= 2");
  detail::CheckAccumulator acc("V-CMP");
  for (std::size_t i = 0; i < traj.dim(); ++i) {
    double running_max = traj.v(1)[i];
    for (std::size_t h = 2; h <= traj.steps(); ++h) {
      acc.leq(running_max, 4.0 * traj.v(h)[i], h, i);
      running_max = std::max(running_max, traj.v(h)[i]);
    }
  }
  return std::move(acc).result();
}

inline CheckResult m_bounds(const Trajectory& traj) {
  detail::require_calibrated(traj, "M-BOUNDS");
  detail::CheckAccumulator acc("M-BOUNDS");
  const double b1 = traj.adam().beta1;
  const std::size_t d = traj.dim();
  double wg = 0.0, wgg = 0.0;          // sum_k b1^{t-k} |g_k|^2 and |gamma_k g_k|^2
  double sum_gm = 0.0, sum_gg = 0.0;   // prefix sums for the third inequality
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    const auto m = traj.m(t), g = traj.g(t), gam = traj.gamma(t);
    double msq = 0.0, gsq = 0.0, gmsq = 0.0, ggsq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      msq += m[i] * m[i];
      gsq += g[i] * g[i];
      gmsq += (gam[i] * m[i]) * (gam[i] * m[i]);
      ggsq += (gam[i] * g[i]) * (gam[i] * g[i]);
    }
    wg = b1 * wg + gsq;
    wgg = b1 * wgg + ggsq;
    acc.leq(msq, (1.0 - b1) * wg, t, 0);
    acc.leq(gmsq, 4.0 * (1.0 - b1) * wgg, t, 1);
    if (t < traj.steps()) {
      sum_gm += gmsq;
      sum_gg += ggsq;
      acc.leq(sum_gm, 4.0 * sum_gg, t, 2);
    }
  }
  return std::move(acc).result();
}

inline CheckResult inc_bound(const Trajectory& traj) {
  detail::require_calibrated(traj, "INC-BOUND");
  detail::CheckAccumulator acc("INC-BOUND");
  const auto& p = traj.adam();
  const double bound = std::sqrt(static_cast<double>(traj.dim())) * p.eta * d_beta1(p.beta1);
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    const auto x = traj.x(t), xn = traj.x(t + 1);
    double s = 0.0;
    for (std::size_t i = 0; i < traj.dim(); ++i) s += (xn[i] - x[i]) * (xn[i] - x[i]);
    acc.leq(std::sqrt(s), bound, t);
  }
  return std::move(acc).result();
}

/// Pathwise self-normalization for a fixed beta2 on a beta1 = 0 run:
///   sum |gamma_t g_t|^2 <= gamma^2/(1-b2) sum_i log(1 + (1-b2)/v0 sum_t b2^{-t} g_{t,i}^2)
///                       <= gamma^2 d T log(1/b2)/(1-b2) + gamma^2 d/(1-b2) log(1 + (1-b2)/(v0 d) sum |g_t|^2),
/// and sum |gamma_t g_t|^2 <= gamma^2 d T when b2 = 0.
inline CheckResult gen_beta(const Trajectory& traj) {
  double gamma, b2, v0;
  if (traj.kind() == OptimizerKind::rmsprop) {
    const auto& p = std::get<RmspropParams>(traj.meta().optimizer);
    gamma = p.gamma, b2 = p.beta2, v0 = p.v0;
  } else if (traj.kind() == OptimizerKind::adam && traj.adam().beta1 == 0.0) {
    const auto& p = traj.adam();
    gamma = p.gamma, b2 = p.beta2, v0 = p.v0;
  } else {
    throw PreconditionError("GEN-BETA: requires an RMSProp or beta1 = 0 Adam trajectory");
  }
  detail::CheckAccumulator acc("GEN-BETA");
  const std::size_t d = traj.dim(), T = traj.steps();
  const double dd = static_cast<double>(d), Td = static_cast<double>(T);

  double lhs = 0.0, gsq_total = 0.0;
  for (std::size_t t = 1; t <= T; ++t) {
    const auto g = traj.g(t), gam = traj.gamma(t);
    for (std::size_t i = 0; i < d; ++i) {
      lhs += (gam[i] * g[i]) * (gam[i] * g[i]);
      gsq_total += g[i] * g[i];
    }
  }
  if (b2 == 0.0) {
    acc.leq(lhs, gamma * gamma * dd * Td, T, 0);
    return std::move(acc).result();
  }

  // sum_i log(1 + exp(log((1-b2)/v0) + LSE_t(2 log|g_{t,i}| - t log b2))).
  const double lb2 = std::log(b2);
  double mid_logs = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 1; t <= T; ++t) {
      const double gi = traj.g(t)[i];
      if (gi != 0.0) mx = std::max(mx, 2.0 * std::log(std::abs(gi)) - static_cast<double>(t) * lb2);
    }
    if (!std::isfinite(mx)) continue;
    double s = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
      const double gi = traj.g(t)[i];
      if (gi != 0.0) s += std::exp(2.0 * std::log(std::abs(gi)) - static_cast<double>(t) * lb2 - mx);
    }
    mid_logs += detail::log1p_exp(std::log((1.0 - b2) / v0) + mx + std::log(s));
  }
  const double c = gamma * gamma / (1.0 - b2);
  const double mid = c * mid_logs;
  const double rhs = c * dd * Td * std::log(1.0 / b2) +
                     c * dd * std::log1p((1.0 - b2) / (v0 * dd) * gsq_total);
  acc.leq(lhs, mid, T, 0);
  acc.leq(mid, rhs, T, 1);
  return std::move(acc).result();
}

/// y_{t+1} - y_t = -gamma_t g_t + b1/(1-b1) (gamma_{t-1} - gamma_t) m_{t-1}.
/// The residual is measured relative to the largest operand (|y_t|, |y_{t+1}|
/// or either side), since forming y_{t+1} - y_t loses digits to cancellation.
inline CheckResult y_ident(const Trajectory& traj) {
  detail::require_adam(traj, "Y-IDENT");
  detail::CheckAccumulator acc("Y-IDENT");
  const double b1 = traj.adam().beta1;
  const double k = b1 / (1.0 - b1);
  auto y_prev = momentum_removed_point(traj, b1, 1);
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    const auto y_next = momentum_removed_point(traj, b1, t + 1);
    const auto gam = traj.gamma(t), gp = traj.gamma(t - 1), g = traj.g(t), mp = traj.m(t - 1);
    for (std::size_t i = 0; i < traj.dim(); ++i) {
      const double lhs = y_next[i] - y_prev[i];
      const double rhs = -gam[i] * g[i] + k * (gp[i] - gam[i]) * mp[i];
      const double scale = std::max({std::abs(lhs), std::abs(rhs), std::abs(y_next[i]),
                                     std::abs(y_prev[i])});
      acc.within(scale == 0.0 ? 0.0 : std::abs(lhs - rhs) / scale, kIdentityTol, t, i);
    }
    y_prev = y_next;
  }
  return std::move(acc).result();
}

/// v_{t,i} = (1-1/T)^t v0 + (1/T) sum_s (1-1/T)^{t-s} g_{s,i}^2 on calibrated runs.
inline CheckResult v_expand(const Trajectory& traj) {
  detail::require_calibrated(traj, "V-EXPAND");
  detail::CheckAccumulator acc("V-EXPAND");
  const auto& p = traj.adam();
  const double Td = static_cast<double>(p.T);
  const double b = 1.0 - 1.0 / Td;
  std::vector<double> pw(traj.steps() + 1);
  for (std::size_t k = 0; k < pw.size(); ++k) pw[k] = std::pow(b, static_cast<double>(k));
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    for (std::size_t i = 0; i < traj.dim(); ++i) {
      double s = pw[t] * p.v0;
      for (std::size_t u = 1; u <= t; ++u) {
        const double gi = traj.g(u)[i];
        s += pw[t - u] * gi * gi / Td;
      }
      acc.within(relative_residual(traj.v(t)[i], s), kIdentityTol, t, i);
    }
  }
  return std::move(acc).result();
}

/// Quadratic variation equals the adaptive momentum energy.
inline CheckResult qv_ident(const Trajectory& traj) {
  detail::require_adam(traj, "QV-IDENT");
  detail::CheckAccumulator acc("QV-IDENT");
  const auto L = compute_ledger(traj);
  acc.within(relative_residual(L.QV, L.MomE), kIdentityTol, traj.steps());
  return std::move(acc).result();
}

/// delta1 >= 0, delta2 <= 0 and delta1 + delta2 = gamma_{t-1,i} - gamma_{t,i}.
inline CheckResult delta_sign(const Trajectory& traj) {
  detail::require_calibrated(traj, "DELTA-SIGN");
  detail::CheckAccumulator acc("DELTA-SIGN");
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    const auto gam = traj.gamma(t), gp = traj.gamma(t - 1);
    for (std::size_t i = 0; i < traj.dim(); ++i) {
      const auto s = delta_split(traj, t, i);
      acc.leq(0.0, s.delta1, t, i);
      acc.leq(s.delta2, 0.0, t, i);
      const double diff = gp[i] - gam[i];
      const double scale = std::max({std::abs(s.delta1), std::abs(s.delta2), std::abs(diff),
                                     std::abs(gp[i])});
      acc.within(scale == 0.0 ? 0.0 : std::abs(s.delta1 + s.delta2 - diff) / scale, kSplitTol, t, i);
    }
  }
  return std::move(acc).result();
}

}  // namespace checks

/// Evaluates one catalog check over every applicable instance of the trajectory.
inline CheckResult run_pathwise_check(std::string_view check_id, const Trajectory& traj) {
  if (traj.steps() == 0) throw InputError("run_pathwise_check: empty trajectory");
  if (check_id == "GRAD-LB") return checks::grad_lb(traj);
  if (check_id == "LOG-ENERGY") return checks::log_energy(traj);
  if (check_id == "DELTA-SUM") return checks::delta_sum(traj);
  if (check_id == "M-RECUR") return checks::m_recur(traj);
  if (check_id == "FBAR-CMP") return checks::fbar_cmp(traj);
  if (check_id == "V-CMP") return checks::v_cmp(traj);
  if (check_id == "M-BOUNDS") return checks::m_bounds(traj);
  if (check_id == "INC-BOUND") return checks::inc_bound(traj);
  if (check_id == "GEN-BETA") return checks::gen_beta(traj);
  if (check_id == "Y-IDENT") return checks::y_ident(traj);
  if (check_id == "V-EXPAND") return checks::v_expand(traj);
  if (check_id == "QV-IDENT") return checks::qv_ident(traj);
  if (check_id == "DELTA-SIGN") return checks::delta_sign(traj);
  throw ConfigError("unknown check id '" + std::string(check_id) + "'");
}

// ---------------------------------------------------------------------------
// Conditional expectations given F_{t-1}, by resampling g_t at fixed history.
// ---------------------------------------------------------------------------

/// Functional of a resampled g_t, with everything else frozen at (x_t, m_{t-1}, v_{t-1}).
enum class CondQuantityKind {
  g_coord,          // g_{t,i}
  gamma_grad_g,     // sum_i gamma_{t,i} (grad f(x_t))_i g_{t,i}
  abs_delta1,       // |Delta_{t,1,i}|
  abs_delta1_sum,   // sum_i |Delta_{t,1,i}|
  gamma_diff_term,  // sum_i (gamma_{t-1,i} - gamma_{t,i}) (grad f(y_t))_i m_{t-1,i}
};

struct CondQuantity {
  CondQuantityKind kind = CondQuantityKind::g_coord;
  std::size_t coord = 0;
};

namespace detail {

/// Frozen F_{t-1} information for one step of a calibrated Adam trajectory.
struct StepContext {
  const Trajectory* traj;
  std::size_t t;
  std::vector<double> grad_x;  // grad f(x_t)
  std::vector<double> grad_y;  // grad f(y_t)
  std::vector<double> gamma_out;

  StepContext(const Trajectory& tr, std::size_t step) : traj(&tr), t(step) {
    const auto& obj = tr.objective();
    const auto gx = tr.grad(step);
    grad_x.assign(gx.begin(), gx.end());
    const auto y = momentum_removed_point(tr, tr.adam().beta1, step);
    grad_y.resize(tr.dim());
    obj.gradient_into(y, grad_y);
    gamma_out.resize(tr.dim());
  }

  /// gamma_t and v_t as functions of a candidate g_t.
  void stepsizes(std::span<const double> g, std::span<double> v_new, std::span<double> gam) const {
    const auto& p = traj->adam();
    const auto vp = traj->v(t - 1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      v_new[i] = p.beta2 * vp[i] + (1.0 - p.beta2) * (g[i] * g[i]);
      gam[i] = p.gamma / (std::sqrt(v_new[i]) + p.eps);
    }
  }

  double abs_delta1(std::size_t i, double v_new) const {
    const auto& p = traj->adam();
    return std::abs(delta1_from(p.eta, static_cast<double>(p.T), p.eps, traj->v(t - 1)[i], v_new));
  }
};

inline double evaluate_quantity(const StepContext& ctx, const CondQuantity& q,
                                std::span<const double> g) {
  const std::size_t d = g.size();
  std::vector<double> v_new(d), gam(d);
  ctx.stepsizes(g, v_new, gam);
  const auto gp = ctx.traj->gamma(ctx.t - 1);
  const auto mp = ctx.traj->m(ctx.t - 1);
  double s = 0.0;
  switch (q.kind) {
    case CondQuantityKind::g_coord: return g[q.coord];
    case CondQuantityKind::gamma_grad_g:
      for (std::size_t i = 0; i < d; ++i) s += gam[i] * ctx.grad_x[i] * g[i];
      return s;
    case CondQuantityKind::abs_delta1: return ctx.abs_delta1(q.coord, v_new[q.coord]);
    case CondQuantityKind::abs_delta1_sum:
      for (std::size_t i = 0; i < d; ++i) s += ctx.abs_delta1(i, v_new[i]);
      return s;
    case CondQuantityKind::gamma_diff_term:
      for (std::size_t i = 0; i < d; ++i) s += (gp[i] - gam[i]) * ctx.grad_y[i] * mp[i];
      return s;
  }
  return s;
}

inline void check_step_index(const Trajectory& traj, std::size_t t, bool need_next) {
  const std::size_t hi = need_next ? traj.steps() - 1 : traj.steps();
  if (traj.steps() == 0 || t < 1 || t > hi) throw InputError("step index out of range");
}

}  // namespace detail

/// Sample mean and SE of a functional of g_t over n fresh oracle draws at x_t.
inline MeanSE mc_conditional_mean(const Trajectory& traj, std::size_t t, const CondQuantity& q,
                                  std::size_t n, RngStream& stream) {
  if (n < 2) throw ConfigError("mc_conditional_mean: need at least 2 resamples");
  detail::require_calibrated(traj, "mc_conditional_mean");
  detail::check_step_index(traj, t, false);
  if ((q.kind == CondQuantityKind::g_coord || q.kind == CondQuantityKind::abs_delta1) &&
      q.coord >= traj.dim())
    throw InputError("mc_conditional_mean: coordinate out of range");
  const detail::StepContext ctx(traj, t);
  const auto& oracle = traj.oracle();
  std::vector<double> g(traj.dim());
  RunningStats stats;
  for (std::size_t k = 0; k < n; ++k) {
    oracle.sample_into(traj.x(t), stream, g);
    stats.add(detail::evaluate_quantity(ctx, q, g));
  }
  return stats.summary();
}

/// Terms of the one-step descent inequality
///   lhs <= descent + D1 + D2 + D3 + P
/// for calibrated Adam, with conditional expectations replaced by resample
/// estimates. `D_check_mean`/`D_check_se` hold, for each D-component, the mean
/// of (estimated conditional mean - value at a fresh g_t) over a second,
/// independent resample batch; it should vanish within a few SEs.
struct DescentTerms {
  std::size_t t = 0;
  double lhs = 0.0;
  double descent = 0.0;
  double D1 = 0.0, D2 = 0.0, D3 = 0.0;
  std::array<double, 3> D_cond_se{};     // SE of the conditional-mean estimate inside each D
  std::array<double, 3> D_check_mean{};
  std::array<double, 3> D_check_se{};
  double P = 0.0;
  double P_cond_se = 0.0;  // SE of C * sum_i E[|Delta_{t,1,i}| | F_{t-1}]
  double pooled_se = 0.0;  // SE of all estimated terms on the right-hand side, jointly
  std::size_t resample_n = 0;

  double rhs() const noexcept { return descent + D1 + D2 + D3 + P; }
};

inline DescentTerms descent_terms(const Trajectory& traj, std::size_t t, std::size_t n,
                                  RngStream& stream) {
  if (n < 2) throw ConfigError("descent_terms: need at least 2 resamples");
  detail::require_calibrated(traj, "descent_terms");
  detail::check_step_index(traj, t, true);

  const auto& p = traj.adam();
  const auto& oracle = traj.oracle();
  const auto& obj = oracle.objective();
  const std::size_t d = traj.dim();
  const double b1 = p.beta1, k1 = b1 / (1.0 - b1);
  const double L = obj.smoothness(), C = oracle.variance_bound();
  const double eta = p.eta, v = p.v0, eps = p.eps;
  const double Td = static_cast<double>(p.T), dd = static_cast<double>(d);

  const detail::StepContext ctx(traj, t);
  const auto gp = traj.gamma(t - 1), gam = traj.gamma(t), mp = traj.m(t - 1), m = traj.m(t);
  const auto g = traj.g(t), grad_next = traj.grad(t + 1);
  const auto& grad_x = ctx.grad_x;
  const auto& grad_y = ctx.grad_y;

  // Per-sample functionals whose conditional means enter D1, D2, D3 and P.
  struct Sample {
    double a1, a2, a3, c;  // sum gamma grad g, sum grad^2 |D1|, sum (gp - gamma) grad_y m, sum |D1|
  };
  auto eval = [&](std::span<const double> gs) {
    std::vector<double> vn(d), gm(d);
    ctx.stepsizes(gs, vn, gm);
    Sample s{0, 0, 0, 0};
    for (std::size_t i = 0; i < d; ++i) {
      const double ad = ctx.abs_delta1(i, vn[i]);
      s.a1 += gm[i] * grad_x[i] * gs[i];
      s.a2 += grad_x[i] * grad_x[i] * ad;
      s.a3 += (gp[i] - gm[i]) * grad_y[i] * mp[i];
      s.c += ad;
    }
    return s;
  };

  DescentTerms out;
  out.t = t;
  out.resample_n = n;

  std::vector<double> gs(d);
  RunningStats s1, s2, s3, sc, pooled;
  for (std::size_t k = 0; k < n; ++k) {
    oracle.sample_into(traj.x(t), stream, gs);
    const auto s = eval(gs);
    s1.add(s.a1);
    s2.add(s.a2);
    s3.add(s.a3);
    sc.add(s.c);
    // The right-hand side depends on the estimates through
    //   +E[a1] + E[a2] - k1 E[a3] + C E[c].
    pooled.add(s.a1 + s.a2 - k1 * s.a3 + C * s.c);
  }
  const double e1 = s1.mean(), e2 = s2.mean(), e3 = s3.mean(), ec = sc.mean();

  const auto realized = eval(g);
  out.D1 = e1 - realized.a1;
  out.D2 = e2 - realized.a2;
  out.D3 = k1 * (realized.a3 - e3);
  out.D_cond_se = {s1.summary().se, s2.summary().se, k1 * s3.summary().se};
  out.pooled_se = pooled.summary().se;
  out.P_cond_se = C * sc.summary().se;

  // Independent batch: the D-components at fresh g_t average to zero.
  RunningStats c1, c2, c3;
  for (std::size_t k = 0; k < n; ++k) {
    oracle.sample_into(traj.x(t), stream, gs);
    const auto s = eval(gs);
    c1.add(e1 - s.a1);
    c2.add(e2 - s.a2);
    c3.add(k1 * (s.a3 - e3));
  }
  const std::array<MeanSE, 3> cs = {c1.summary(), c2.summary(), c3.summary()};
  for (std::size_t j = 0; j < 3; ++j) {
    out.D_check_mean[j] = cs[j].mean;
    out.D_check_se[j] = std::hypot(cs[j].se, out.D_cond_se[j]);
  }

  // Left-hand side: potential difference along the realized step.
  const auto y_t = momentum_removed_point(traj, b1, t);
  const auto y_n = momentum_removed_point(traj, b1, t + 1);
  double pot_next = obj.value(y_n), pot_cur = obj.value(y_t), descent = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    pot_next += gam[i] * grad_next[i] * grad_next[i];
    pot_cur += gp[i] * grad_x[i] * grad_x[i];
    descent += gp[i] * grad_x[i] * grad_x[i];
  }
  out.lhs = pot_next - pot_cur;
  out.descent = -descent / 8.0;

  // Residual P_t, term by term.
  double gm_prev = 0.0, gg = 0.0, diff_m = 0.0, gm_cur = 0.0, grad_term = 0.0, last = 0.0;
  const double eps_shift = eps / (std::sqrt(Td) + std::sqrt(Td - 1.0));
  for (std::size_t i = 0; i < d; ++i) {
    const double a = gp[i] * mp[i];
    gm_prev += a * a;
    gg += (gam[i] * g[i]) * (gam[i] * g[i]);
    diff_m += (gp[i] - gam[i]) * (gp[i] - gam[i]) * mp[i] * mp[i];
    gm_cur += (gam[i] * m[i]) * (gam[i] * m[i]);
    grad_term += (std::abs(grad_x[i]) + std::sqrt(C) + eps_shift) / eta * a * a;
    last += gp[i] * std::abs(grad_y[i] * mp[i]);
  }
  const double om2 = (1.0 - b1) * (1.0 - b1);
  out.P = (b1 * b1 * L / (2.0 * om2) + b1 * b1 * L * L * eta / (4.0 * om2 * std::sqrt(v))) * gm_prev +
          1.5 * L * gg + b1 * b1 * L / om2 * diff_m + 140.0 * dd * L * L * eta / std::sqrt(v) * gm_cur +
          C * ec + 8.0 * b1 * (1.0 + b1) / om2 * Td / (Td - 1.0) * grad_term + k1 / Td * last;
  return out;
}

/// lhs <= descent + D + P + 5 * pooled SE (plus rounding slack).
inline CheckResult check_descent(const Trajectory& traj, std::size_t t, std::size_t n,
                                 RngStream& stream) {
  const auto terms = descent_terms(traj, t, n, stream);
  detail::CheckAccumulator acc("DESCENT");
  acc.leq(terms.lhs, terms.rhs() + 5.0 * terms.pooled_se, t);
  return std::move(acc).result();
}

// ---------------------------------------------------------------------------
// Randomized suites.
// ---------------------------------------------------------------------------

/// One randomly drawn calibrated Adam problem. `seed` alone reproduces it.
struct SuiteCase {
  std::uint64_t seed = 0;
  std::size_t d = 1;
  std::size_t T = 10;
  double beta1 = 0.0;
  std::shared_ptr<const Oracle> oracle;
  OptimizerSpec optimizer;
  RealVec x1;

  Trajectory run() const {
    RngStream stream(seed, 0, "noise");
    return run_trajectory(optimizer, *oracle, x1, T, stream);
  }
};

/// Per-case seed derived from the suite seed and case index.
inline std::uint64_t suite_case_seed(std::uint64_t master_seed, std::uint64_t k) noexcept {
  return detail::splitmix64(detail::splitmix64(master_seed) ^ (k + 1));
}

namespace detail {

template <class T, std::size_t N>
const T& pick(const std::array<T, N>& options, RngStream& s) {
  const auto k = static_cast<std::size_t>(s.uniform01() * static_cast<double>(N));
  return options[std::min(k, N - 1)];
}

inline std::size_t uniform_int(RngStream& s, std::size_t lo, std::size_t hi) {
  const auto span = static_cast<double>(hi - lo + 1);
  return lo + std::min(static_cast<std::size_t>(s.uniform01() * span), hi - lo);
}

inline Objective random_objective(RngStream& s, std::size_t d) {
  if (s.uniform01() < 0.5) {
    std::vector<double> lambda(d);
    for (double& l : lambda) l = 0.1 + 4.9 * s.uniform01();
    return Objective::quadratic_diag(std::move(lambda));
  }
  return Objective::quadratic_cosine(d);
}

inline RealVec random_start(RngStream& s, std::size_t d) {
  RealVec x(d);
  for (std::size_t i = 0; i < d; ++i) x[i] = 4.0 * (2.0 * s.uniform01() - 1.0);
  return x;
}

}  // namespace detail

/// Calibrated Adam case: d in [1,8], T in [10,200], beta1 in {0, 0.5, 0.9},
/// Gaussian sigma in {0, 0.5, 2} or three-point A in {2, 10} (then d = 1),
/// eps and v0 varied, eta a random fraction of max_eta.
inline SuiteCase make_suite_case(std::uint64_t case_seed) {
  RngStream s(case_seed, 0, "init");
  SuiteCase c;
  c.seed = case_seed;
  c.beta1 = detail::pick(std::array{0.0, 0.5, 0.9}, s);
  const bool three_point = s.uniform01() < 0.4;
  NoiseSpec noise;
  if (three_point) {
    noise = ThreePointNoise{detail::pick(std::array{2.0, 10.0}, s)};
    c.d = 1;
  } else {
    noise = GaussianNoise{detail::pick(std::array{0.0, 0.5, 2.0}, s)};
    c.d = detail::uniform_int(s, 1, 8);
  }
  c.T = detail::uniform_int(s, 10, 200);
  auto objective = detail::random_objective(s, c.d);
  const double L = objective.smoothness();
  c.oracle = std::make_shared<const Oracle>(std::move(objective), noise);
  const double eps = detail::pick(std::array{1e-8, 1e-4, 1e-1}, s);
  const double v0 = detail::pick(std::array{0.25, 1.0, 4.0}, s);
  const double eta = max_eta(c.d, v0, eps, c.beta1, L) * (0.05 + 0.95 * s.uniform01());
  c.optimizer = calibrate(eta, c.T, c.beta1, eps, v0);
  c.x1 = detail::random_start(s, c.d);
  return c;
}

/// RMSProp case for the fixed-beta2 self-normalization check; beta2 cycles
/// through {0, 0.1, 0.5, 0.9, 0.99} with the case index.
inline SuiteCase make_gen_beta_case(std::uint64_t case_seed, std::size_t k) {
  static constexpr std::array<double, 5> kBeta2 = {0.0, 0.1, 0.5, 0.9, 0.99};
  RngStream s(case_seed, 0, "init");
  SuiteCase c;
  c.seed = case_seed;
  const bool three_point = s.uniform01() < 0.4;
  NoiseSpec noise;
  if (three_point) {
    noise = ThreePointNoise{detail::pick(std::array{2.0, 10.0}, s)};
    c.d = 1;
  } else {
    noise = GaussianNoise{detail::pick(std::array{0.0, 0.5, 2.0}, s)};
    c.d = detail::uniform_int(s, 1, 8);
  }
  c.T = detail::uniform_int(s, 10, 200);
  c.oracle = std::make_shared<const Oracle>(detail::random_objective(s, c.d), noise);
  RmspropParams p;
  p.gamma = std::exp(std::log(1e-3) + s.uniform01() * std::log(1e3));  // log-uniform in [1e-3, 1]
  p.beta2 = kBeta2[k % kBeta2.size()];
  p.eps = detail::pick(std::array{1e-8, 1e-4, 1e-1}, s);
  p.v0 = detail::pick(std::array{0.25, 1.0, 4.0}, s);
  p.validate();
  c.optimizer = p;
  c.x1 = detail::random_start(s, c.d);
  return c;
}

/// One failed check, as written to the violations report.
struct Violation {
  std::string check_id;
  std::uint64_t seed = 0;
  std::size_t d = 0;
  std::size_t T = 0;
  double beta1 = 0.0;
  double margin = 0.0;
  std::size_t worst_t = 0;
  std::size_t worst_i = 0;
};

struct SuiteReport {
  std::size_t cases = 0;
  std::size_t checks_run = 0;
  std::map<std::string, std::size_t> failures_by_check;
  std::vector<Violation> violations;  // in case order, then catalog order

  bool clean() const noexcept { return violations.empty(); }
};

namespace detail {

inline Violation violation_of(const SuiteCase& c, const CheckResult& r) {
  return {r.check_id, c.seed, c.d, c.T, c.beta1, r.margin, r.worst_t, r.worst_i};
}

inline SuiteReport merge(std::vector<std::vector<Violation>>& per_case, std::size_t checks_run) {
  SuiteReport rep;
  rep.cases = per_case.size();
  rep.checks_run = checks_run;
  for (auto& vs : per_case)
    for (auto& v : vs) {
      ++rep.failures_by_check[v.check_id];
      rep.violations.push_back(std::move(v));
    }
  return rep;
}

}  // namespace detail

/// Runs the catalog (GEN-BETA only on beta1 = 0 cases) on `count` random cases.
/// A run that diverges is reported as check "RUN" with the step in worst_t.
inline SuiteReport run_lemma_suite(std::size_t count, std::uint64_t master_seed,
                                   std::size_t workers = 1) {
  if (count == 0) throw ConfigError("lemma suite: count must be positive");
  std::vector<std::vector<Violation>> per_case(count);
  std::atomic<std::size_t> checks_run{0};
  parallel_for(count, workers, [&](std::size_t k) {
    const auto c = make_suite_case(suite_case_seed(master_seed, k));
    auto& out = per_case[k];
    try {
      const auto traj = c.run();
      for (const auto& id : check_catalog()) {
        if (id == "GEN-BETA" && c.beta1 != 0.0) continue;
        const auto r = run_pathwise_check(id, traj);
        ++checks_run;
        if (!r.holds) out.push_back(detail::violation_of(c, r));
      }
    } catch (const DivergenceError& e) {
      out.push_back({"RUN", c.seed, c.d, c.T, c.beta1, -std::numeric_limits<double>::infinity(),
                     e.step(), 0});
    }
  });
  return detail::merge(per_case, checks_run.load());
}

/// GEN-BETA on `count` RMSProp runs with beta2 cycling through {0, 0.1, 0.5, 0.9, 0.99}.
inline SuiteReport run_gen_beta_suite(std::size_t count, std::uint64_t master_seed,
                                      std::size_t workers = 1) {
  if (count == 0) throw ConfigError("gen-beta suite: count must be positive");
  std::vector<std::vector<Violation>> per_case(count);
  parallel_for(count, workers, [&](std::size_t k) {
    const auto c = make_gen_beta_case(suite_case_seed(master_seed ^ 0x6E0BE7AULL, k), k);
    try {
      const auto r = run_pathwise_check("GEN-BETA", c.run());
      if (!r.holds) per_case[k].push_back(detail::violation_of(c, r));
    } catch (const DivergenceError& e) {
      per_case[k].push_back({"RUN", c.seed, c.d, c.T, c.beta1,
                             -std::numeric_limits<double>::infinity(), e.step(), 0});
    }
  });
  return detail::merge(per_case, count);
}

/// Outcome of the descent inequality at one random (case, t) pair.
struct DescentRecord {
  std::uint64_t seed = 0;
  std::size_t t = 0;
  DescentTerms terms;
  bool holds = false;                  // lhs <= rhs + 5 pooled SE
  std::array<bool, 3> d_mean_ok{};     // |D_check_mean| <= 4 D_check_se
};

struct DescentSuiteReport {
  std::vector<DescentRecord> records;
  std::size_t holds_count = 0;
  std::size_t d_mean_ok_count = 0;  // records with all three components within 4 SE
};

inline DescentSuiteReport run_descent_suite(std::size_t pairs, std::size_t n,
                                            std::uint64_t master_seed, std::size_t workers = 1) {
  if (pairs == 0) throw ConfigError("descent suite: pairs must be positive");
  std::vector<DescentRecord> recs(pairs);
  parallel_for(pairs, workers, [&](std::size_t k) {
    const auto c = make_suite_case(suite_case_seed(master_seed ^ 0xDE5CE27ULL, k));
    const auto traj = c.run();
    RngStream pick(c.seed, 0, "pick-t");
    const std::size_t t = detail::uniform_int(pick, 1, traj.steps() - 1);
    RngStream resample(c.seed, t, "resample");
    auto& r = recs[k];
    r.seed = c.seed;
    r.t = t;
    r.terms = descent_terms(traj, t, n, resample);
    r.holds = r.terms.lhs <= r.terms.rhs() + 5.0 * r.terms.pooled_se +
                                 kRoundingSlack * (1.0 + std::abs(r.terms.lhs) + std::abs(r.terms.rhs()));
    for (std::size_t j = 0; j < 3; ++j)
      r.d_mean_ok[j] = std::abs(r.terms.D_check_mean[j]) <= 4.0 * r.terms.D_check_se[j];
  });
  DescentSuiteReport rep;
  for (auto& r : recs) {
    rep.holds_count += r.holds;
    rep.d_mean_ok_count += r.d_mean_ok[0] && r.d_mean_ok[1] && r.d_mean_ok[2];
    rep.records.push_back(std::move(r));
  }
  return rep;
}

}  // namespace adamsep
