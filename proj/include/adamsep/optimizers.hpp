#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "adamsep/errors.hpp"
#include "adamsep/kernel.hpp"
#include "adamsep/problems.hpp"

namespace adamsep {

/// Adam hyperparameters.
///
/// `calibrated` marks the finite-horizon parameterization beta2 = 1 - 1/T,
/// gamma = eta / sqrt(T) and records eta. Use `calibrate()` or `constant()`
/// to get validated parameters; the aggregate can be filled in directly for
/// analytic hand cases (e.g. eps = 0), which the step functions accept.
struct AdamParams {
  double gamma = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double eps = 1e-8;
  double v0 = 1.0;
  std::size_t T = 1;
  bool calibrated = false;
  double eta = 0.0;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("adam: gamma must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must lie in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must lie in [0,1)");
    if (!(eps > 0.0) || !std::isfinite(eps)) throw ConfigError("adam: eps must be > 0");
    if (!(v0 > 0.0) || !std::isfinite(v0)) throw ConfigError("adam: v0 must be > 0");
    if (T < 1) throw ConfigError("adam: T must be >= 1");
    if (calibrated) {
      if (T < 10) throw ConfigError("adam: calibrated mode requires T >= 10");
      if (!(eta > 0.0)) throw ConfigError("adam: calibrated mode requires eta > 0");
    }
  }

  static AdamParams constant(double gamma, double beta1, double beta2, double eps, double v0,
                             std::size_t T) {
    AdamParams p{gamma, beta1, beta2, eps, v0, T, false, 0.0};
    p.validate();
    return p;
  }

  /// gamma_0 := gamma / (sqrt(v0) + eps), the convention for the t = 0 stepsize.
  double gamma0() const noexcept { return gamma / (std::sqrt(v0) + eps); }
};

/// beta2 = 1 - 1/T and gamma = eta / sqrt(T). Requires T >= 10.
inline AdamParams calibrate(double eta, std::size_t T, double beta1, double eps, double v0) {
  if (T < 10) throw ConfigError("calibrate: T must be >= 10 (got " + std::to_string(T) + ")");
  if (!(eta > 0.0) || !std::isfinite(eta)) throw ConfigError("calibrate: eta must be > 0");
  const double Td = static_cast<double>(T);
  AdamParams p{eta / std::sqrt(Td), beta1, 1.0 - 1.0 / Td, eps, v0, T, true, eta};
  p.validate();
  return p;
}

/// The momentum constant D_{beta1} with
///   D^2 = 4 (1 - beta1) sup_{T >= 10} sum_{r=0}^{T-1} rho(T)^r,  rho(T) = T beta1 / (T - 1).
///
/// The sup is found by scanning T upward from 10. Once rho(T) < 1, every later
/// S(T') is bounded by 1/(1 - rho(T)) (rho decreases in T), so the scan stops
/// as soon as that bound cannot beat the running maximum.
inline double d_beta1(double beta1) {
  if (!(beta1 >= 0.0) || !(beta1 < 1.0)) throw ConfigError("d_beta1: beta1 must lie in [0,1)");
  if (beta1 == 0.0) return 2.0;
  constexpr std::uint64_t kCap = 10'000'000;
  double best = 0.0;
  for (std::uint64_t T = 10; T <= kCap; ++T) {
    const double Td = static_cast<double>(T);
    const double rho = Td * beta1 / (Td - 1.0);
    double S;
    if (rho == 1.0) S = Td;
    else S = -std::expm1(Td * std::log(rho)) / (1.0 - rho);
    best = std::max(best, S);
    if (rho < 1.0 && 1.0 / (1.0 - rho) <= best) return std::sqrt(4.0 * (1.0 - beta1) * best);
  }
  throw PreconditionError("d_beta1: sup not certified within T <= 1e7");
}

/// Largest eta admitted by
///   1/eta >= max{ 8 d eps / v0^{3/2} + 8 d / sqrt(v0),  D_{beta1} beta1 sqrt(d L) / (1 - beta1),  1 }.
inline double max_eta(std::size_t d, double v0, double eps, double beta1, double L) {
  if (d == 0) throw ConfigError("max_eta: d must be positive");
  if (!(v0 > 0.0)) throw ConfigError("max_eta: v0 must be > 0");
  if (!(eps >= 0.0)) throw ConfigError("max_eta: eps must be >= 0");
  if (!(L > 0.0)) throw ConfigError("max_eta: L must be > 0");
  const double dd = static_cast<double>(d);
  const double first = 8.0 * dd * eps / std::pow(v0, 1.5) + 8.0 * dd / std::sqrt(v0);
  const double second =
      beta1 == 0.0 ? 0.0 : d_beta1(beta1) * beta1 * std::sqrt(dd * L) / (1.0 - beta1);
  return 1.0 / std::max({first, second, 1.0});
}

struct AdamState {
  std::size_t t = 0;
  RealVec x;
  RealVec m;
  RealVec v;
};

inline AdamState adam_init(const AdamParams& params, const RealVec& x1) {
  if (!x1.all_finite()) throw InputError("adam_init: x1 must be finite");
  return {0, x1, RealVec(x1.dim(), 0.0), RealVec(x1.dim(), params.v0)};
}

namespace detail {

inline void require_finite(std::span<const double> g, const char* where) {
  for (double e : g)
    if (!std::isfinite(e)) throw InputError(std::string(where) + ": nonfinite gradient");
}

inline bool finite(std::span<const double> s) noexcept {
  for (double e : s)
    if (!std::isfinite(e)) return false;
  return true;
}

}  // namespace detail

/// One step of Adam, in place:
///   m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g*g;
///   gamma_t = gamma / (sqrt(v) + eps);  x <- x - gamma_t * m.
/// Throws DivergenceError carrying the new step index when the state overflows.
inline void adam_step_inplace(AdamState& s, std::span<const double> g, const AdamParams& p,
                              std::span<double> gamma_out) {
  const std::size_t d = s.x.dim();
  if (g.size() != d || gamma_out.size() != d) throw InputError("adam_step: dimension mismatch");
  detail::require_finite(g, "adam_step");
  for (std::size_t i = 0; i < d; ++i) {
    s.m[i] = p.beta1 * s.m[i] + (1.0 - p.beta1) * g[i];
    s.v[i] = p.beta2 * s.v[i] + (1.0 - p.beta2) * (g[i] * g[i]);
    gamma_out[i] = p.gamma / (std::sqrt(s.v[i]) + p.eps);
    s.x[i] = s.x[i] - gamma_out[i] * s.m[i];
  }
  ++s.t;
  if (!s.x.all_finite() || !s.m.all_finite() || !s.v.all_finite())
    throw DivergenceError(s.t, "adam: nonfinite state at step " + std::to_string(s.t));
}

struct AdamStepResult {
  AdamState state;
  RealVec gamma_t;
};

inline AdamStepResult adam_step(AdamState state, const RealVec& g, const AdamParams& params) {
  RealVec gamma_t(g.dim());
  adam_step_inplace(state, g.values(), params, gamma_t.values());
  return {std::move(state), std::move(gamma_t)};
}

/// RMSProp-style update with a fixed beta2 in [0,1):
///   v <- b2 v + (1 - b2) g*g;  gamma_t = gamma / (sqrt(v) + eps);  x <- x - gamma_t * g.
struct RmspropParams {
  double gamma = 0.0;
  double beta2 = 0.0;
  double eps = 1e-8;
  double v0 = 1.0;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("rmsprop: gamma must be > 0");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("rmsprop: beta2 must lie in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("rmsprop: eps must be > 0");
    if (!(v0 > 0.0)) throw ConfigError("rmsprop: v0 must be > 0");
  }
};

inline void rmsprop_step_inplace(RealVec& x, RealVec& v, std::span<const double> g,
                                 const RmspropParams& p, std::span<double> gamma_out,
                                 std::size_t t) {
  const std::size_t d = x.dim();
  if (g.size() != d || v.dim() != d || gamma_out.size() != d)
    throw InputError("rmsprop_step: dimension mismatch");
  detail::require_finite(g, "rmsprop_step");
  for (std::size_t i = 0; i < d; ++i) {
    v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * (g[i] * g[i]);
    gamma_out[i] = p.gamma / (std::sqrt(v[i]) + p.eps);
    x[i] = x[i] - gamma_out[i] * g[i];
  }
  if (!x.all_finite() || !v.all_finite())
    throw DivergenceError(t, "rmsprop: nonfinite state at step " + std::to_string(t));
}

/// Constant step or an explicit nonnegative list (eta_1, ..., eta_T).
class StepSchedule {
public:
  static StepSchedule constant(double eta) {
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("schedule: step must be >= 0");
    StepSchedule s;
    s.constant_ = eta;
    return s;
  }

  static StepSchedule explicit_list(std::vector<double> etas) {
    if (etas.empty()) throw ConfigError("schedule: explicit list must be nonempty");
    for (double e : etas)
      if (!(e >= 0.0) || !std::isfinite(e))
        throw ConfigError("schedule: entries must be finite and >= 0");
    StepSchedule s;
    s.list_ = std::move(etas);
    return s;
  }

  bool is_constant() const noexcept { return list_.empty(); }
  const std::vector<double>& entries() const noexcept { return list_; }
  double constant_value() const noexcept { return constant_; }

  /// eta_t for 1-based t.
  double at(std::size_t t) const {
    if (is_constant()) return constant_;
    if (t < 1 || t > list_.size()) throw InputError("schedule: step index out of range");
    return list_[t - 1];
  }

  void check_horizon(std::size_t T) const {
    if (!is_constant() && list_.size() != T)
      throw ConfigError("schedule: explicit list length " + std::to_string(list_.size()) +
                        " differs from T = " + std::to_string(T));
  }

private:
  double constant_ = 0.0;
  std::vector<double> list_;
};

inline RealVec sgd_step(const RealVec& x, const RealVec& g, double eta_t) {
  require_same_dim(x, g, "sgd_step");
  if (!(eta_t >= 0.0)) throw ConfigError("sgd_step: step must be >= 0");
  RealVec out = x;
  for (std::size_t i = 0; i < x.dim(); ++i) out[i] = x[i] - eta_t * g[i];
  return out;
}

struct SgdSpec {
  StepSchedule schedule = StepSchedule::constant(0.0);
};

using OptimizerSpec = std::variant<AdamParams, RmspropParams, SgdSpec>;

enum class OptimizerKind { adam, rmsprop, sgd };

inline OptimizerKind kind_of(const OptimizerSpec& spec) noexcept {
  return static_cast<OptimizerKind>(spec.index());
}

inline std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
    default: return "sgd";
  }
}

/// Read-only view of one completed step handed to simulation observers.
/// `m` is empty for RMSProp and SGD; `v`/`gamma` are empty for SGD.
struct StepView {
  std::size_t t;
  std::span<const double> x;       // x_t
  std::span<const double> g;       // g_t
  std::span<const double> grad;    // grad f(x_t)
  std::span<const double> m;       // m_t
  std::span<const double> v;       // v_t
  std::span<const double> gamma;   // gamma_t
  std::span<const double> x_next;  // x_{t+1}
  double eta;                      // SGD step eta_t (0 otherwise)
};

struct SimulationOutcome {
  std::size_t completed_steps = 0;
  std::optional<std::size_t> diverged_at;
};

/// Drives the optimizer for T steps, calling `observer(const StepView&)` after each.
///
/// Divergence stops the run before the offending step is reported; the step
/// index is returned in `diverged_at`. The stream is consumed only through
/// the oracle, so runs are a deterministic function of the stream path.
template <class Observer>
SimulationOutcome simulate(const OptimizerSpec& spec, const Oracle& oracle, const RealVec& x1,
                           std::size_t T, RngStream& stream, Observer&& observer) {
  if (T < 1) throw ConfigError("simulate: T must be >= 1");
  const std::size_t d = oracle.dim();
  if (x1.dim() != d) throw InputError("simulate: x1 dimension does not match the oracle");
  if (!x1.all_finite()) throw InputError("simulate: x1 must be finite");

  std::vector<double> x(x1.begin(), x1.end()), x_next(d), g(d), grad(d), gamma(d);
  SimulationOutcome out;

  return std::visit(
      [&](const auto& p) -> SimulationOutcome {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, SgdSpec>) {
          p.schedule.check_horizon(T);
          for (std::size_t t = 1; t <= T; ++t) {
            oracle.sample_into(x, stream, g, grad);
            const double eta = p.schedule.at(t);
            for (std::size_t i = 0; i < d; ++i) x_next[i] = x[i] - eta * g[i];
            if (!detail::finite(g) || !detail::finite(x_next)) {
              out.diverged_at = t;
              return out;
            }
            observer(StepView{t, x, g, grad, {}, {}, {}, x_next, eta});
            x.swap(x_next);
            out.completed_steps = t;
          }
        } else if constexpr (std::is_same_v<P, AdamParams>) {
          AdamState state = adam_init(p, x1);
          for (std::size_t t = 1; t <= T; ++t) {
            std::copy(state.x.begin(), state.x.end(), x.begin());
            oracle.sample_into(x, stream, g, grad);
            try {
              adam_step_inplace(state, g, p, gamma);
            } catch (const InputError&) {
              out.diverged_at = t;
              return out;
            } catch (const DivergenceError&) {
              out.diverged_at = t;
              return out;
            }
            observer(StepView{t, x, g, grad, state.m.values(), state.v.values(), gamma,
                              state.x.values(), 0.0});
            out.completed_steps = t;
          }
        } else {
          RealVec xs = x1;
          RealVec vs(d, p.v0);
          for (std::size_t t = 1; t <= T; ++t) {
            std::copy(xs.begin(), xs.end(), x.begin());
            oracle.sample_into(x, stream, g, grad);
            try {
              rmsprop_step_inplace(xs, vs, g, p, gamma, t);
            } catch (const InputError&) {
              out.diverged_at = t;
              return out;
            } catch (const DivergenceError&) {
              out.diverged_at = t;
              return out;
            }
            observer(StepView{t, x, g, grad, {}, vs.values(), gamma, xs.values(), 0.0});
            out.completed_steps = t;
          }
        }
        return out;
      },
      spec);
}

struct TrajectoryMeta {
  std::shared_ptr<const Oracle> oracle;
  std::string objective_id;
  std::string oracle_spec;
  OptimizerSpec optimizer;
  std::uint64_t master_seed = 0;
  std::uint64_t run_index = 0;
  std::string stage_tag;
  std::size_t T = 0;
};

/// Full per-step record of a run, stored row-major (step, coordinate).
///
/// Accessors take 1-based step indices. `m(0)` is the zero vector, `v(0)` is
/// v0 * 1 and `gamma(0)` is gamma_0 = gamma / (sqrt(v0) + eps), so formulas
/// that reach back one step work uniformly from t = 1.
class Trajectory {
public:
  Trajectory() = default;
  Trajectory(TrajectoryMeta meta, std::size_t d, std::span<const double> x1)
      : meta_(std::move(meta)), d_(d), x_(x1.begin(), x1.end()) {
    const auto k = kind();
    if (k != OptimizerKind::sgd) {
      const double v0 = k == OptimizerKind::adam ? std::get<AdamParams>(meta_.optimizer).v0
                                                 : std::get<RmspropParams>(meta_.optimizer).v0;
      const double g0 = k == OptimizerKind::adam
                            ? std::get<AdamParams>(meta_.optimizer).gamma0()
                            : std::get<RmspropParams>(meta_.optimizer).gamma /
                                  (std::sqrt(v0) + std::get<RmspropParams>(meta_.optimizer).eps);
      v0_row_.assign(d, v0);
      gamma0_row_.assign(d, g0);
    }
    zero_row_.assign(d, 0.0);
  }

  void record(const StepView& s) {
    g_.insert(g_.end(), s.g.begin(), s.g.end());
    grad_.insert(grad_.end(), s.grad.begin(), s.grad.end());
    m_.insert(m_.end(), s.m.begin(), s.m.end());
    v_.insert(v_.end(), s.v.begin(), s.v.end());
    gamma_.insert(gamma_.end(), s.gamma.begin(), s.gamma.end());
    x_.insert(x_.end(), s.x_next.begin(), s.x_next.end());
    eta_.push_back(s.eta);
    ++steps_;
  }

  void mark_diverged(std::size_t t) { diverged_at_ = t; }

  const TrajectoryMeta& meta() const noexcept { return meta_; }
  OptimizerKind kind() const noexcept { return kind_of(meta_.optimizer); }
  std::size_t dim() const noexcept { return d_; }
  /// Number of recorded steps (T unless the run diverged).
  std::size_t steps() const noexcept { return steps_; }
  std::optional<std::size_t> diverged_at() const noexcept { return diverged_at_; }

  const AdamParams& adam() const { return std::get<AdamParams>(meta_.optimizer); }
  const Oracle& oracle() const {
    if (!meta_.oracle) throw InputError("trajectory: no oracle attached");
    return *meta_.oracle;
  }
  const Objective& objective() const { return oracle().objective(); }
  /// v0 for adaptive methods, 0 for SGD.
  double v0() const noexcept { return v0_row_.empty() ? 0.0 : v0_row_.front(); }

  /// x_t for t in [1, steps + 1].
  std::span<const double> x(std::size_t t) const { return row(x_, t - 1); }
  std::span<const double> g(std::size_t t) const { return row(g_, t - 1); }
  std::span<const double> grad(std::size_t t) const { return row(grad_, t - 1); }
  std::span<const double> m(std::size_t t) const {
    if (t == 0) return zero_row_;
    if (kind() != OptimizerKind::adam) return g(t);
    return row(m_, t - 1);
  }
  std::span<const double> v(std::size_t t) const {
    return t == 0 ? std::span<const double>(v0_row_) : row(v_, t - 1);
  }
  std::span<const double> gamma(std::size_t t) const {
    return t == 0 ? std::span<const double>(gamma0_row_) : row(gamma_, t - 1);
  }
  double eta(std::size_t t) const { return eta_.at(t - 1); }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.d_ == b.d_ && a.steps_ == b.steps_ && a.x_ == b.x_ && a.g_ == b.g_ &&
           a.grad_ == b.grad_ && a.m_ == b.m_ && a.v_ == b.v_ && a.gamma_ == b.gamma_ &&
           a.eta_ == b.eta_ && a.diverged_at_ == b.diverged_at_;
  }

private:
  std::span<const double> row(const std::vector<double>& buf, std::size_t k) const {
    if ((k + 1) * d_ > buf.size()) throw InputError("trajectory: step index out of range");
    return std::span<const double>(buf).subspan(k * d_, d_);
  }

  TrajectoryMeta meta_;
  std::size_t d_ = 0;
  std::size_t steps_ = 0;
  std::vector<double> x_, g_, grad_, m_, v_, gamma_, eta_;
  std::vector<double> zero_row_, v0_row_, gamma0_row_;
  std::optional<std::size_t> diverged_at_;
};

/// Divergence during `run_trajectory`; carries the partial trajectory.
class TrajectoryDivergence : public DivergenceError {
public:
  TrajectoryDivergence(std::size_t step, std::shared_ptr<const Trajectory> partial)
      : DivergenceError(step, "trajectory diverged at step " + std::to_string(step)),
        partial_(std::move(partial)) {}
  const Trajectory& partial() const noexcept { return *partial_; }

private:
  std::shared_ptr<const Trajectory> partial_;
};

inline void validate_spec(const OptimizerSpec& spec) {
  std::visit(
      [](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (!std::is_same_v<P, SgdSpec>) p.validate();
      },
      spec);
}

/// Runs T steps and records every step. Throws TrajectoryDivergence on a
/// nonfinite iterate.
inline Trajectory run_trajectory(const OptimizerSpec& spec, const Oracle& oracle, const RealVec& x1,
                                 std::size_t T, RngStream& stream) {
  if (T < 1) throw ConfigError("run_trajectory: T must be >= 1");
  TrajectoryMeta meta{std::make_shared<const Oracle>(oracle), oracle.objective().id(),
                      describe(oracle.noise()), spec,
                      stream.master_seed(), stream.run_index(), stream.stage_tag(), T};
  Trajectory traj(std::move(meta), oracle.dim(), x1.values());
  const auto outcome =
      simulate(spec, oracle, x1, T, stream, [&](const StepView& s) { traj.record(s); });
  if (outcome.diverged_at) {
    traj.mark_diverged(*outcome.diverged_at);
    throw TrajectoryDivergence(*outcome.diverged_at,
                               std::make_shared<const Trajectory>(std::move(traj)));
  }
  return traj;
}

}  // namespace adamsep
