#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "adamsep/errors.hpp"
#include "adamsep/kernel.hpp"
#include "adamsep/optimizers.hpp"
#include "adamsep/parallel.hpp"
#include "adamsep/problems.hpp"

// Hard instances for SGD on f(x) = x^2 / 2 with three-point noise.

namespace adamsep {

enum class LBMetric { avg, weighted };
enum class ShockCase { signed_shock, unsigned_shock };

inline LBMetric parse_lb_metric(const std::string& s) {
  if (s == "avg") return LBMetric::avg;
  if (s == "weighted") return LBMetric::weighted;
  throw ConfigError("unknown lower-bound metric '" + s + "' (expected avg or weighted)");
}

/// Relative rounding allowance for comparisons that are tight in exact arithmetic.
inline constexpr double kTightSlack = 1e-12;

namespace detail {

/// Shared description of a one-dimensional SGD hard instance:
///   x_{t+1} = x_t - w_t (x_t + xi_t),  t = 1..n_noise,
/// metric over x_1..x_T with weights w_1..w_T.
struct HardInstanceView {
  std::vector<double> w;  // length T
  std::size_t T = 0;
  std::size_t n_noise = 0;
  std::size_t m = 0;      // shocks allowed at 1..m
  double A = 1.0;
  double x_init = 0.0;
};

inline bool at_least(double value, double bound) {
  return value >= bound - kTightSlack * std::abs(bound);
}

}  // namespace detail

/// Constant-step instance. Built through `build_const_instance`, which enforces
/// delta < delta_threshold; `unchecked` skips only the admissibility clauses
/// and exists for exact-probability cross-checks at small T.
struct ConstStepInstance {
  double gamma = 0.0;
  std::size_t T = 0;
  double delta = 0.0;
  double x_init = 0.0;
  double A2 = 0.0;
  double A = 0.0;
  double p = 0.0;
  std::size_t m = 0;
  double R = 0.0;  // response factor (gamma < 1 only)
  double delta_threshold = 0.0;

  static ConstStepInstance unchecked(double gamma, std::size_t T, double delta, double x_init) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("const instance: gamma must be > 0");
    if (T < 2) throw ConfigError("const instance: T must be >= 2");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("const instance: delta must lie in (0,1)");
    if (!std::isfinite(x_init)) throw ConfigError("const instance: x_init must be finite");
    ConstStepInstance c;
    c.gamma = gamma;
    c.T = T;
    c.delta = delta;
    c.x_init = x_init;
    const double Td = static_cast<double>(T);
    c.A2 = Td / (16.0 * delta);
    c.A = std::sqrt(c.A2);
    c.p = 16.0 * delta / Td;
    c.m = T / 2;
    if (gamma < 1.0) {
      const double q = (1.0 - gamma) * (1.0 - gamma);
      double s = 0.0, qr = 1.0;
      for (std::size_t r = 0; r + 1 <= T - c.m; ++r, qr *= q) s += qr;
      c.R = gamma * gamma * s;
      c.delta_threshold = std::min({1.0 / 64.0, std::exp(-1.0 / (32.0 * c.R * std::sqrt(Td))),
                                    std::exp(-1.0 / std::sqrt(32.0 * gamma * Td * c.R))});
    } else {
      c.delta_threshold = 1.0 / 64.0;
    }
    return c;
  }

  detail::HardInstanceView view() const {
    return {std::vector<double>(T, gamma), T, T - 1, m, A, x_init};
  }
};

inline ConstStepInstance build_const_instance(double gamma, std::size_t T, double delta,
                                              double x_init) {
  if (T < 10) throw ConfigError("const instance: T must be >= 10 (got " + std::to_string(T) + ")");
  auto c = ConstStepInstance::unchecked(gamma, T, delta, x_init);
  if (!(delta < 1.0 / 64.0))
    throw InstanceInvalidError("delta < 1/64", "delta must be below 1/64");
  if (gamma < 1.0) {
    const double Td = static_cast<double>(T);
    if (!(delta < std::exp(-1.0 / (32.0 * c.R * std::sqrt(Td)))))
      throw InstanceInvalidError("delta < exp(-1/(32 R sqrt(T)))",
                                 "delta must be below exp(-1/(32 R sqrt(T)))");
    if (!(delta < std::exp(-1.0 / std::sqrt(32.0 * gamma * Td * c.R))))
      throw InstanceInvalidError("delta < exp(-1/sqrt(32 gamma T R))",
                                 "delta must be below exp(-1/sqrt(32 gamma T R))");
  }
  if (!(c.A >= 1.0)) throw InstanceInvalidError("A >= 1", "noise amplitude below 1");
  return c;
}

/// sigma with |a - sigma b| >= b: +1 when a <= 0, else -1.
inline int sign_choice(double a, double b) {
  if (!(b >= 0.0)) throw PreconditionError("sign_choice: b must be >= 0");
  return a <= 0.0 ? +1 : -1;
}

/// Sign of the shock at j for the signed event (gamma < 1).
inline int shock_sign(const ConstStepInstance& inst, std::size_t j) {
  const double xj = std::pow(1.0 - inst.gamma, static_cast<double>(j - 1)) * inst.x_init;
  return sign_choice((1.0 - inst.gamma) * xj, inst.gamma * inst.A);
}

/// signed:   m (8 delta / T) (1 - p)^{T-2}   (gamma < 1)
/// unsigned: m (16 delta / T) (1 - p)^{T-2}  (gamma >= 1)
inline double one_shock_prob_exact(const ConstStepInstance& inst, ShockCase c) {
  const bool small = inst.gamma < 1.0;
  if (small != (c == ShockCase::signed_shock))
    throw PreconditionError("one_shock_prob_exact: signed case needs gamma < 1, unsigned gamma >= 1");
  const double Td = static_cast<double>(inst.T);
  const double per = (c == ShockCase::signed_shock ? 8.0 : 16.0) * inst.delta / Td;
  return static_cast<double>(inst.m) * per * std::exp((Td - 2.0) * std::log1p(-inst.p));
}

/// A deterministic single-shock SGD path with its energies.
struct ShockedPath {
  std::size_t j = 0;
  int sigma = 1;
  std::vector<double> x;     // x_1..x_T
  double sum_sq = 0.0;       // sum_t x_t^2
  double weighted_sq = 0.0;  // sum_t w_t x_t^2
  std::shared_ptr<const Trajectory> trajectory;

  double metric(LBMetric m) const {
    return m == LBMetric::avg ? sum_sq / static_cast<double>(x.size()) : weighted_sq;
  }
};

namespace detail {

inline ShockedPath shocked_path(const HardInstanceView& h, std::size_t j, int sigma) {
  if (j < 1 || j > h.m) throw InputError("shocked trajectory: shock index out of range");
  if (sigma != 1 && sigma != -1) throw InputError("shocked trajectory: sigma must be +1 or -1");
  auto oracle =
      std::make_shared<const Oracle>(Objective::half_square(), ThreePointNoise{h.A});
  std::vector<double> steps(h.w.begin(), h.w.begin() + static_cast<std::ptrdiff_t>(h.n_noise));
  TrajectoryMeta meta{oracle, oracle->objective().id(), describe(oracle->noise()),
                      SgdSpec{StepSchedule::explicit_list(steps)}, 0, 0, "shocked", h.n_noise};
  auto traj = std::make_shared<Trajectory>(std::move(meta), 1, std::span<const double>(&h.x_init, 1));

  ShockedPath out;
  out.j = j;
  out.sigma = sigma;
  out.x.reserve(h.T);
  double x = h.x_init;
  for (std::size_t t = 1; t <= h.n_noise; ++t) {
    const double xi = t == j ? sigma * h.A : 0.0;
    const double g = x + xi;
    const double xn = x - h.w[t - 1] * g;
    traj->record(StepView{t, std::span<const double>(&x, 1), std::span<const double>(&g, 1),
                          std::span<const double>(&x, 1), {}, {}, {},
                          std::span<const double>(&xn, 1), h.w[t - 1]});
    if (t <= h.T) out.x.push_back(x);
    x = xn;
  }
  if (out.x.size() < h.T) out.x.push_back(x);
  for (std::size_t t = 0; t < h.T; ++t) {
    out.sum_sq += out.x[t] * out.x[t];
    out.weighted_sq += h.w[t] * out.x[t] * out.x[t];
  }
  out.trajectory = std::move(traj);
  return out;
}

}  // namespace detail

/// Noise-free path except xi_j = sigma A.
inline ShockedPath shocked_trajectory(const ConstStepInstance& inst, std::size_t j, int sigma) {
  return detail::shocked_path(inst.view(), j, sigma);
}

/// Binomial estimate with its standard error.
struct MCEstimate {
  double estimate = 0.0;
  double se = 0.0;
  std::size_t N = 0;
  std::size_t hits = 0;
};

inline MCEstimate binomial_estimate(std::size_t hits, std::size_t N) {
  const double p = static_cast<double>(hits) / static_cast<double>(N);
  return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(N)), N, hits};
}

/// All outputs of a Monte Carlo sweep over independent SGD runs.
struct LBMonteCarlo {
  MCEstimate exceed;       // P(metric >= threshold)
  MCEstimate one_shock;    // exactly one nonzero noise, at some j <= m (any sign)
  MCEstimate signed_shock; // additionally xi_j = sigma_j A (constant-step sign rule)
};

namespace detail {

/// Runs N seeded SGD simulations through the library oracle and recursion.
/// Run i uses stream (master_seed, i, "lb-noise"). `sigma_of(j)` gives the
/// signed-event sign for shock j.
template <class SigmaOf>
LBMonteCarlo monte_carlo(const HardInstanceView& h, LBMetric metric, double threshold,
                         std::size_t N, std::uint64_t master_seed, std::size_t workers,
                         SigmaOf&& sigma_of) {
  if (N < 1000) throw ConfigError("mc_event_prob: N must be >= 1000");
  const Oracle oracle(Objective::half_square(), ThreePointNoise{h.A});
  std::vector<double> steps(h.w.begin(), h.w.begin() + static_cast<std::ptrdiff_t>(h.n_noise));
  const OptimizerSpec spec = SgdSpec{StepSchedule::explicit_list(steps)};
  const RealVec x1{h.x_init};
  const double Td = static_cast<double>(h.T);
  // flags: bit0 exceed, bit1 one-shock, bit2 signed one-shock
  std::vector<unsigned char> flags(N, 0);
  parallel_for(N, workers, [&](std::size_t i) {
    RngStream stream(master_seed, i, "lb-noise");
    double sum = 0.0, wsum = 0.0, x_last = 0.0;
    std::size_t nonzero = 0, where = 0;
    double xi_where = 0.0;
    const auto outcome = simulate(spec, oracle, x1, h.n_noise, stream, [&](const StepView& s) {
      if (s.t <= h.T) {
        sum += s.x[0] * s.x[0];
        wsum += h.w[s.t - 1] * s.x[0] * s.x[0];
      }
      const double xi = s.g[0] - s.grad[0];
      if (xi != 0.0) {
        ++nonzero;
        where = s.t;
        xi_where = xi;
      }
      x_last = s.x_next[0];
    });
    if (outcome.diverged_at) {
      flags[i] = 1;  // a nonfinite path exceeds every finite threshold
      return;
    }
    if (h.n_noise < h.T) {
      sum += x_last * x_last;
      wsum += h.w[h.T - 1] * x_last * x_last;
    }
    const double value = metric == LBMetric::avg ? sum / Td : wsum;
    unsigned char f = value >= threshold ? 1 : 0;
    if (nonzero == 1 && where >= 1 && where <= h.m) {
      f |= 2;
      if ((xi_where > 0.0 ? 1 : -1) == sigma_of(where)) f |= 4;
    }
    flags[i] = f;
  });
  std::size_t e = 0, o = 0, s = 0;
  for (unsigned char f : flags) {
    e += f & 1;
    o += (f >> 1) & 1;
    s += (f >> 2) & 1;
  }
  return {binomial_estimate(e, N), binomial_estimate(o, N), binomial_estimate(s, N)};
}

}  // namespace detail

inline LBMonteCarlo mc_const_instance(const ConstStepInstance& inst, LBMetric metric,
                                      double threshold, std::size_t N, std::uint64_t master_seed,
                                      std::size_t workers = 1) {
  return detail::monte_carlo(inst.view(), metric, threshold, N, master_seed, workers,
                             [&](std::size_t j) { return shock_sign(inst, j); });
}

/// Exceedance probability of the metric over N simulated runs.
inline MCEstimate mc_event_prob(const ConstStepInstance& inst, LBMetric metric, double threshold,
                                std::size_t N, std::uint64_t master_seed, std::size_t workers = 1) {
  return mc_const_instance(inst, metric, threshold, N, master_seed, workers).exceed;
}

/// Exact probabilities by summing over all 3^{T-1} noise patterns.
struct EnumerationResult {
  std::size_t patterns = 0;
  double total = 0.0;          // sum of all pattern probabilities (should be 1)
  double one_shock = 0.0;      // exactly one nonzero noise, at j <= m
  double signed_shock = 0.0;   // ... with xi_j = sigma_j A
  double exceed = 0.0;         // P(metric >= threshold)
};

inline EnumerationResult enumerate_const_instance(const ConstStepInstance& inst, LBMetric metric,
                                                  double threshold) {
  const std::size_t n = inst.T - 1;
  if (n > 16) throw ConfigError("enumeration: at most 16 noises (T <= 17)");
  std::size_t count = 1;
  for (std::size_t k = 0; k < n; ++k) count *= 3;
  const double half_p = 0.5 / inst.A2, zero_p = 1.0 - 1.0 / inst.A2;
  EnumerationResult r;
  r.patterns = count;
  std::vector<int> digit(n);
  for (std::size_t code = 0; code < count; ++code) {
    std::size_t c = code;
    for (std::size_t k = 0; k < n; ++k, c /= 3) digit[k] = static_cast<int>(c % 3);  // 0, +A, -A
    double prob = 1.0, x = inst.x_init, sum = 0.0;
    std::size_t nonzero = 0, where = 0;
    int sign = 0;
    for (std::size_t t = 1; t <= n; ++t) {
      const int dg = digit[t - 1];
      const double xi = dg == 0 ? 0.0 : (dg == 1 ? inst.A : -inst.A);
      prob *= dg == 0 ? zero_p : half_p;
      if (dg != 0) {
        ++nonzero;
        where = t;
        sign = dg == 1 ? 1 : -1;
      }
      sum += x * x;
      x = x - inst.gamma * (x + xi);
    }
    sum += x * x;
    const double value =
        metric == LBMetric::avg ? sum / static_cast<double>(inst.T) : inst.gamma * sum;
    r.total += prob;
    if (value >= threshold) r.exceed += prob;
    if (nonzero == 1 && where <= inst.m) {
      r.one_shock += prob;
      if (sign == shock_sign(inst, where)) r.signed_shock += prob;
    }
  }
  return r;
}

/// Verification outcome for one hard instance.
struct LBReport {
  std::string kind;  // "const-step", "time-varying", "time-varying-corollary"
  LBMetric metric = LBMetric::avg;
  std::vector<std::pair<std::string, double>> instance;  // summary fields in a fixed order
  double exact_event_prob = 0.0;
  double prob_lower_bound_target = 0.0;
  double metric_threshold = 0.0;
  double conditional_energy = 0.0;  // min over shock positions of the metric
  std::size_t worst_shock = 0;
  std::optional<MCEstimate> mc;
  std::vector<std::pair<std::string, bool>> verdicts;

  bool all_true() const {
    return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.second; });
  }
};

inline double const_metric_threshold(const ConstStepInstance& inst, LBMetric metric) {
  const double L = std::log(1.0 / inst.delta);
  return metric == LBMetric::avg
             ? 1.0 / (512.0 * inst.delta * std::sqrt(static_cast<double>(inst.T)) * L)
             : 1.0 / (512.0 * inst.delta * L * L);
}

/// Checks the two clauses behind the constant-step lower bounds:
/// (i) the one-shock event has probability > delta; (ii) on every shock
/// position the metric clears the stated threshold. The response bound
/// (sum x^2 >= A^2 R, or x_j^2 + x_{j+1}^2 >= A^2/2 for gamma >= 1) is
/// reported as a separate verdict.
inline LBReport verify_const_instance(const ConstStepInstance& inst, LBMetric metric) {
  LBReport rep;
  rep.kind = "const-step";
  rep.metric = metric;
  rep.instance = {{"gamma", inst.gamma},
                  {"T", static_cast<double>(inst.T)},
                  {"delta", inst.delta},
                  {"x_init", inst.x_init},
                  {"A", inst.A},
                  {"A2", inst.A2},
                  {"p", inst.p},
                  {"m", static_cast<double>(inst.m)},
                  {"R", inst.R},
                  {"delta_threshold", inst.delta_threshold}};
  const bool small = inst.gamma < 1.0;
  rep.exact_event_prob =
      one_shock_prob_exact(inst, small ? ShockCase::signed_shock : ShockCase::unsigned_shock);
  rep.prob_lower_bound_target = inst.delta;
  rep.metric_threshold = const_metric_threshold(inst, metric);

  bool response_ok = true;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t j = 1; j <= inst.m; ++j) {
    const std::vector<int> sigmas =
        small ? std::vector<int>{shock_sign(inst, j)} : std::vector<int>{1, -1};
    for (int sigma : sigmas) {
      const auto path = shocked_trajectory(inst, j, sigma);
      if (small) {
        response_ok = response_ok && detail::at_least(path.sum_sq, inst.A2 * inst.R);
      } else {
        const double pair = path.x[j - 1] * path.x[j - 1] + path.x[j] * path.x[j];
        response_ok = response_ok && detail::at_least(pair, 0.5 * inst.A2);
      }
      const double value = path.metric(metric);
      if (value < worst) {
        worst = value;
        rep.worst_shock = j;
      }
    }
  }
  rep.conditional_energy = worst;
  rep.verdicts = {{"event_prob_exceeds_target", rep.exact_event_prob > rep.prob_lower_bound_target},
                  {"response_bound_holds", response_ok},
                  {"energy_exceeds_threshold", worst >= rep.metric_threshold}};
  return rep;
}

// ---------------------------------------------------------------------------
// Time-varying step sizes.
// ---------------------------------------------------------------------------

struct TVInstance {
  std::vector<double> schedule;  // eta_1..eta_T
  std::size_t T = 0;
  double delta_bar = 0.0;
  double A2 = 0.0;
  double A = 0.0;
  double p = 0.0;
  std::size_t m = 0;  // |I_T|
  double R_T = 0.0;
  double Q_T = 0.0;
  std::size_t argmin_R = 0;
  std::size_t argmin_Q = 0;

  detail::HardInstanceView view() const { return {schedule, T, T, m, A, 0.0}; }
};

/// Response sums for a shock at s: (sum_{t>s} Pi_{s,t}^2, sum_{t>s} eta_t Pi_{s,t}^2).
inline std::pair<double, double> tv_response_sums(const std::vector<double>& eta, std::size_t s) {
  double pi = 1.0, r = 0.0, q = 0.0;  // Pi_{s,s+1} = 1
  for (std::size_t t = s + 1; t <= eta.size(); ++t) {
    r += pi * pi;
    q += eta[t - 1] * pi * pi;
    pi *= 1.0 - eta[t - 1];
  }
  return {r, q};
}

inline TVInstance build_tv_instance(std::vector<double> schedule, std::size_t T, double delta_bar) {
  if (T <= 10) throw ConfigError("tv instance: T must be > 10 (got " + std::to_string(T) + ")");
  if (schedule.size() != T)
    throw InputError("tv instance: schedule length " + std::to_string(schedule.size()) +
                     " differs from T = " + std::to_string(T));
  for (double e : schedule)
    if (!(e >= 0.0) || !std::isfinite(e)) throw InputError("tv instance: entries must be >= 0");
  if (!(delta_bar > 0.0 && delta_bar < 1.0))
    throw ConfigError("tv instance: delta_bar must lie in (0,1)");
  TVInstance inst;
  inst.T = T;
  inst.delta_bar = delta_bar;
  const double Td = static_cast<double>(T);
  inst.A2 = 4.0 * Td / delta_bar;
  inst.A = std::sqrt(inst.A2);
  inst.p = delta_bar / (4.0 * Td);
  inst.m = T / 2;
  inst.R_T = inst.Q_T = std::numeric_limits<double>::infinity();
  for (std::size_t s = 1; s <= inst.m; ++s) {
    const auto [r, q] = tv_response_sums(schedule, s);
    const double e2 = schedule[s - 1] * schedule[s - 1];
    if (e2 * r < inst.R_T) inst.R_T = e2 * r, inst.argmin_R = s;
    if (e2 * q < inst.Q_T) inst.Q_T = e2 * q, inst.argmin_Q = s;
  }
  inst.schedule = std::move(schedule);
  return inst;
}

/// Response factors of an arbitrary schedule without the instance checks.
/// Useful for short horizons where a full instance is not admissible.
inline std::pair<double, double> tv_response_factors(const std::vector<double>& eta) {
  const std::size_t m = eta.size() / 2;
  if (m == 0) throw InputError("tv response: need T >= 2");
  double R = std::numeric_limits<double>::infinity(), Q = R;
  for (std::size_t s = 1; s <= m; ++s) {
    const auto [r, q] = tv_response_sums(eta, s);
    R = std::min(R, eta[s - 1] * eta[s - 1] * r);
    Q = std::min(Q, eta[s - 1] * eta[s - 1] * q);
  }
  return {R, Q};
}

/// |I_T| p (1 - p)^{T-1}.
inline double tv_event_prob_exact(const TVInstance& inst) {
  return static_cast<double>(inst.m) * inst.p *
         std::exp((static_cast<double>(inst.T) - 1.0) * std::log1p(-inst.p));
}

/// x_1 = 0 and a single shock xi_s = sigma A.
inline ShockedPath tv_shocked_trajectory(const TVInstance& inst, std::size_t s, int sigma = 1) {
  return detail::shocked_path(inst.view(), s, sigma);
}

namespace detail {

inline LBReport tv_report(const TVInstance& inst, LBMetric metric, double threshold,
                          double prob_target, std::string kind) {
  LBReport rep;
  rep.kind = std::move(kind);
  rep.metric = metric;
  rep.instance = {{"T", static_cast<double>(inst.T)},
                  {"delta_bar", inst.delta_bar},
                  {"A", inst.A},
                  {"A2", inst.A2},
                  {"p", inst.p},
                  {"m", static_cast<double>(inst.m)},
                  {"R_T", inst.R_T},
                  {"Q_T", inst.Q_T}};
  rep.exact_event_prob = tv_event_prob_exact(inst);
  rep.prob_lower_bound_target = prob_target;
  rep.metric_threshold = threshold;
  const double Td = static_cast<double>(inst.T);
  const double response = metric == LBMetric::avg ? (4.0 / inst.delta_bar) * inst.R_T
                                                  : (4.0 * Td / inst.delta_bar) * inst.Q_T;
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t s = 1; s <= inst.m; ++s) {
    const double v = tv_shocked_trajectory(inst, s).metric(metric);
    if (v < worst) worst = v, rep.worst_shock = s;
  }
  rep.conditional_energy = worst;
  rep.verdicts = {{"event_prob_exceeds_target", rep.exact_event_prob > prob_target},
                  {"response_bound_holds", at_least(worst, response)},
                  {"energy_exceeds_threshold", at_least(worst, threshold)}};
  return rep;
}

}  // namespace detail

/// Base statements: P(E) > delta_bar / 16 and, on every shock position,
/// (1/T) sum x^2 >= (4/delta_bar) R_T (avg) or sum eta x^2 >= (4T/delta_bar) Q_T (weighted).
inline LBReport verify_tv_instance(const TVInstance& inst, LBMetric metric) {
  const double Td = static_cast<double>(inst.T);
  const double threshold = metric == LBMetric::avg ? (4.0 / inst.delta_bar) * inst.R_T
                                                   : (4.0 * Td / inst.delta_bar) * inst.Q_T;
  return detail::tv_report(inst, metric, threshold, inst.delta_bar / 16.0, "time-varying");
}

/// Upper end of the admissible delta range in corollary mode.
inline double tv_corollary_delta_bound(const TVInstance& inst, LBMetric metric) {
  const double Td = static_cast<double>(inst.T);
  return metric == LBMetric::avg ? std::exp(-1.0 / (4.0 * std::sqrt(Td) * inst.R_T)) / 16.0
                                 : std::exp(-1.0 / (4.0 * Td * inst.Q_T)) / 16.0;
}

/// Small-confidence restatement with delta_bar = 16 delta. Requires the
/// response factor to be positive and delta below the exponential bound;
/// thresholds 1/(32 delta sqrt(T) log(1/delta)) and 1/(32 delta log(1/delta)).
inline LBReport verify_tv_corollary(const std::vector<double>& schedule, std::size_t T,
                                    double delta, LBMetric metric) {
  if (!(delta > 0.0 && delta < 1.0 / 16.0))
    throw InstanceInvalidError("0 < 16 delta < 1", "corollary mode needs 0 < delta < 1/16");
  const auto inst = build_tv_instance(schedule, T, 16.0 * delta);
  const bool avg = metric == LBMetric::avg;
  if (!((avg ? inst.R_T : inst.Q_T) > 0.0))
    throw InstanceInvalidError(avg ? "R_T > 0" : "Q_T > 0", "response factor must be positive");
  if (!(delta < tv_corollary_delta_bound(inst, metric)))
    throw InstanceInvalidError(avg ? "delta < exp(-1/(4 sqrt(T) R_T))/16"
                                   : "delta < exp(-1/(4 T Q_T))/16",
                               "delta above the corollary range");
  const double Td = static_cast<double>(T), L = std::log(1.0 / delta);
  const double threshold = avg ? 1.0 / (32.0 * delta * std::sqrt(Td) * L) : 1.0 / (32.0 * delta * L);
  auto rep = detail::tv_report(inst, metric, threshold, delta, "time-varying-corollary");
  rep.instance.emplace_back("delta", delta);
  return rep;
}

inline LBMonteCarlo mc_tv_instance(const TVInstance& inst, LBMetric metric, double threshold,
                                   std::size_t N, std::uint64_t master_seed,
                                   std::size_t workers = 1) {
  return detail::monte_carlo(inst.view(), metric, threshold, N, master_seed, workers,
                             [](std::size_t) { return 1; });
}

}  // namespace adamsep
