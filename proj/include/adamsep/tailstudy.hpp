#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "adamsep/errors.hpp"
#include "adamsep/kernel.hpp"
#include "adamsep/optimizers.hpp"
#include "adamsep/parallel.hpp"
#include "adamsep/problems.hpp"

namespace adamsep {

enum class TailMetric { avg_gsq, w_gsq, E };

inline TailMetric parse_tail_metric(const std::string& s) {
  if (s == "avg_gsq") return TailMetric::avg_gsq;
  if (s == "w_gsq") return TailMetric::w_gsq;
  if (s == "E") return TailMetric::E;
  throw ConfigError("unknown metric '" + s + "' (expected avg_gsq, w_gsq or E)");
}

inline std::string to_string(TailMetric m) {
  switch (m) {
    case TailMetric::avg_gsq: return "avg_gsq";
    case TailMetric::w_gsq: return "w_gsq";
    default: return "E";
  }
}

inline constexpr std::size_t kMaxEnsemble = 100'000'000;

struct EnsembleSpec {
  Oracle oracle;
  OptimizerSpec optimizer;
  RealVec x1;
  std::size_t T = 1;
  std::size_t N = 10;
  std::uint64_t master_seed = 0;
  std::vector<TailMetric> metrics{TailMetric::avg_gsq};

  void validate() const {
    if (N < 10) throw ConfigError("ensemble: N must be >= 10");
    if (N > kMaxEnsemble) throw ConfigError("ensemble: N must be <= 1e8");
    if (T < 1) throw ConfigError("ensemble: T must be >= 1");
    if (metrics.empty()) throw ConfigError("ensemble: at least one metric");
    if (x1.dim() != oracle.dim()) throw InputError("ensemble: x1 dimension mismatch");
    validate_spec(optimizer);
    for (auto m : metrics)
      if (m == TailMetric::w_gsq && kind_of(optimizer) != OptimizerKind::sgd)
        throw ConfigError("ensemble: w_gsq is defined for SGD only");
  }
};

/// Samples per metric, indexed by run. Diverged runs hold +infinity.
struct EnsembleResult {
  std::vector<std::vector<double>> samples;  // [metric][run]
  std::size_t diverged = 0;
};

/// Run i uses stream (master_seed, i, "noise"); results are placed by run index.
inline EnsembleResult run_ensemble(const EnsembleSpec& spec, std::size_t workers = 1) {
  spec.validate();
  const std::size_t K = spec.metrics.size();
  EnsembleResult out;
  out.samples.assign(K, std::vector<double>(spec.N));
  std::vector<unsigned char> div(spec.N, 0);
  const bool sgd = kind_of(spec.optimizer) == OptimizerKind::sgd;
  const double Td = static_cast<double>(spec.T);
  parallel_for(spec.N, workers, [&](std::size_t i) {
    RngStream stream(spec.master_seed, i, "noise");
    double gsq = 0.0, wgsq = 0.0, energy = 0.0;
    const auto outcome = simulate(spec.optimizer, spec.oracle, spec.x1, spec.T, stream,
                                  [&](const StepView& s) {
                                    double a = 0.0, e = 0.0;
                                    for (std::size_t k = 0; k < s.grad.size(); ++k) {
                                      const double g2 = s.grad[k] * s.grad[k];
                                      a += g2;
                                      e += (sgd ? s.eta : s.gamma[k]) * g2;
                                    }
                                    gsq += a;
                                    energy += e;
                                    if (sgd) wgsq += s.eta * a;
                                  });
    if (outcome.diverged_at) {
      div[i] = 1;
      for (auto& col : out.samples) col[i] = std::numeric_limits<double>::infinity();
      return;
    }
    for (std::size_t k = 0; k < K; ++k) {
      switch (spec.metrics[k]) {
        case TailMetric::avg_gsq: out.samples[k][i] = gsq / Td; break;
        case TailMetric::w_gsq: out.samples[k][i] = wgsq; break;
        case TailMetric::E: out.samples[k][i] = energy; break;
      }
    }
  });
  for (unsigned char d : div) out.diverged += d;
  return out;
}

/// Element at 1-based index ceil(level N), clamped to [1, N], of the sorted samples.
inline double empirical_quantile_sorted(const std::vector<double>& sorted, double level) {
  if (sorted.empty()) throw InputError("empirical_quantile: empty sample");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("empirical_quantile: level must lie in (0,1)");
  const double n = static_cast<double>(sorted.size());
  auto idx = static_cast<std::size_t>(std::ceil(level * n));
  idx = std::clamp<std::size_t>(idx, 1, sorted.size());
  return sorted[idx - 1];
}

inline double empirical_quantile(std::vector<double> samples, double level) {
  std::sort(samples.begin(), samples.end());
  return empirical_quantile_sorted(samples, level);
}

struct QuantilePoint {
  double delta = 0.0;
  double q = 0.0;
  std::size_t n_exceed = 0;  // samples strictly above q
};

/// (delta, q_delta) pairs with delta strictly decreasing.
struct QuantileCurve {
  std::vector<QuantilePoint> points;
};

inline void check_delta_grid(const std::vector<double>& deltas) {
  if (deltas.empty()) throw ConfigError("delta grid must be nonempty");
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    if (!(deltas[k] > 0.0 && deltas[k] < 1.0)) throw ConfigError("delta grid entries must lie in (0,1)");
    if (k > 0 && !(deltas[k] < deltas[k - 1]))
      throw ConfigError("delta grid must be strictly decreasing");
  }
}

/// `count` log-spaced values from hi down to lo.
inline std::vector<double> log_spaced_deltas(double hi, double lo, std::size_t count) {
  if (count < 2 || !(hi > lo) || !(lo > 0.0)) throw ConfigError("log_spaced_deltas: bad range");
  std::vector<double> out(count);
  const double a = std::log10(hi), b = std::log10(lo);
  for (std::size_t k = 0; k < count; ++k)
    out[k] = std::pow(10.0, a + (b - a) * static_cast<double>(k) / static_cast<double>(count - 1));
  return out;
}

inline QuantilePoint quantile_point(std::vector<double> samples, double delta) {
  std::sort(samples.begin(), samples.end());
  QuantilePoint p;
  p.delta = delta;
  p.q = empirical_quantile_sorted(samples, 1.0 - delta);
  p.n_exceed = static_cast<std::size_t>(
      samples.end() - std::upper_bound(samples.begin(), samples.end(), p.q));
  return p;
}

/// One sample set read at every level of the grid (fixed-noise sweep).
inline QuantileCurve quantile_curve(std::vector<double> samples, const std::vector<double>& deltas) {
  check_delta_grid(deltas);
  std::sort(samples.begin(), samples.end());
  QuantileCurve c;
  for (double d : deltas) {
    QuantilePoint p;
    p.delta = d;
    p.q = empirical_quantile_sorted(samples, 1.0 - d);
    p.n_exceed = static_cast<std::size_t>(
        samples.end() - std::upper_bound(samples.begin(), samples.end(), p.q));
    c.points.push_back(p);
  }
  return c;
}

struct ExponentFit {
  double slope = 0.0;
  double intercept = 0.0;
  double max_residual = 0.0;
  double delta_min = 0.0;
  double delta_max = 0.0;
};

/// Least squares of log q against log(1/delta).
inline ExponentFit fit_exponent(const QuantileCurve& curve) {
  const auto& pts = curve.points;
  if (pts.size() < 3) throw ConfigError("fit_exponent: need at least 3 points");
  std::vector<double> xs, ys;
  for (const auto& p : pts) {
    if (!(p.q > 0.0) || !std::isfinite(p.q))
      throw InputError("fit_exponent: quantile at delta = " + std::to_string(p.delta) +
                       " is not positive and finite");
    xs.push_back(std::log(1.0 / p.delta));
    ys.push_back(std::log(p.q));
  }
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) mx += xs[k], my += ys[k];
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
  }
  if (!(sxx > 0.0)) throw InputError("fit_exponent: delta values must differ");
  ExponentFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  for (std::size_t k = 0; k < xs.size(); ++k)
    f.max_residual = std::max(f.max_residual, std::abs(ys[k] - (f.intercept + f.slope * xs[k])));
  f.delta_min = pts.back().delta;
  f.delta_max = pts.front().delta;
  for (const auto& p : pts) {
    f.delta_min = std::min(f.delta_min, p.delta);
    f.delta_max = std::max(f.delta_max, p.delta);
  }
  return f;
}

struct SeparationThresholds {
  double sgd_min = 0.85;
  double adam_max = 0.75;
  double gap_min = 0.2;
};

struct SeparationRow {
  double delta = 0.0;
  double q_adam = 0.0;
  double q_sgd = 0.0;
  double ratio = 0.0;  // q_sgd / q_adam
};

struct SeparationReport {
  ExponentFit adam_fit;
  ExponentFit sgd_fit;
  double gap = 0.0;  // sgd slope - adam slope
  std::vector<SeparationRow> rows;
  SeparationThresholds thresholds;
  bool sgd_ok = false, adam_ok = false, gap_ok = false;

  bool passed() const noexcept { return sgd_ok && adam_ok && gap_ok; }
};

inline SeparationReport separation_report(const QuantileCurve& adam, const QuantileCurve& sgd,
                                          const SeparationThresholds& th = {}) {
  if (adam.points.size() != sgd.points.size())
    throw InputError("separation_report: curves cover different delta grids");
  for (std::size_t k = 0; k < adam.points.size(); ++k)
    if (adam.points[k].delta != sgd.points[k].delta)
      throw InputError("separation_report: curves cover different delta grids");
  SeparationReport r;
  r.thresholds = th;
  r.adam_fit = fit_exponent(adam);
  r.sgd_fit = fit_exponent(sgd);
  r.gap = r.sgd_fit.slope - r.adam_fit.slope;
  for (std::size_t k = 0; k < adam.points.size(); ++k)
    r.rows.push_back({adam.points[k].delta, adam.points[k].q, sgd.points[k].q,
                      sgd.points[k].q / adam.points[k].q});
  r.sgd_ok = r.sgd_fit.slope >= th.sgd_min;
  r.adam_ok = r.adam_fit.slope <= th.adam_max;
  r.gap_ok = r.gap >= th.gap_min;
  return r;
}

// ---------------------------------------------------------------------------
// Per-delta hard-instance study on f = x^2 / 2.
// ---------------------------------------------------------------------------

struct SeparationStudyConfig {
  std::size_t T = 1000;
  std::vector<double> deltas = log_spaced_deltas(1e-1, 1e-3, 5);
  std::size_t N = 200'000;
  std::uint64_t master_seed = 0;
  double x_init = 0.0;
  double sgd_gamma = 0.0;      // 0 selects 1/sqrt(T)
  double eta_factor = 0.9;     // Adam eta = eta_factor * max_eta
  double beta1 = 0.0;
  double eps = 1e-8;
  double v0 = 1.0;
  SeparationThresholds thresholds;
  double energy_max = 0.15;    // bound on the fitted exponent of Adam's E
};

/// Per-delta record of the paired study.
struct SeparationPoint {
  double delta = 0.0;
  double A = 0.0;
  QuantilePoint sgd;       // avg_gsq
  QuantilePoint adam;      // avg_gsq
  QuantilePoint adam_E;    // E
  double sgd_threshold = 0.0;          // 1/(512 delta sqrt(T) log(1/delta))
  double sgd_exceed_fraction = 0.0;    // empirical P(avg_gsq >= threshold)
  std::size_t diverged_sgd = 0, diverged_adam = 0;
};

struct SeparationStudy {
  SeparationStudyConfig config;
  double sgd_gamma = 0.0;
  double adam_eta = 0.0;
  std::vector<SeparationPoint> points;
  QuantileCurve sgd_curve, adam_curve, adam_energy_curve;
  SeparationReport report;
  ExponentFit energy_fit;
  bool energy_ok = false;

  bool passed() const noexcept { return report.passed(); }
};

/// Noise amplitude retuned per delta: A(delta) = sqrt(T / (16 delta)).
inline double hard_instance_amplitude(std::size_t T, double delta) {
  return std::sqrt(static_cast<double>(T) / (16.0 * delta));
}

/// SGD and calibrated Adam on the same per-delta instances, sharing noise
/// streams run by run.
inline SeparationStudy run_separation_study(const SeparationStudyConfig& cfg, std::size_t workers = 1) {
  check_delta_grid(cfg.deltas);
  if (cfg.deltas.size() < 3) throw ConfigError("separation: need at least 3 delta values");
  SeparationStudy st;
  st.config = cfg;
  const double Td = static_cast<double>(cfg.T);
  st.sgd_gamma = cfg.sgd_gamma > 0.0 ? cfg.sgd_gamma : 1.0 / std::sqrt(Td);
  const auto objective = Objective::half_square();
  st.adam_eta = cfg.eta_factor * max_eta(1, cfg.v0, cfg.eps, cfg.beta1, objective.smoothness());
  const OptimizerSpec sgd = SgdSpec{StepSchedule::constant(st.sgd_gamma)};
  const OptimizerSpec adam = calibrate(st.adam_eta, cfg.T, cfg.beta1, cfg.eps, cfg.v0);
  const RealVec x1{cfg.x_init};

  for (double delta : cfg.deltas) {
    SeparationPoint pt;
    pt.delta = delta;
    pt.A = hard_instance_amplitude(cfg.T, delta);
    const Oracle oracle(objective, ThreePointNoise{pt.A});

    EnsembleSpec es{oracle, sgd, x1, cfg.T, cfg.N, cfg.master_seed, {TailMetric::avg_gsq}};
    auto rs = run_ensemble(es, workers);
    pt.diverged_sgd = rs.diverged;
    pt.sgd_threshold = 1.0 / (512.0 * delta * std::sqrt(Td) * std::log(1.0 / delta));
    std::size_t hits = 0;
    for (double v : rs.samples[0]) hits += v >= pt.sgd_threshold;
    pt.sgd_exceed_fraction = static_cast<double>(hits) / static_cast<double>(cfg.N);
    pt.sgd = quantile_point(std::move(rs.samples[0]), delta);

    EnsembleSpec ea{oracle, adam, x1, cfg.T, cfg.N, cfg.master_seed,
                    {TailMetric::avg_gsq, TailMetric::E}};
    auto ra = run_ensemble(ea, workers);
    pt.diverged_adam = ra.diverged;
    pt.adam = quantile_point(std::move(ra.samples[0]), delta);
    pt.adam_E = quantile_point(std::move(ra.samples[1]), delta);

    st.sgd_curve.points.push_back(pt.sgd);
    st.adam_curve.points.push_back(pt.adam);
    st.adam_energy_curve.points.push_back(pt.adam_E);
    st.points.push_back(pt);
  }
  st.report = separation_report(st.adam_curve, st.sgd_curve, cfg.thresholds);
  st.energy_fit = fit_exponent(st.adam_energy_curve);
  st.energy_ok = st.energy_fit.slope <= cfg.energy_max;
  return st;
}

}  // namespace adamsep
