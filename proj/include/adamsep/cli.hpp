#pragma once

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "adamsep/config.hpp"
#include "adamsep/errors.hpp"
#include "adamsep/instrument.hpp"
#include "adamsep/io.hpp"
#include "adamsep/lemmas.hpp"
#include "adamsep/lowerbound.hpp"
#include "adamsep/optimizers.hpp"
#include "adamsep/problems.hpp"
#include "adamsep/tailstudy.hpp"

namespace adamsep {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitDivergence = 3 };

namespace cli {

using ojson = nlohmann::ordered_json;

inline Oracle make_oracle(const Config& c) {
  Objective obj = c.problem.objective == "quadratic-cosine"
                      ? Objective::quadratic_cosine(c.problem.d)
                      : Objective::quadratic_diag(c.problem.lambda);
  NoiseSpec noise;
  if (c.oracle.noise == "gaussian") noise = GaussianNoise{c.oracle.sigma};
  else if (c.oracle.noise == "three-point") noise = ThreePointNoise{c.oracle.A};
  return Oracle(std::move(obj), noise);
}

inline std::vector<double> load_schedule(const Config& c, std::size_t T) {
  if (c.optimizer.schedule) return read_schedule_csv(*c.optimizer.schedule);
  return std::vector<double>(T, *c.optimizer.gamma);
}

inline OptimizerSpec make_optimizer(const Config& c, std::size_t T) {
  const auto& o = c.optimizer;
  if (o.kind == "adam") {
    if (o.calibrated) return calibrate(*o.eta, T, o.beta1, o.eps, o.v0);
    return AdamParams::constant(*o.gamma, o.beta1, *o.beta2, o.eps, o.v0, T);
  }
  if (o.kind == "rmsprop") {
    RmspropParams p{*o.gamma, *o.beta2, o.eps, o.v0};
    p.validate();
    return p;
  }
  if (o.schedule) return SgdSpec{StepSchedule::explicit_list(read_schedule_csv(*o.schedule))};
  return SgdSpec{StepSchedule::constant(*o.gamma)};
}

/// Default start: the configured x1, else the all-ones point.
inline RealVec start_point(const Config& c) {
  if (c.run.x1) return RealVec(*c.run.x1);
  return RealVec(c.problem.d, 1.0);
}

/// JSON number, or null for non-finite values.
inline ojson num(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

inline ojson nums(const std::vector<double>& xs) {
  ojson a = ojson::array();
  for (double x : xs) a.push_back(num(x));
  return a;
}

inline void write_json(const std::filesystem::path& p, const ojson& j) {
  write_text_file(p.string(), j.dump(2) + "\n");
}

inline std::string steps_csv(const Trajectory& traj) {
  const std::size_t d = traj.dim();
  const bool sgd = traj.kind() == OptimizerKind::sgd;
  std::vector<std::string> header{"t"};
  for (const char* name : {"x", "g", "grad", "m", "v", "gamma"})
    for (std::size_t i = 0; i < d; ++i) header.push_back(std::string(name) + "_" + std::to_string(i));
  CsvWriter w(header);
  for (std::size_t t = 1; t <= traj.steps(); ++t) {
    std::vector<std::string> row{std::to_string(t)};
    auto put = [&](std::span<const double> s) {
      for (double e : s) row.push_back(format_double(e));
    };
    put(traj.x(t));
    put(traj.g(t));
    put(traj.grad(t));
    put(traj.m(t));
    if (sgd) {
      for (std::size_t i = 0; i < d; ++i) row.push_back("0");
      for (std::size_t i = 0; i < d; ++i) row.push_back(format_double(traj.eta(t)));
    } else {
      put(traj.v(t));
      put(traj.gamma(t));
    }
    w.row(row);
  }
  return w.str();
}

inline ojson ledger_json(const Ledger& L) {
  ojson j;
  j["T"] = L.T;
  j["d"] = L.d;
  j["E"] = num(L.E);
  j["ASGE"] = num(L.ASGE);
  j["MomE"] = num(L.MomE);
  j["QV"] = num(L.QV);
  j["S"] = nums(L.S);
  j["avg_gsq"] = num(L.avg_gsq);
  j["w_gsq"] = L.w_gsq ? num(*L.w_gsq) : ojson(nullptr);
  j["prefix_E"] = nums(L.prefix_E);
  j["prefix_ASGE"] = nums(L.prefix_ASGE);
  j["prefix_MomE"] = nums(L.prefix_MomE);
  j["prefix_QV"] = nums(L.prefix_QV);
  j["prefix_gsq"] = nums(L.prefix_gsq);
  j["diverged_at"] = L.diverged_at ? ojson(*L.diverged_at) : ojson(nullptr);
  return j;
}

inline int cmd_run(const Config& c, const std::filesystem::path& out) {
  const auto oracle = make_oracle(c);
  const auto spec = make_optimizer(c, c.run.T);
  RngStream stream(c.run.master_seed, 0, "noise");
  auto emit = [&](const Trajectory& traj) {
    write_text_file((out / "steps.csv").string(), steps_csv(traj));
    ojson j = traj.steps() > 0 ? ledger_json(compute_ledger(traj)) : ojson::object();
    if (traj.steps() == 0) j["diverged_at"] = traj.diverged_at() ? ojson(*traj.diverged_at()) : ojson(nullptr);
    if (c.run.G) {
      j["G"] = *c.run.G;
      const auto tau = traj.steps() > 0 ? stopping_time(traj, *c.run.G) : std::nullopt;
      j["stopping_time"] = tau ? ojson(*tau) : ojson(nullptr);
    }
    write_json(out / "ledger.json", j);
  };
  try {
    emit(run_trajectory(spec, oracle, start_point(c), c.run.T, stream));
  } catch (const TrajectoryDivergence& e) {
    emit(e.partial());
    std::cerr << "run: " << e.what() << "\n";
    return kExitDivergence;
  }
  return kExitOk;
}

inline std::string violations_csv(const std::vector<Violation>& vs) {
  CsvWriter w({"check_id", "seed", "d", "T", "beta1", "margin", "worst_t", "worst_i"});
  for (const auto& v : vs)
    w.row({v.check_id, std::to_string(v.seed), std::to_string(v.d), std::to_string(v.T),
           format_double(v.beta1), format_double(v.margin), std::to_string(v.worst_t),
           std::to_string(v.worst_i)});
  return w.str();
}

inline int cmd_lemmas(const Config& c, const std::filesystem::path& out, std::size_t workers) {
  auto rep = run_lemma_suite(c.run.count, c.run.master_seed, workers);
  ojson summary;
  summary["cases"] = rep.cases;
  summary["checks_run"] = rep.checks_run;
  if (c.run.gen_beta_count > 0) {
    auto gb = run_gen_beta_suite(c.run.gen_beta_count, c.run.master_seed, workers);
    summary["gen_beta_cases"] = gb.cases;
    rep.violations.insert(rep.violations.end(), gb.violations.begin(), gb.violations.end());
  }
  if (c.run.descent_pairs > 0) {
    const auto ds = run_descent_suite(c.run.descent_pairs, c.run.resamples, c.run.master_seed, workers);
    CsvWriter w({"seed", "t", "lhs", "rhs", "pooled_se", "holds", "D1", "D2", "D3", "P",
                 "D1_check_mean", "D1_check_se", "D2_check_mean", "D2_check_se",
                 "D3_check_mean", "D3_check_se"});
    for (const auto& r : ds.records) {
      const auto& tm = r.terms;
      w.row({std::to_string(r.seed), std::to_string(r.t), format_double(tm.lhs),
             format_double(tm.rhs()), format_double(tm.pooled_se), r.holds ? "1" : "0",
             format_double(tm.D1), format_double(tm.D2), format_double(tm.D3), format_double(tm.P),
             format_double(tm.D_check_mean[0]), format_double(tm.D_check_se[0]),
             format_double(tm.D_check_mean[1]), format_double(tm.D_check_se[1]),
             format_double(tm.D_check_mean[2]), format_double(tm.D_check_se[2])});
    }
    write_text_file((out / "descent.csv").string(), w.str());
    summary["descent_pairs"] = ds.records.size();
    summary["descent_holds"] = ds.holds_count;
    summary["descent_d_mean_ok"] = ds.d_mean_ok_count;
  }
  summary["violations"] = rep.violations.size();
  write_text_file((out / "violations.csv").string(), violations_csv(rep.violations));
  write_json(out / "summary.json", summary);
  return rep.violations.empty() ? kExitOk : kExitCheckFailed;
}

inline ojson mc_json(const MCEstimate& m) {
  return ojson{{"estimate", num(m.estimate)}, {"se", num(m.se)}, {"N", m.N}, {"hits", m.hits}};
}

inline ojson report_json(const LBReport& r) {
  ojson j;
  j["kind"] = r.kind;
  j["metric"] = r.metric == LBMetric::avg ? "avg" : "weighted";
  ojson inst;
  for (const auto& [k, v] : r.instance) inst[k] = num(v);
  j["instance"] = inst;
  j["exact_event_prob"] = num(r.exact_event_prob);
  j["prob_lower_bound_target"] = num(r.prob_lower_bound_target);
  j["metric_threshold"] = num(r.metric_threshold);
  j["conditional_energy"] = num(r.conditional_energy);
  j["worst_shock"] = r.worst_shock;
  j["mc"] = r.mc ? mc_json(*r.mc) : ojson(nullptr);
  ojson v;
  for (const auto& [k, b] : r.verdicts) v[k] = b;
  j["verdicts"] = v;
  j["all_verdicts_true"] = r.all_true();
  return j;
}

inline int cmd_lowerbound(const Config& c, const std::filesystem::path& out, std::size_t workers,
                          bool run_mc) {
  const LBMetric metric = c.run.metric == "weighted" ? LBMetric::weighted : LBMetric::avg;
  LBReport rep;
  std::optional<LBMonteCarlo> mc;
  if (c.run.mode == "const") {
    const auto inst = build_const_instance(*c.optimizer.gamma, c.run.T, *c.run.delta, c.run.x_init);
    rep = verify_const_instance(inst, metric);
    if (run_mc) mc = mc_const_instance(inst, metric, rep.metric_threshold, c.run.N, c.run.master_seed, workers);
  } else {
    const auto schedule = load_schedule(c, c.run.T);
    if (c.run.mode == "tv") {
      const auto inst = build_tv_instance(schedule, c.run.T, *c.run.delta_bar);
      rep = verify_tv_instance(inst, metric);
      if (run_mc) mc = mc_tv_instance(inst, metric, rep.metric_threshold, c.run.N, c.run.master_seed, workers);
    } else {
      rep = verify_tv_corollary(schedule, c.run.T, *c.run.delta, metric);
      if (run_mc) {
        const auto inst = build_tv_instance(schedule, c.run.T, 16.0 * *c.run.delta);
        mc = mc_tv_instance(inst, metric, rep.metric_threshold, c.run.N, c.run.master_seed, workers);
      }
    }
  }
  if (mc) {
    rep.mc = mc->exceed;
    rep.verdicts.emplace_back("mc_exceeds_target", mc->exceed.estimate > rep.prob_lower_bound_target);
    rep.verdicts.emplace_back("mc_consistent_with_exact",
                              mc->exceed.estimate >= rep.exact_event_prob - 4.0 * mc->exceed.se);
  }
  auto j = report_json(rep);
  if (mc) {
    j["mc_one_shock"] = mc_json(mc->one_shock);
    j["mc_signed_shock"] = mc_json(mc->signed_shock);
  }
  write_json(out / "report.json", j);
  return rep.all_true() ? kExitOk : kExitCheckFailed;
}

inline std::string curve_csv(const QuantileCurve& curve) {
  CsvWriter w({"delta", "q", "n_exceed"});
  for (const auto& p : curve.points)
    w.row({format_double(p.delta), format_double(p.q), std::to_string(p.n_exceed)});
  return w.str();
}

inline ojson fit_json(const ExponentFit& f) {
  return ojson{{"slope", num(f.slope)},
               {"intercept", num(f.intercept)},
               {"max_residual", num(f.max_residual)},
               {"delta_min", num(f.delta_min)},
               {"delta_max", num(f.delta_max)}};
}

inline int cmd_tail(const Config& c, const std::filesystem::path& out, std::size_t workers) {
  const TailMetric metric = c.run.metric.empty() ? TailMetric::avg_gsq : parse_tail_metric(c.run.metric);
  const auto spec = make_optimizer(c, c.run.T);
  QuantileCurve curve;
  std::size_t diverged = 0;
  if (c.run.per_delta_instances) {
    for (double delta : c.run.deltas) {
      const Oracle oracle(Objective::half_square(), ThreePointNoise{hard_instance_amplitude(c.run.T, delta)});
      EnsembleSpec es{oracle, spec, start_point(c), c.run.T, c.run.N, c.run.master_seed, {metric}};
      auto r = run_ensemble(es, workers);
      diverged += r.diverged;
      curve.points.push_back(quantile_point(std::move(r.samples[0]), delta));
    }
  } else {
    EnsembleSpec es{make_oracle(c), spec, start_point(c), c.run.T, c.run.N, c.run.master_seed, {metric}};
    auto r = run_ensemble(es, workers);
    diverged = r.diverged;
    curve = quantile_curve(std::move(r.samples[0]), c.run.deltas);
  }
  write_text_file((out / "curve.csv").string(), curve_csv(curve));
  ojson j;
  j["metric"] = to_string(metric);
  j["N"] = c.run.N;
  j["diverged"] = diverged;
  int code = kExitOk;
  try {
    j["fit"] = fit_json(fit_exponent(curve));
  } catch (const InputError& e) {
    j["fit"] = nullptr;
    j["error"] = e.what();
    std::cerr << "tail: " << e.what() << "\n";
    code = kExitCheckFailed;
  }
  write_json(out / "fit.json", j);
  return code;
}

inline int cmd_separate(const Config& c, const std::filesystem::path& out, std::size_t workers) {
  SeparationStudyConfig sc;
  sc.T = c.run.T;
  if (!c.run.deltas.empty()) sc.deltas = c.run.deltas;
  sc.N = c.run.N;
  sc.master_seed = c.run.master_seed;
  sc.x_init = c.run.x_init;
  sc.sgd_gamma = c.run.sgd_gamma.value_or(0.0);
  sc.eta_factor = c.run.eta_factor;
  sc.beta1 = c.optimizer.beta1;
  sc.eps = c.optimizer.eps;
  sc.v0 = c.optimizer.v0;
  sc.thresholds = {c.run.thresholds.sgd_min, c.run.thresholds.adam_max, c.run.thresholds.gap_min};
  sc.energy_max = c.run.thresholds.energy_max;
  const auto st = run_separation_study(sc, workers);

  ojson j;
  j["T"] = sc.T;
  j["N"] = sc.N;
  j["sgd_gamma"] = num(st.sgd_gamma);
  j["adam_eta"] = num(st.adam_eta);
  ojson pts = ojson::array();
  for (const auto& p : st.points)
    pts.push_back(ojson{{"delta", num(p.delta)},
                        {"A", num(p.A)},
                        {"q_sgd", num(p.sgd.q)},
                        {"q_adam", num(p.adam.q)},
                        {"q_adam_E", num(p.adam_E.q)},
                        {"ratio", num(p.sgd.q / p.adam.q)},
                        {"sgd_threshold", num(p.sgd_threshold)},
                        {"sgd_exceed_fraction", num(p.sgd_exceed_fraction)},
                        {"diverged_sgd", p.diverged_sgd},
                        {"diverged_adam", p.diverged_adam}});
  j["points"] = pts;
  j["sgd_fit"] = fit_json(st.report.sgd_fit);
  j["adam_fit"] = fit_json(st.report.adam_fit);
  j["adam_energy_fit"] = fit_json(st.energy_fit);
  j["gap"] = num(st.report.gap);
  j["thresholds"] = ojson{{"sgd_min", sc.thresholds.sgd_min},
                          {"adam_max", sc.thresholds.adam_max},
                          {"gap_min", sc.thresholds.gap_min},
                          {"energy_max", sc.energy_max}};
  j["sgd_ok"] = st.report.sgd_ok;
  j["adam_ok"] = st.report.adam_ok;
  j["gap_ok"] = st.report.gap_ok;
  j["energy_ok"] = st.energy_ok;
  write_json(out / "separation.json", j);
  return st.report.gap_ok ? kExitOk : kExitCheckFailed;
}

}  // namespace cli

/// Output directory for a config: <base>/<command>-<config hash>.
inline std::filesystem::path output_dir(const Config& c, const std::string& base_override = "") {
  const std::filesystem::path base = base_override.empty() ? c.output.directory : base_override;
  return base / (c.command + "-" + c.hash());
}

/// Runs a validated configuration and returns the process exit code.
inline int execute(const Config& c, std::size_t workers = 1, const std::string& out_override = "") {
  try {
    const auto out = output_dir(c, out_override);
    std::filesystem::create_directories(out);
    if (c.command == "run") return cli::cmd_run(c, out);
    if (c.command == "lemmas") return cli::cmd_lemmas(c, out, workers);
    if (c.command == "lowerbound") return cli::cmd_lowerbound(c, out, workers, c.run.N_given);
    if (c.command == "tail") return cli::cmd_tail(c, out, workers);
    if (c.command == "separate") return cli::cmd_separate(c, out, workers);
    throw ConfigError("unknown command '" + c.command + "'");
  } catch (const InstanceInvalidError& e) {
    std::cerr << "instance invalid (" << e.clause() << "): " << e.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kExitDivergence;
  }
}

}  // namespace adamsep
