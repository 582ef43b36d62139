#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "adamsep/errors.hpp"
#include "adamsep/io.hpp"
#include "adamsep/kernel.hpp"

namespace adamsep {

/// Every problem found while validating a configuration.
class ConfigViolations : public ConfigError {
public:
  explicit ConfigViolations(std::vector<std::string> v)
      : ConfigError(join(v)), violations_(std::move(v)) {}
  const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid configuration:";
    for (const auto& e : v) s += "\n  " + e;
    return s;
  }
  std::vector<std::string> violations_;
};

struct ProblemConfig {
  std::string objective = "quadratic-diag";
  std::size_t d = 1;
  std::vector<double> lambda;  // filled with ones when omitted
};

struct OracleConfig {
  std::string noise = "zero";
  double sigma = 0.0;
  double A = 1.0;
};

struct OptimizerConfig {
  std::string kind = "adam";
  bool calibrated = true;
  std::optional<double> eta;
  std::optional<double> gamma;
  std::optional<double> beta2;
  double beta1 = 0.0;
  double eps = 1e-8;
  double v0 = 1.0;
  std::optional<std::string> schedule;  // CSV path, resolved against the config directory
};

struct ThresholdConfig {
  double sgd_min = 0.85;
  double adam_max = 0.75;
  double gap_min = 0.2;
  double energy_max = 0.15;
};

struct RunConfig {
  std::size_t T = 100;
  std::size_t N = 1000;
  bool N_given = false;  // an explicit N asks lowerbound for Monte Carlo
  std::uint64_t master_seed = 0;
  std::vector<double> deltas;
  std::optional<double> G;
  std::optional<std::vector<double>> x1;
  // lemmas
  std::size_t count = 1000;
  std::size_t gen_beta_count = 0;
  std::size_t descent_pairs = 0;
  std::size_t resamples = 4096;
  // lowerbound
  std::string mode = "const";
  std::optional<double> delta;
  std::optional<double> delta_bar;
  double x_init = 0.0;
  std::string metric;  // per-command default when empty
  // tail
  bool per_delta_instances = false;
  // separate
  double eta_factor = 0.9;
  std::optional<double> sgd_gamma;
  ThresholdConfig thresholds;
};

struct OutputConfig {
  std::string directory = "adamsep-out";
};

struct Config {
  std::string command;
  ProblemConfig problem;
  OracleConfig oracle;
  OptimizerConfig optimizer;
  RunConfig run;
  OutputConfig output;
  std::string canonical;     // key-sorted JSON of the input, basis of the output stamp
  std::string config_dir;    // base for relative paths

  /// 16 hex digits of FNV-1a over the canonical JSON.
  std::string hash() const {
    const auto h = detail::fnv1a64(canonical);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int k = 0; k < 16; ++k) s[15 - k] = kHex[(h >> (4 * k)) & 0xF];
    return s;
  }
};

namespace detail {

using nlohmann::json;

/// Reads typed fields from one block, recording violations instead of throwing.
class BlockReader {
public:
  BlockReader(const json& root, std::string name, std::vector<std::string>& errors)
      : name_(std::move(name)), errors_(errors) {
    if (root.contains(name_)) {
      if (!root.at(name_).is_object()) {
        fail(name_, "must be an object");
      } else {
        block_ = &root.at(name_);
      }
    }
  }

  bool present() const noexcept { return block_ != nullptr; }
  bool has(const std::string& key) const { return block_ && block_->contains(key); }

  void allow(std::set<std::string> keys) {
    if (!block_) return;
    for (const auto& [k, _] : block_->items())
      if (!keys.count(k)) fail(k, "unknown key");
  }

  template <class Pred>
  void number(const std::string& key, double& out, Pred ok, const char* rule) {
    if (!has(key)) return;
    const auto& v = block_->at(key);
    if (!v.is_number()) return fail(key, "must be a number");
    const double x = v.get<double>();
    if (!ok(x)) return fail(key, rule);
    out = x;
  }

  template <class Pred>
  void number(const std::string& key, std::optional<double>& out, Pred ok, const char* rule) {
    if (!has(key)) return;
    double x = 0.0;
    const auto before = errors_.size();
    number(key, x, ok, rule);
    if (errors_.size() == before) out = x;
  }

  void integer(const std::string& key, std::size_t& out, std::size_t lo, std::size_t hi) {
    if (!has(key)) return;
    const auto& v = block_->at(key);
    if (!v.is_number_integer()) return fail(key, "must be an integer");
    if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) {
      const auto x = v.get<std::uint64_t>();
      if (x >= lo && x <= hi) {
        out = static_cast<std::size_t>(x);
        return;
      }
    }
    fail(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }

  void seed(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const auto& v = block_->at(key);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      return fail(key, "must be a nonnegative integer");
    out = v.get<std::uint64_t>();
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const auto& v = block_->at(key);
    if (!v.is_boolean()) return fail(key, "must be true or false");
    out = v.get<bool>();
  }

  void choice(const std::string& key, std::string& out, const std::set<std::string>& options) {
    if (!has(key)) return;
    const auto& v = block_->at(key);
    if (!v.is_string()) return fail(key, "must be a string");
    const auto s = v.get<std::string>();
    if (!options.count(s)) {
      std::string list;
      for (const auto& o : options) list += (list.empty() ? "" : ", ") + o;
      return fail(key, "must be one of {" + list + "}");
    }
    out = s;
  }

  void text(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const auto& v = block_->at(key);
    if (!v.is_string() || v.get<std::string>().empty()) return fail(key, "must be a nonempty string");
    out = v.get<std::string>();
  }

  void text(const std::string& key, std::optional<std::string>& out) {
    if (!has(key)) return;
    std::string s;
    const auto before = errors_.size();
    text(key, s);
    if (errors_.size() == before) out = s;
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const auto& v = block_->at(key);
    if (!v.is_array() || v.empty()) return fail(key, "must be a nonempty array of numbers");
    std::vector<double> xs;
    for (const auto& e : v) {
      if (!e.is_number()) return fail(key, "must be a nonempty array of numbers");
      xs.push_back(e.get<double>());
    }
    out = std::move(xs);
  }

  void fail(const std::string& key, const std::string& msg) {
    errors_.push_back((key == name_ ? name_ : name_ + "." + key) + ": " + msg);
  }

  const json* raw() const noexcept { return block_; }

private:
  std::string name_;
  std::vector<std::string>& errors_;
  const json* block_ = nullptr;
};

inline bool positive(double x) { return x > 0.0 && std::isfinite(x); }
inline bool nonneg(double x) { return x >= 0.0 && std::isfinite(x); }
inline bool finite_any(double x) { return std::isfinite(x); }
inline bool unit_open(double x) { return x > 0.0 && x < 1.0; }
inline bool unit_half_open(double x) { return x >= 0.0 && x < 1.0; }

}  // namespace detail

inline const std::set<std::string>& known_commands() {
  static const std::set<std::string> c = {"run", "lemmas", "lowerbound", "tail", "separate"};
  return c;
}

/// Validates a JSON configuration. All violations are collected and thrown
/// together as ConfigViolations.
inline Config parse_config_json(const std::string& text, const std::string& config_dir = ".") {
  using detail::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigViolations({std::string("malformed JSON: ") + e.what()});
  }
  std::vector<std::string> errors;
  if (!root.is_object()) throw ConfigViolations({"top level must be an object"});

  Config c;
  c.canonical = root.dump();
  c.config_dir = config_dir;

  for (const auto& [k, _] : root.items())
    if (!std::set<std::string>{"command", "problem", "oracle", "optimizer", "run", "output"}.count(k))
      errors.push_back(k + ": unknown key");

  if (!root.contains("command") || !root["command"].is_string())
    errors.push_back("command: required string");
  else if (!known_commands().count(root["command"].get<std::string>()))
    errors.push_back("command: must be one of {lemmas, lowerbound, run, separate, tail}");
  else
    c.command = root["command"].get<std::string>();

  // problem
  detail::BlockReader pb(root, "problem", errors);
  pb.allow({"objective", "d", "lambda"});
  pb.choice("objective", c.problem.objective, {"quadratic-diag", "quadratic-cosine"});
  pb.integer("d", c.problem.d, 1, 1'000'000);
  pb.numbers("lambda", c.problem.lambda);
  if (!c.problem.lambda.empty()) {
    if (c.problem.objective != "quadratic-diag")
      pb.fail("lambda", "only valid for quadratic-diag");
    if (!pb.has("d")) c.problem.d = c.problem.lambda.size();
    if (c.problem.lambda.size() != c.problem.d) pb.fail("lambda", "length must equal d");
    for (double l : c.problem.lambda)
      if (!detail::positive(l)) {
        pb.fail("lambda", "entries must be positive");
        break;
      }
  } else if (c.problem.objective == "quadratic-diag") {
    c.problem.lambda.assign(c.problem.d, 1.0);
  }

  // oracle
  detail::BlockReader ob(root, "oracle", errors);
  ob.allow({"noise", "sigma", "A"});
  ob.choice("noise", c.oracle.noise, {"zero", "gaussian", "three-point"});
  ob.number("sigma", c.oracle.sigma, detail::nonneg, "must be >= 0");
  ob.number("A", c.oracle.A, [](double a) { return a >= 1.0 && std::isfinite(a); }, "must be >= 1");
  if (ob.has("sigma") && c.oracle.noise != "gaussian") ob.fail("sigma", "only valid for gaussian noise");
  if (ob.has("A") && c.oracle.noise != "three-point") ob.fail("A", "only valid for three-point noise");
  if (c.oracle.noise == "three-point" && c.problem.d != 1 && c.command != "separate")
    ob.fail("noise", "three-point noise requires problem.d = 1");

  // optimizer
  detail::BlockReader zb(root, "optimizer", errors);
  zb.allow({"kind", "calibrated", "eta", "gamma", "beta1", "beta2", "eps", "v0", "schedule"});
  zb.choice("kind", c.optimizer.kind, {"adam", "rmsprop", "sgd"});
  zb.boolean("calibrated", c.optimizer.calibrated);
  zb.number("eta", c.optimizer.eta, detail::positive, "must be > 0");
  zb.number("gamma", c.optimizer.gamma, detail::positive, "must be > 0");
  zb.number("beta1", c.optimizer.beta1, detail::unit_half_open, "must lie in [0,1)");
  zb.number("beta2", c.optimizer.beta2, detail::unit_half_open, "must lie in [0,1)");
  zb.number("eps", c.optimizer.eps, detail::positive, "must be > 0");
  zb.number("v0", c.optimizer.v0, detail::positive, "must be > 0");
  zb.text("schedule", c.optimizer.schedule);
  if (c.optimizer.schedule) {
    std::filesystem::path p(*c.optimizer.schedule);
    if (p.is_relative()) p = std::filesystem::path(config_dir) / p;
    c.optimizer.schedule = p.string();
    if (!std::filesystem::exists(p)) zb.fail("schedule", "file '" + p.string() + "' does not exist");
  }
  const auto& oz = c.optimizer;
  if (oz.kind == "adam") {
    if (oz.calibrated) {
      if (oz.beta2) zb.fail("beta2", "conflicts with calibrated mode (beta2 = 1 - 1/T)");
      if (oz.gamma) zb.fail("gamma", "conflicts with calibrated mode (gamma = eta / sqrt(T))");
    } else if (oz.eta) {
      zb.fail("eta", "only valid in calibrated mode");
    }
  } else {
    if (zb.has("calibrated")) zb.fail("calibrated", "only valid for adam");
    if (oz.eta) zb.fail("eta", "only valid for calibrated adam");
    if (oz.kind == "sgd" && zb.has("beta2")) zb.fail("beta2", "not used by sgd");
    if (oz.kind != "adam" && zb.has("beta1")) zb.fail("beta1", "only valid for adam");
  }
  if (oz.schedule && oz.kind != "sgd") zb.fail("schedule", "only valid for sgd");
  if (oz.schedule && oz.gamma) zb.fail("schedule", "conflicts with gamma");

  // run
  detail::BlockReader rb(root, "run", errors);
  rb.allow({"T", "N", "master_seed", "deltas", "G", "x1", "count", "gen_beta_count",
            "descent_pairs", "resamples", "mode", "delta", "delta_bar", "x_init", "metric",
            "per_delta_instances", "eta_factor", "sgd_gamma", "thresholds"});
  rb.integer("T", c.run.T, 1, 100'000'000);
  rb.integer("N", c.run.N, 1, 100'000'000);
  c.run.N_given = rb.has("N");
  rb.seed("master_seed", c.run.master_seed);
  rb.numbers("deltas", c.run.deltas);
  rb.number("G", c.run.G, [](double g) { return g >= 1.0 && std::isfinite(g); }, "must be >= 1");
  if (rb.has("x1")) {
    std::vector<double> x;
    rb.numbers("x1", x);
    if (!x.empty()) {
      if (x.size() != c.problem.d) rb.fail("x1", "length must equal problem.d");
      c.run.x1 = x;
    }
  }
  rb.integer("count", c.run.count, 1, 100'000'000);
  rb.integer("gen_beta_count", c.run.gen_beta_count, 0, 100'000'000);
  rb.integer("descent_pairs", c.run.descent_pairs, 0, 1'000'000);
  rb.integer("resamples", c.run.resamples, 2, 100'000'000);
  rb.choice("mode", c.run.mode, {"const", "tv", "tv-corollary"});
  rb.number("delta", c.run.delta, detail::unit_open, "must lie in (0,1)");
  rb.number("delta_bar", c.run.delta_bar, detail::unit_open, "must lie in (0,1)");
  rb.number("x_init", c.run.x_init, detail::finite_any, "must be finite");
  rb.choice("metric", c.run.metric, {"avg", "weighted", "avg_gsq", "w_gsq", "E"});
  rb.boolean("per_delta_instances", c.run.per_delta_instances);
  rb.number("eta_factor", c.run.eta_factor, [](double f) { return f > 0.0 && f <= 1.0; },
            "must lie in (0,1]");
  rb.number("sgd_gamma", c.run.sgd_gamma, detail::positive, "must be > 0");
  if (rb.has("thresholds")) {
    const json wrapped{{"run.thresholds", rb.raw()->at("thresholds")}};
    detail::BlockReader tb(wrapped, "run.thresholds", errors);
    tb.allow({"sgd_min", "adam_max", "gap_min", "energy_max"});
    tb.number("sgd_min", c.run.thresholds.sgd_min, detail::finite_any, "must be finite");
    tb.number("adam_max", c.run.thresholds.adam_max, detail::finite_any, "must be finite");
    tb.number("gap_min", c.run.thresholds.gap_min, detail::finite_any, "must be finite");
    tb.number("energy_max", c.run.thresholds.energy_max, detail::finite_any, "must be finite");
  }
  for (std::size_t k = 0; k < c.run.deltas.size(); ++k) {
    if (!detail::unit_open(c.run.deltas[k])) rb.fail("deltas", "entries must lie in (0,1)");
    else if (k > 0 && !(c.run.deltas[k] < c.run.deltas[k - 1]))
      rb.fail("deltas", "must be strictly decreasing");
    else continue;
    break;
  }

  // output
  detail::BlockReader wb(root, "output", errors);
  wb.allow({"directory"});
  wb.text("directory", c.output.directory);

  // command-specific requirements
  const auto& cmd = c.command;
  const bool is_lb_metric = c.run.metric.empty() || c.run.metric == "avg" || c.run.metric == "weighted";
  const bool is_tail_metric =
      c.run.metric.empty() || c.run.metric == "avg_gsq" || c.run.metric == "w_gsq" || c.run.metric == "E";
  if (cmd == "run" || cmd == "tail") {
    if (oz.kind == "adam") {
      if (oz.calibrated && !oz.eta) zb.fail("eta", "required for calibrated adam");
      if (oz.calibrated && c.run.T < 10) rb.fail("T", "calibrated adam requires T >= 10");
      if (!oz.calibrated && (!oz.gamma || !oz.beta2))
        zb.fail("gamma", "uncalibrated adam requires gamma and beta2");
    } else if (oz.kind == "rmsprop") {
      if (!oz.gamma || !oz.beta2) zb.fail("gamma", "rmsprop requires gamma and beta2");
    } else if (!oz.gamma && !oz.schedule) {
      zb.fail("gamma", "sgd requires gamma or schedule");
    }
  }
  if (cmd == "tail") {
    if (c.run.N < 10) rb.fail("N", "must be >= 10 for tail");
    if (c.run.deltas.size() < 3) rb.fail("deltas", "tail needs at least 3 values");
    if (!is_tail_metric) rb.fail("metric", "tail metric must be avg_gsq, w_gsq or E");
    if (c.run.metric == "w_gsq" && oz.kind != "sgd") rb.fail("metric", "w_gsq is defined for sgd only");
    if (c.run.per_delta_instances) {
      if (c.oracle.noise != "three-point") ob.fail("noise", "per-delta instances use three-point noise");
      if (c.problem.d != 1) pb.fail("d", "per-delta instances are one-dimensional");
    }
  }
  if (cmd == "lowerbound") {
    if (!is_lb_metric) rb.fail("metric", "lowerbound metric must be avg or weighted");
    if (c.run.mode == "const") {
      if (!oz.gamma) zb.fail("gamma", "required for the constant-step instance");
      if (!c.run.delta) rb.fail("delta", "required for the constant-step instance");
      if (c.run.T < 10) rb.fail("T", "constant-step instances require T >= 10");
    } else {
      if (!oz.schedule && !oz.gamma) zb.fail("schedule", "time-varying instance needs schedule or gamma");
      if (c.run.T <= 10) rb.fail("T", "time-varying instances require T > 10");
      if (c.run.mode == "tv" && !c.run.delta_bar) rb.fail("delta_bar", "required in tv mode");
      if (c.run.mode == "tv-corollary" && !c.run.delta) rb.fail("delta", "required in tv-corollary mode");
    }
    if (rb.has("N") && c.run.N < 1000) rb.fail("N", "Monte Carlo needs N >= 1000");
  }
  if (cmd == "separate") {
    if (c.run.N < 10) rb.fail("N", "must be >= 10");
    if (!c.run.deltas.empty() && c.run.deltas.size() < 3) rb.fail("deltas", "need at least 3 values");
    if (c.run.T < 10) rb.fail("T", "calibrated adam requires T >= 10");
  }

  if (!errors.empty()) throw ConfigViolations(std::move(errors));
  return c;
}

inline Config parse_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const InputError& e) {
    throw ConfigViolations({e.what()});
  }
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_config_json(text, dir.empty() ? "." : dir.string());
}

}  // namespace adamsep
