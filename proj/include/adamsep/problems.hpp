#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "adamsep/errors.hpp"
#include "adamsep/kernel.hpp"

namespace adamsep {

enum class ObjectiveKind { quadratic_diag, quadratic_cosine };

inline std::string to_string(ObjectiveKind k) {
  return k == ObjectiveKind::quadratic_diag ? "quadratic-diag" : "quadratic-cosine";
}

/// Smooth lower-bounded test objective with certified constants.
///
///   quadratic-diag:    f(x) = 1/2 sum_i lambda_i x_i^2,  L = max lambda_i
///   quadratic-cosine:  f(x) = sum_i (x_i^2 + cos x_i - 1), L = 3
///
/// Both attain f_star = 0 at the origin.
class Objective {
public:
  static Objective quadratic_diag(std::vector<double> eigenvalues) {
    if (eigenvalues.empty()) throw ConfigError("quadratic-diag: need at least one eigenvalue");
    for (double l : eigenvalues)
      if (!(l > 0.0) || !std::isfinite(l))
        throw ConfigError("quadratic-diag: eigenvalues must be positive and finite");
    const double L = *std::max_element(eigenvalues.begin(), eigenvalues.end());
    const std::size_t d = eigenvalues.size();
    return Objective(ObjectiveKind::quadratic_diag, d, std::move(eigenvalues), L);
  }

  static Objective quadratic_cosine(std::size_t d) {
    if (d == 0) throw ConfigError("quadratic-cosine: dimension must be positive");
    return Objective(ObjectiveKind::quadratic_cosine, d, {}, 3.0);
  }

  /// The scalar objective 1/2 x^2 used by the lower-bound instances.
  static Objective half_square() { return quadratic_diag({1.0}); }

  ObjectiveKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept { return d_; }
  double f_star() const noexcept { return 0.0; }
  double smoothness() const noexcept { return L_; }
  const std::vector<double>& eigenvalues() const noexcept { return lambda_; }

  std::string id() const {
    std::string s = to_string(kind_) + "(d=" + std::to_string(d_);
    if (kind_ == ObjectiveKind::quadratic_diag) {
      s += ",lambda=[";
      for (std::size_t i = 0; i < lambda_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(lambda_[i]);
      }
      s += "]";
    }
    return s + ")";
  }

  double value(std::span<const double> x) const {
    check_dim(x.size());
    double f = 0.0;
    if (kind_ == ObjectiveKind::quadratic_diag) {
      for (std::size_t i = 0; i < d_; ++i) f += 0.5 * lambda_[i] * x[i] * x[i];
    } else {
      // cos(x) - 1 = -2 sin^2(x/2) avoids cancellation near the minimizer.
      for (std::size_t i = 0; i < d_; ++i) {
        const double s = std::sin(0.5 * x[i]);
        f += x[i] * x[i] - 2.0 * s * s;
      }
    }
    return f;
  }

  /// Shifted objective f - f_star + 1 >= 1.
  double shifted_value(std::span<const double> x) const { return value(x) - f_star() + 1.0; }

  void gradient_into(std::span<const double> x, std::span<double> out) const {
    check_dim(x.size());
    check_dim(out.size());
    if (kind_ == ObjectiveKind::quadratic_diag) {
      for (std::size_t i = 0; i < d_; ++i) out[i] = lambda_[i] * x[i];
    } else {
      for (std::size_t i = 0; i < d_; ++i) out[i] = 2.0 * x[i] - std::sin(x[i]);
    }
  }

  RealVec gradient(const RealVec& x) const {
    RealVec g(x.dim());
    gradient_into(x.values(), g.values());
    return g;
  }

  double value(const RealVec& x) const { return value(x.values()); }
  double shifted_value(const RealVec& x) const { return shifted_value(x.values()); }

private:
  Objective(ObjectiveKind kind, std::size_t d, std::vector<double> lambda, double L)
      : kind_(kind), d_(d), lambda_(std::move(lambda)), L_(L) {}

  void check_dim(std::size_t n) const {
    if (n != d_)
      throw InputError("objective: dimension mismatch (" + std::to_string(n) + " vs " +
                       std::to_string(d_) + ")");
  }

  ObjectiveKind kind_;
  std::size_t d_;
  std::vector<double> lambda_;
  double L_;
};

struct ObjectiveEval {
  double value;
  RealVec grad;
};

inline ObjectiveEval objective_eval(const Objective& obj, const RealVec& x) {
  return {obj.value(x), obj.gradient(x)};
}

struct ZeroNoise {};

struct GaussianNoise {
  double sigma = 0.0;
};

/// xi = +A or -A with probability 1/(2A^2) each, 0 otherwise. Unit variance for every A >= 1.
struct ThreePointNoise {
  double amplitude = 1.0;
};

using NoiseSpec = std::variant<ZeroNoise, GaussianNoise, ThreePointNoise>;

inline std::string describe(const NoiseSpec& n) {
  return std::visit(
      [](const auto& s) -> std::string {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ZeroNoise>) return "zero";
        else if constexpr (std::is_same_v<S, GaussianNoise>)
          return "gaussian(sigma=" + std::to_string(s.sigma) + ")";
        else return "three-point(A=" + std::to_string(s.amplitude) + ")";
      },
      n);
}

/// Draw one three-point variate from a single uniform.
/// u < 1/(2A^2) -> +A;  u < 1/A^2 -> -A;  otherwise 0.
inline double three_point_from_uniform(double u, double amplitude) noexcept {
  const double p = 1.0 / (amplitude * amplitude);
  if (u < 0.5 * p) return amplitude;
  if (u < p) return -amplitude;
  return 0.0;
}

/// Unbiased stochastic gradient g = grad f(x) + xi with bounded variance C.
///
/// Draw accounting per call: zero noise consumes nothing, Gaussian consumes d
/// draws, three-point consumes exactly one.
class Oracle {
public:
  Oracle(Objective objective, NoiseSpec noise) : objective_(std::move(objective)), noise_(noise) {
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, GaussianNoise>) {
            if (!(s.sigma >= 0.0) || !std::isfinite(s.sigma))
              throw ConfigError("gaussian noise: sigma must be finite and >= 0");
          } else if constexpr (std::is_same_v<S, ThreePointNoise>) {
            if (objective_.dim() != 1) throw ConfigError("three-point noise requires d = 1");
            if (!(s.amplitude >= 1.0) || !std::isfinite(s.amplitude))
              throw ConfigError("three-point noise requires amplitude A >= 1");
          }
        },
        noise_);
  }

  const Objective& objective() const noexcept { return objective_; }
  const NoiseSpec& noise() const noexcept { return noise_; }
  std::size_t dim() const noexcept { return objective_.dim(); }

  /// Variance constant: d sigma^2, 1, or 0.
  double variance_bound() const noexcept {
    return std::visit(
        [&](const auto& s) -> double {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, ZeroNoise>) return 0.0;
          else if constexpr (std::is_same_v<S, GaussianNoise>)
            return static_cast<double>(objective_.dim()) * s.sigma * s.sigma;
          else return 1.0;
        },
        noise_);
  }

  bool deterministic() const noexcept {
    if (std::holds_alternative<ZeroNoise>(noise_)) return true;
    if (const auto* g = std::get_if<GaussianNoise>(&noise_)) return g->sigma == 0.0;
    return false;
  }

  /// Writes grad f(x) + xi into `out`. `grad_out`, when non-empty, receives grad f(x).
  void sample_into(std::span<const double> x, RngStream& stream, std::span<double> out,
                   std::span<double> grad_out = {}) const {
    objective_.gradient_into(x, out);
    if (!grad_out.empty()) std::copy(out.begin(), out.end(), grad_out.begin());
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, GaussianNoise>) {
            for (double& o : out) o += s.sigma * stream.std_gaussian();
          } else if constexpr (std::is_same_v<S, ThreePointNoise>) {
            out[0] += three_point_from_uniform(stream.uniform01(), s.amplitude);
          }
        },
        noise_);
  }

  RealVec sample(const RealVec& x, RngStream& stream) const {
    RealVec g(x.dim());
    sample_into(x.values(), stream, g.values());
    return g;
  }

private:
  Objective objective_;
  NoiseSpec noise_;
};

inline RealVec sample_gradient(const Oracle& oracle, const RealVec& x, RngStream& stream) {
  return oracle.sample(x, stream);
}

}  // namespace adamsep
