#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adamsep/errors.hpp"

namespace adamsep {

/// Fixed-dimension vector of finite doubles.
///
/// Finiteness is validated on construction. Element access is mutable so the
/// optimizers can update state in place; they re-validate after every step.
class RealVec {
public:
  RealVec() = default;

  explicit RealVec(std::size_t d, double fill = 0.0) : entries_(d, fill) {
    if (d == 0) throw InputError("RealVec: dimension must be positive");
    check_finite();
  }

  RealVec(std::initializer_list<double> values) : entries_(values) {
    if (entries_.empty()) throw InputError("RealVec: dimension must be positive");
    check_finite();
  }

  explicit RealVec(std::vector<double> values) : entries_(std::move(values)) {
    if (entries_.empty()) throw InputError("RealVec: dimension must be positive");
    check_finite();
  }

  std::size_t dim() const noexcept { return entries_.size(); }
  double operator[](std::size_t i) const noexcept { return entries_[i]; }
  double& operator[](std::size_t i) noexcept { return entries_[i]; }

  std::span<const double> values() const noexcept { return entries_; }
  std::span<double> values() noexcept { return entries_; }

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  bool all_finite() const noexcept {
    for (double e : entries_)
      if (!std::isfinite(e)) return false;
    return true;
  }

  double squared_norm() const noexcept {
    double s = 0.0;
    for (double e : entries_) s += e * e;
    return s;
  }

  friend bool operator==(const RealVec&, const RealVec&) = default;

private:
  void check_finite() const {
    if (!all_finite()) throw InputError("RealVec: entries must be finite");
  }

  std::vector<double> entries_;
};

inline void require_same_dim(const RealVec& a, const RealVec& b, const char* where) {
  if (a.dim() != b.dim())
    throw InputError(std::string(where) + ": dimension mismatch (" + std::to_string(a.dim()) +
                     " vs " + std::to_string(b.dim()) + ")");
}

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace detail

/// Philox4x32-10 block function (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

enum class Dist { uniform01, std_gaussian };

inline Dist parse_dist(std::string_view name) {
  if (name == "uniform01") return Dist::uniform01;
  if (name == "std_gaussian") return Dist::std_gaussian;
  throw ConfigError("unknown distribution '" + std::string(name) + "'");
}

/// Counter-based random stream addressed by (master_seed, run_index, stage_tag).
///
/// The path is hashed into a Philox key; the stream position is the Philox
/// counter. Every draw, whatever the distribution, consumes exactly one
/// counter block and advances `counter()` by 1:
///   - uniform01 uses the low 64 bits of the block, top 53 bits -> [0,1);
///   - std_gaussian uses both 64-bit halves as (u1, u2) in one Box-Muller
///     transform, keeping the cosine branch only.
class RngStream {
public:
  RngStream(std::uint64_t master_seed, std::uint64_t run_index, std::string_view stage_tag) noexcept
      : master_seed_(master_seed), run_index_(run_index), stage_tag_(stage_tag) {
    std::uint64_t h = detail::splitmix64(master_seed);
    h = detail::splitmix64(h ^ run_index);
    h = detail::splitmix64(h ^ detail::fnv1a64(stage_tag));
    key_ = {static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  }

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t run_index() const noexcept { return run_index_; }
  const std::string& stage_tag() const noexcept { return stage_tag_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Reposition the stream. Replaying from the same position reproduces the same draws.
  void seek(std::uint64_t counter) noexcept { counter_ = counter; }

  double uniform01() noexcept {
    const auto b = next_block();
    return to_unit(word64(b[0], b[1]));
  }

  double std_gaussian() noexcept {
    const auto b = next_block();
    const double u1 = to_unit(word64(b[0], b[1]));
    const double u2 = to_unit(word64(b[2], b[3]));
    return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double draw(Dist dist) noexcept {
    return dist == Dist::uniform01 ? uniform01() : std_gaussian();
  }

  double draw(std::string_view dist) { return draw(parse_dist(dist)); }

private:
  std::array<std::uint32_t, 4> next_block() noexcept {
    const std::uint64_t c = counter_++;
    return philox4x32_10({static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32), 0u, 0u},
                         key_);
  }

  static std::uint64_t word64(std::uint32_t lo, std::uint32_t hi) noexcept {
    return static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
  }

  static double to_unit(std::uint64_t w) noexcept {
    return static_cast<double>(w >> 11) * 0x1.0p-53;
  }

  std::uint64_t master_seed_;
  std::uint64_t run_index_;
  std::string stage_tag_;
  std::array<std::uint32_t, 2> key_{};
  std::uint64_t counter_ = 0;
};

inline RngStream derive_stream(std::uint64_t master_seed, std::uint64_t run_index,
                               std::string_view stage_tag) noexcept {
  return RngStream(master_seed, run_index, stage_tag);
}

/// Sample mean and standard error of the mean.
struct MeanSE {
  double mean = 0.0;
  double se = 0.0;
};

/// Welford accumulator; SE uses the unbiased variance.
class RunningStats {
public:
  void add(double x) noexcept {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  MeanSE summary() const noexcept {
    return {mean_, n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0};
  }

private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace adamsep
