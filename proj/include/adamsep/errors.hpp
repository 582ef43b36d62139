#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adamsep {

/// Invalid parameters, unknown identifiers, or inconsistent settings.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data (dimension mismatch, nonfinite entries, empty series).
class InputError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A lemma or construction was invoked outside the parameter regime it is stated for.
class PreconditionError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A hard instance whose confidence level violates the admissible range.
/// `clause()` names the violated condition.
class InstanceInvalidError : public std::invalid_argument {
public:
  InstanceInvalidError(std::string clause, const std::string& what)
      : std::invalid_argument(what), clause_(std::move(clause)) {}
  const std::string& clause() const noexcept { return clause_; }

private:
  std::string clause_;
};

/// An iterate became nonfinite. `step()` is the 1-based index of the step
/// that produced it.
class DivergenceError : public std::runtime_error {
public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t step_;
};

}  // namespace adamsep
