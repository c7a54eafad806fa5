#pragma once

#include <stdexcept>
#include <string>

namespace molgrad {

/// Malformed input: dimension mismatch, empty partition, degenerate box.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Operator parameters outside their admissible set (e.g. lambda1 >= lambda2).
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A numerical routine was called outside the region where its result is
/// well defined (e.g. an s-prox whose objective is not strongly convex).
struct PreconditionError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Solver configuration rejected by a step-size condition.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string condition, const std::string& detail)
      : std::invalid_argument(condition + ": " + detail),
        condition_(std::move(condition)) {}

  const std::string& condition() const noexcept { return condition_; }

 private:
  std::string condition_;
};

/// Unsupported request (e.g. a grid oracle in more than two dimensions).
struct UnsupportedError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace molgrad
