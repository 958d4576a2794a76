#pragma once

#include <stdexcept>
#include <string>

namespace pgst {

/// Bad or unreadable input: malformed files, schema violations, invalid
/// configuration. The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Non-finite losses or gradients. The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A mathematically degenerate argument, e.g. a zero-norm quaternion.
class DegenerateInput : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Caller broke an API precondition (mismatched shapes, stale artifacts).
class ContractViolation : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

} // namespace pgst
