#pragma once

#include <stdexcept>
#include <string>

namespace orbitlab {

// Invalid input or a violated mathematical precondition. The CLI maps this to exit code 1.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative solver did not reach its tolerance; never replaced by a partial answer.
class ConvergenceError : public DomainError {
 public:
  using DomainError::DomainError;
};

// A time or enumeration budget ran out before a certified answer. CLI exit code 2.
class BudgetExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace orbitlab
