#pragma once

#include <stdexcept>
#include <string>

namespace bregman {

// All library errors derive from Error so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An oracle produced inf/nan; the message names the offending point.
struct NonFiniteEvaluation : Error {
  using Error::Error;
};

// Argument outside the operation's domain (negative lambda, theta outside
// [0,1], nonpositive entry where positivity is required, ...).
struct DomainError : Error {
  using Error::Error;
};

// No sign change found when bracketing a monotone inverse.
struct InverseBracketError : Error {
  using Error::Error;
};

// Magnitude tie at the quantile-threshold cut rank.
struct TieError : Error {
  TieError(const std::string& msg, int i, int j) : Error(msg), index_a(i), index_b(j) {}
  int index_a;
  int index_b;
};

// Inner (subproblem) solver failed to reach tolerance.
struct InnerSolverError : Error {
  InnerSolverError(const std::string& msg, double residual) : Error(msg), last_residual(residual) {}
  double last_residual;
};

struct PivotLimitError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DegenerateScale : Error {
  using Error::Error;
};

struct Unsupported : Error {
  using Error::Error;
};

struct FactorizationError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

struct InsufficientData : Error {
  using Error::Error;
};

}  // namespace bregman
