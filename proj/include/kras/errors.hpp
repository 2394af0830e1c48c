#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace kras {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed expression text. Carries the byte offset of the failure and the
/// set of tokens that would have been accepted there.
struct ParseError : Error {
  std::size_t offset;
  std::vector<std::string> expected;
  ParseError(std::size_t off, std::vector<std::string> exp, const std::string& what)
      : Error(what), offset(off), expected(std::move(exp)) {}
};

/// Division by zero or log of a non-positive argument at the evaluation point.
struct EvalError : Error {
  using Error::Error;
};

struct LinearlyDependentBasis : Error {
  using Error::Error;
};

struct NotClosedUnderDerivative : Error {
  using Error::Error;
};

struct NotRepresentable : Error {
  using Error::Error;
};

struct NotPositiveDefinite : Error {
  using Error::Error;
};

struct NoConvergence : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct BilinearityError : Error {
  using Error::Error;
};

struct AlphaZero : Error {
  using Error::Error;
};

struct InvalidZ : Error {
  using Error::Error;
};

struct SolverFailure : Error {
  using Error::Error;
};

struct InfeasibleCertificate : Error {
  using Error::Error;
};

struct Infeasible : Error {
  using Error::Error;
};

struct ZeroInput : Error {
  using Error::Error;
};

struct HistoryGap : Error {
  using Error::Error;
};

struct WindowTooShort : Error {
  using Error::Error;
};

struct ConfigError : Error {
  std::string key;
  ConfigError(std::string k, const std::string& what) : Error(what), key(std::move(k)) {}
};

}  // namespace kras
