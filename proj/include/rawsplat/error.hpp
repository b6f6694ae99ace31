// Copyright Contributors to the rawsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rawsplat {

enum class ErrorKind {
  Io,
  Format,
  Length,
  Validation,
  ModelRange,
  Domain,
  SingularVariance,
  InsufficientData,
  RankDeficient,
  Convergence,
  Singularity,
  Training,
};

inline const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries one of the categories above so
/// callers (and the CLI) can branch on the kind instead of parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& message, double residual, int iterations)
      : Error(ErrorKind::Convergence, message), residual_(residual), iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Length: return "length";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::ModelRange: return "model-range";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::SingularVariance: return "singular-variance";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::RankDeficient: return "rank-deficient";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Singularity: return "singularity";
    case ErrorKind::Training: return "training";
  }
  return "unknown";
}

}  // namespace rawsplat
