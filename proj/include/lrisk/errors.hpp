#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lrisk {

// Parameter outside the domain of a spectrum, regularizer or optimizer.
class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Vector lengths that are supposed to agree do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite or otherwise malformed numeric input.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A caller-side precondition (e.g. sorted input) was violated.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// The entropic smoother needs strictly positive weights.
class UnsupportedSpectrum : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The smoothed oracle failed its own primal/dual certificate.
class CertificateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long row = -1, long column = -1)
      : std::runtime_error(what), row_(row), column_(column) {}
  long row() const noexcept { return row_; }
  long column() const noexcept { return column_; }

 private:
  long row_;
  long column_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Exhaustive enumeration would exceed the combinatorial cap.
class EnumerationLimit : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every learning rate in a grid diverged for one algorithm.
class AllDivergedError : public std::runtime_error {
 public:
  explicit AllDivergedError(const std::string& algorithm)
      : std::runtime_error("every learning rate diverged for algorithm '" + algorithm + "'"),
        algorithm_(algorithm) {}
  const std::string& algorithm() const noexcept { return algorithm_; }

 private:
  std::string algorithm_;
};

// The reference solver hit its iteration cap; the best iterate is attached.
class ReferenceNotConverged : public std::runtime_error {
 public:
  ReferenceNotConverged(const std::string& what, std::vector<double> best, double best_value)
      : std::runtime_error(what), best_(std::move(best)), best_value_(best_value) {}
  const std::vector<double>& best() const noexcept { return best_; }
  double best_value() const noexcept { return best_value_; }

 private:
  std::vector<double> best_;
  double best_value_;
};

}  // namespace lrisk
