#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace opacity {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A transition, emission or initial distribution that is not stochastic.
class NonStochasticRow : public Error {
 public:
  using Error::Error;
};

class NegativeCost : public Error {
 public:
  using Error::Error;
};

/// Raised when an observation sequence has zero probability under the current mask.
class ZeroProbabilityObservation : public Error {
 public:
  using Error::Error;
};

class EnumerationTooLarge : public Error {
 public:
  using Error::Error;
};

class DegeneratePolicy : public Error {
 public:
  using Error::Error;
};

class InvalidPolicyRow : public Error {
 public:
  using Error::Error;
};

class AmbiguousSecretCoverage : public Error {
 public:
  using Error::Error;
};

/// Policy or trace file does not match the model it is loaded against.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace opacity
