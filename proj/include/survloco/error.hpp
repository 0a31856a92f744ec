#pragma once

#include <stdexcept>
#include <string>

namespace survloco {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// Bad input: malformed files, contract violations, invalid configuration.
class ValidationError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation"; }
};

// A computation that started but could not produce a result.
class ComputationError : public Error {
public:
  using Error::Error;
  const char* kind() const noexcept override { return "computation"; }
};

class ConvergenceError : public ComputationError {
public:
  ConvergenceError(const std::string& what, double gradient_norm)
      : ComputationError(what), gradient_norm_(gradient_norm) {}
  const char* kind() const noexcept override { return "convergence"; }
  double gradient_norm() const noexcept { return gradient_norm_; }

private:
  double gradient_norm_;
};

// Too many minipatches carried no events to train on.
class CensoringSaturationError : public ComputationError {
public:
  CensoringSaturationError(const std::string& what, std::size_t skipped, std::size_t total)
      : ComputationError(what), skipped_(skipped), total_(total) {}
  const char* kind() const noexcept override { return "censoring_saturation"; }
  std::size_t skipped() const noexcept { return skipped_; }
  std::size_t total() const noexcept { return total_; }

private:
  std::size_t skipped_;
  std::size_t total_;
};

}  // namespace survloco
