#pragma once

#include <stdexcept>
#include <string>

namespace scu {

// Root of every error thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad caller-supplied argument (negative noise, empty sets, ...). Maps to a usage failure.
struct ArgumentError : Error {
  using Error::Error;
};

// Everything that is wrong with data on disk or in memory.
struct DataError : Error {
  using Error::Error;
};

struct DimensionError : DataError {
  using DataError::DataError;
};

struct BoundsError : DataError {
  using DataError::DataError;
};

struct ConfigError : DataError {
  using DataError::DataError;
};

struct LoadError : DataError {
  using DataError::DataError;
};

struct ParseError : DataError {
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

// Numerical breakdown: failed matrix square roots, non-finite metrics.
struct NumericalError : Error {
  using Error::Error;
};

// Raised by the training loop when a loss becomes non-finite or explodes.
struct DivergenceError : NumericalError {
  DivergenceError(long step, const std::string& component, double value)
      : NumericalError("training diverged at step " + std::to_string(step) + ": " + component +
                       " = " + std::to_string(value)),
        step_(step),
        component_(component) {}

  long step() const noexcept { return step_; }
  const std::string& component() const noexcept { return component_; }

 private:
  long step_;
  std::string component_;
};

}  // namespace scu
