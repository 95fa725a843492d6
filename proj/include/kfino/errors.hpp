#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace kfino {

// Base of every error raised by the library. Callers that do not care about
// the category can catch this one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::string with_step(const std::string& what, std::optional<std::size_t> step) {
  if (!step) return what;
  return what + " at step " + std::to_string(*step);
}
}  // namespace detail

class SingularCovariance : public Error {
 public:
  explicit SingularCovariance(const std::string& what, std::optional<std::size_t> step = std::nullopt)
      : Error(detail::with_step("singular covariance: " + what, step)), step_(step) {}
  std::optional<std::size_t> step() const { return step_; }

 private:
  std::optional<std::size_t> step_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error("dimension mismatch: " + what) {}
};

class EmptySeries : public Error {
 public:
  explicit EmptySeries(const std::string& what = "series is empty") : Error(what) {}
};

class DegenerateWeights : public Error {
 public:
  explicit DegenerateWeights(std::size_t step)
      : Error("all hypothesis weights vanished at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

class ExactSizeExceeded : public Error {
 public:
  ExactSizeExceeded(std::size_t n, std::size_t limit)
      : Error("exact enumeration requested for " + std::to_string(n) + " observations (limit " +
              std::to_string(limit) + ")") {}
};

class HistoryRequired : public Error {
 public:
  HistoryRequired() : Error("smoothing requires a hypothesis set filtered with history tracking") {}
};

class NegativeTimeStep : public Error {
 public:
  explicit NegativeTimeStep(double dt) : Error("negative time step " + std::to_string(dt)) {}
};

class TimeOrderError : public Error {
 public:
  explicit TimeOrderError(const std::string& what) : Error("timestamps not strictly increasing: " + what) {}
};

class SingularMStep : public Error {
 public:
  SingularMStep() : Error("M-step normal equations are singular") {}
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace kfino
