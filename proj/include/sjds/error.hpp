#pragma once

#include <stdexcept>
#include <string>

namespace sjds {

// Base for every error raised by the library. The CLI maps all of these to
// exit code 2; only argument parsing failures map to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable, truncated or malformed files.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Index or column outside the valid range.
class RangeError : public Error {
 public:
  using Error::Error;
};

// A precondition on an argument does not hold (bad alpha, n < 2, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// g evaluated outside its domain. Carries the subsample ordinal and the
// evaluation point so a run can be diagnosed instead of silently biased.
class DomainError : public Error {
 public:
  DomainError(std::string what, std::size_t subsample, long long point)
      : Error(std::move(what)), subsample_(subsample), point_(point) {}

  std::size_t subsample() const noexcept { return subsample_; }
  // -1 for the full-subsample mean, otherwise the left-out position.
  long long point() const noexcept { return point_; }

 private:
  std::size_t subsample_;
  long long point_;
};

}  // namespace sjds
