#pragma once

#include <stdexcept>
#include <string>

namespace cqpc {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied an invalid argument or configuration.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input data is unusable (malformed CSV, too few rows, empty pools).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A numeric routine could not produce an answer (no root, no crossing).
class NumericError : public Error {
 public:
  using Error::Error;
};

class NonFiniteInput : public InvalidArgument {
 public:
  NonFiniteInput() : InvalidArgument("non-finite input") {}
};

class InsufficientData : public DataError {
 public:
  explicit InsufficientData(std::string split)
      : DataError("insufficient data: split '" + split + "' would receive zero rows"),
        split_(std::move(split)) {}
  const std::string& split() const noexcept { return split_; }

 private:
  std::string split_;
};

class DegenerateTree : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class EmptyPoolingRegion : public DataError {
 public:
  explicit EmptyPoolingRegion(double xi)
      : DataError("empty pooling region: no calibration point within diameter xi=" +
                  std::to_string(xi)),
        xi_(xi) {}
  double xi() const noexcept { return xi_; }

 private:
  double xi_;
};

/// g(0) and g(max) of the tilde-delta equation have the same sign.
class NoCrossing : public NumericError {
 public:
  NoCrossing(double g_low, double g_high)
      : NumericError("no crossing: g(lo)=" + std::to_string(g_low) +
                     ", g(hi)=" + std::to_string(g_high)),
        g_low_(g_low),
        g_high_(g_high) {}
  double g_low() const noexcept { return g_low_; }
  double g_high() const noexcept { return g_high_; }

 private:
  double g_low_;
  double g_high_;
};

class IntervalEscapes : public NumericError {
 public:
  explicit IntervalEscapes(double z)
      : NumericError("interval escapes (0,1): z=" + std::to_string(z)), z_(z) {}
  double z() const noexcept { return z_; }

 private:
  double z_;
};

}  // namespace cqpc
