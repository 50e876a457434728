#pragma once

#include <stdexcept>
#include <string>

namespace sphero {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularMassError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class UnobservableAugmentationError : public Error {
 public:
  using Error::Error;
};

class PlacementFailedError : public Error {
 public:
  using Error::Error;
};

class JacobianSingularError : public Error {
 public:
  using Error::Error;
};

class BadFractionsError : public Error {
 public:
  using Error::Error;
};

class NoSteadyStateError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace sphero
