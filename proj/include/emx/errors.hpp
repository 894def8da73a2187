#pragma once

#include <stdexcept>
#include <string>

namespace emx {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Geometry for which a derivative or measurement is undefined (coincident points).
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class DuplicateKeyError : public Error {
 public:
  using Error::Error;
};

class UnknownKeyError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be inverted or factorized is singular / not positive definite.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// The factor graph has a free gauge (a connected component without any prior).
class GaugeError : public Error {
 public:
  using Error::Error;
};

class PlanningError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace emx
