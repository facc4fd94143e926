#pragma once

#include <stdexcept>
#include <string>

namespace tierattn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A query row with no attendable key.
class MaskError : public Error {
 public:
  using Error::Error;
};

/// Dense materialization refused because the result would be too large.
class SizeGuardError : public Error {
 public:
  using Error::Error;
};

/// Metric undefined for the given input (zero norm, constant ranks, ...).
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Configuration rejected by a validator.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tierattn
