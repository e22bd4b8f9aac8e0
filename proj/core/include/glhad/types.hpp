#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace glhad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration / model validation failure.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Gain synthesis failure (singular Riccati or innovation matrix).
class SynthesisError : public Error {
 public:
  using Error::Error;
};

/// Residual-space construction failure (rank deficiency, degenerate projection).
class GeometryError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace glhad
