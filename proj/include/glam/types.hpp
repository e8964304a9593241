#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace glam {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base class for all library errors. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad input data or model specification (exit code 2).
class ValidationError : public Error {
public:
  using Error::Error;
};

/// Estimation could not proceed or produced no usable result (exit code 3).
class EstimationError : public Error {
public:
  using Error::Error;
};

/// Infeasible or non-convergent optimization (exit code 4).
class OptimizationError : public Error {
public:
  using Error::Error;
};

/// Closed interval [lower, upper]; either side may be infinite.
struct Bounds {
  double lower = -kInf;
  double upper = kInf;

  bool contains(double x) const { return x >= lower && x <= upper; }
};

}  // namespace glam
