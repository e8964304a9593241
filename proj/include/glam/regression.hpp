#pragma once

#include "glam/data_model.hpp"
#include "glam/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace glam {

struct LinearModelFit {
  Vector coefficients;
  Vector standard_errors;
  Vector residuals;
  double r_squared = 0.0;
  int n_obs = 0;
  std::vector<std::string> column_names;      // aligned with coefficients
  std::vector<std::string> used_instruments;  // empty for OLS
};

/// Least squares with classical standard errors. With `intercept` a leading
/// "(intercept)" column is prepended. Throws EstimationError on a
/// rank-deficient design, naming the dependent columns.
LinearModelFit ols_fit(const Vector& y, const Matrix& X, bool intercept,
                       const std::vector<std::string>& names = {});

/// Two-stage least squares: each endogenous column is regressed on
/// [intercept?, exogenous, instruments], replaced by its fitted values, and
/// the second stage runs OLS on [intercept?, exogenous, fitted endogenous].
/// Standard errors use the structural residuals y - X beta at the original X.
LinearModelFit tsls_fit(const Vector& y, const Matrix& X_exog, const Matrix& X_endog,
                        const Matrix& instruments, bool intercept,
                        const std::vector<std::string>& exog_names = {},
                        const std::vector<std::string>& endog_names = {},
                        const std::vector<std::string>& instrument_names = {});

/// Overlapping alternative groupings, e.g. one dimension "auto" with groups
/// {driving, on-demand, carpool} / {transit, biking, walking}. Used both for
/// differentiation instruments and for NL/IPDL segmentation terms.
struct GroupingScheme {
  struct Dimension {
    std::string name;
    std::vector<std::vector<std::string>> groups;
  };
  std::vector<Dimension> dimensions;

  /// Index of the group containing alternative `alt` in `dim`, or -1.
  int group_of(std::size_t dim, const std::string& alt) const;
};

/// Leave-one-out instrument block: rows are (observation, alternative) pairs
/// in dataset order (alternative-minor), one column per dimension x attribute
/// column. Entry = mean of the (scaled) column over the other members of the
/// alternative's group, 0 for uncovered alternatives or singleton groups.
struct InstrumentMatrix {
  std::vector<std::string> names;
  Matrix values;  // (n_obs * |J|) x names
  std::vector<std::string> warnings;

  Eigen::Index row(std::size_t obs_index, int alternative, int n_alternatives) const {
    return static_cast<Eigen::Index>(obs_index) * n_alternatives + alternative;
  }
};

InstrumentMatrix build_differentiation_instruments(const Dataset& ds,
                                                   const GroupingScheme& groups,
                                                   const std::vector<std::string>& columns);

/// Instrument block read directly from dataset columns (already per
/// observation x alternative), scaled like any other attribute.
InstrumentMatrix instrument_columns(const Dataset& ds, const std::vector<std::string>& columns);

/// First stage of the control-function correction: per alternative carrying
/// the endogenous column, regresses that column on the alternative's
/// exogenous design columns plus instruments, and stores the residuals in the
/// spec's control column. No-op when the spec declares no endogeneity.
struct ControlFunctionResult {
  Dataset dataset;
  std::map<std::string, LinearModelFit> first_stages;  // keyed by alternative
  std::vector<std::string> instrument_names;
};

ControlFunctionResult control_function_stage1(const Dataset& ds,
                                              const InstrumentMatrix& instruments);

}  // namespace glam
