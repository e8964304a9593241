#pragma once

#include "glam/analysis.hpp"
#include "glam/data_model.hpp"
#include "glam/regression.hpp"
#include "glam/types.hpp"

#include <string>
#include <vector>

namespace glam {

enum class BenchmarkKind { MNL, NL, IPDL };

std::string to_string(BenchmarkKind kind);
BenchmarkKind benchmark_kind_from_string(const std::string& name);

/// Market-level benchmark fitted by regression on inverted shares
/// ln(s_jt / s_0t). Attribute regressors are design-row differences relative
/// to the reference alternative; NL/IPDL add within-group log-share terms
/// with grouping coefficients rho_d, instrumented as endogenous.
struct BenchmarkFit {
  BenchmarkKind kind = BenchmarkKind::MNL;
  std::vector<std::string> coefficient_names;  // model parameters then rho_d
  Vector coefficients;
  Vector rho;  // grouping coefficients, one per dimension (empty for MNL)
  LinearModelFit fit;
  std::string reference_alternative;
  GroupingScheme groups;
  std::vector<int> parameter_slots;  // spec parameter index per coefficient, -1 for rho
  int excluded_zero_share_rows = 0;
};

struct BenchmarkOptions {
  /// Drop the rho regressors but keep the IPDL code path (rho pinned at 0).
  bool force_rho_zero = false;
};

/// Fits the benchmark by OLS/2SLS on stacked inverted-share rows. Rows with a
/// zero inside share are excluded (counted); a zero reference share anywhere
/// is an error. The spec's control parameter, if any, is excluded: price
/// endogeneity in benchmarks is handled by the instruments directly.
BenchmarkFit estimate_benchmark(const Dataset& ds, BenchmarkKind kind,
                                const GroupingScheme& groups,
                                const InstrumentMatrix* instruments = nullptr,
                                const BenchmarkOptions& options = {});

/// Predicted shares for one observation. MNL is closed-form softmax over
/// delta with delta_ref = 0; NL/IPDL solve the implicit log-share system by
/// damped fixed-point iteration to residual 1e-10.
Vector benchmark_predict_shares(const BenchmarkFit& fit, const Dataset& ds,
                                const MarketObservation& obs);

/// Predictor adapter for the analysis module.
SharePredictor benchmark_predictor(const BenchmarkFit& fit, const Dataset& ds);

}  // namespace glam
