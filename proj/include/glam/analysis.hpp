#pragma once

#include "glam/data_model.hpp"
#include "glam/estimator.hpp"
#include "glam/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace glam {

/// Shares for one observation under some fitted model. Implementations must
/// recompute from the observation passed in (which may carry perturbed
/// attributes).
using SharePredictor = std::function<Vector(const MarketObservation&)>;

/// Softmax shares from per-agent parameters.
Vector predict_shares(const Vector& theta, const MarketObservation& obs,
                      const CompiledDesign& design);

/// Predictor backed by an estimation result; thetas are looked up by
/// agent_id. Agents without a feasible theta raise EstimationError.
SharePredictor glam_predictor(const EstimationResult& result, const Dataset& ds);

/// Predictor over explicit per-agent thetas (e.g. from knn_transfer),
/// keyed by agent_id.
SharePredictor theta_table_predictor(const std::vector<std::string>& agent_ids,
                                     const std::vector<Vector>& thetas,
                                     const CompiledDesign& design);

struct PredictionReport {
  double mae = 0.0;
  double overall_accuracy = 0.0;
  std::optional<double> adjusted_r_square;
  Vector per_alternative_mae;
  int n_agents = 0;
  int k_dof = 0;
};

/// MAE/OA/ARS over aligned prediction/observation share vectors. The ARS null
/// model is "all parameters zero", i.e. uniform shares.
PredictionReport accuracy_metrics(const std::vector<Vector>& predicted,
                                  const std::vector<Vector>& observed, int k_dof);

struct ElasticityColumn {
  Vector values;                   // per alternative; elasticity of j w.r.t. the target
  std::vector<int> excluded_per_alternative;
  int excluded_zero_price = 0;
  int agents_used = 0;
};

/// Arc price elasticity: the target alternative's price column is scaled by
/// (1 + perturbation) and shares are re-predicted. Agents with a zero target
/// price are excluded entirely; agents with a zero predicted share of j are
/// excluded from alternative j's average.
ElasticityColumn price_elasticity(const SharePredictor& model, const Dataset& ds,
                                  const std::string& target_column, int target_alternative,
                                  double perturbation);

struct DiversionMatrix {
  Matrix values;  // D[j*][j], diagonal fixed at -1
  std::vector<std::vector<int>> excluded;  // per row, per alternative
};

/// Diversion ratios from a perturbation of each alternative's travel-time
/// column: D[j*][j] = mean over agents of -(delta s_j / delta s_j*).
/// `time_columns[j]` names the column perturbed for alternative j.
DiversionMatrix diversion_ratios(const SharePredictor& model, const Dataset& ds,
                                 const std::vector<std::string>& time_columns,
                                 double perturbation);

/// theta_time / theta_cost; empty when the cost parameter is zero.
std::optional<double> value_of_time(const Vector& theta, int time_param, int cost_param);

/// Money-metric welfare loss of removing one alternative:
/// (1/theta_cost) * (logsum without - logsum with). Requires theta_cost < 0;
/// returns empty otherwise.
std::optional<double> compensating_variation(const Vector& theta, const MarketObservation& obs,
                                             const CompiledDesign& design, int removed_alternative,
                                             int cost_param);

/// Same-segment K-nearest-neighbor transfer of estimated parameters to new
/// agents, on (origin, destination) coordinates with Euclidean distance.
/// Returned thetas are unweighted means of the K nearest training agents'
/// parameters; distance ties break by training order.
std::vector<Vector> knn_transfer(const EstimationResult& trained, const Dataset& train_ds,
                                 const std::vector<MarketObservation>& new_agents, int k);

}  // namespace glam
