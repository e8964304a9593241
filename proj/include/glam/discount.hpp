#pragma once

#include "glam/data_model.hpp"
#include "glam/types.hpp"

#include <string>
#include <vector>

namespace glam {

/// Fare-discount program data: per-agent transit shares predicted with and
/// without the discount, grouped by region. Selecting a region applies the
/// discount to all of its agents.
struct DiscountInstance {
  std::vector<std::string> regions;                 // set I
  std::vector<std::vector<int>> agents_by_region;   // T_i as indices into the agent arrays
  std::vector<std::string> agent_ids;
  std::vector<double> demand;         // d_t, trips/day
  std::vector<double> fare;           // c_transit,t (model units)
  std::vector<double> share_with;     // transit share at discounted fare
  std::vector<double> share_without;  // transit share at observed fare
  int max_regions = 0;                // O
  double budget = 0.0;                // B, currency/day
  double discount_rate = 0.5;
  /// Budget accounting: false sums discount_rate * fare over impacted agents;
  /// true additionally weights by current transit ridership (share * demand).
  bool demand_weighted_budget = false;
};

struct DiscountSolution {
  std::vector<std::string> selected_regions;
  double objective_ridership = 0.0;  // total transit trips/day after selection
  double ridership_gain = 0.0;       // vs. no discount anywhere
  double revenue_change = 0.0;       // fare revenue delta, currency/day
  double budget_used = 0.0;          // revenue-loss measure charged to B
  bool optimal = false;
  double gap = 0.0;
};

struct DiscountOptions {
  std::string transit_alternative;
  std::string fare_column;
  double discount_rate = 0.5;
  int max_regions = 0;
  double budget = 0.0;
  bool demand_weighted_budget = false;
  int threads = 0;  // share-prediction workers; 0 = all cores
};

/// Predicts each agent's transit share at the observed fare and at
/// fare * (1 - discount_rate), grouping agents by region. `thetas` is one
/// parameter vector per observation (from estimation or KNN transfer).
DiscountInstance precompute_discount_shares(const std::vector<Vector>& thetas,
                                            const Dataset& ds, const DiscountOptions& options);

/// Exact optimum by depth-first branch and bound over region indicators
/// (at most 64 regions). Deterministic; returns optimal = true, gap 0.
DiscountSolution solve_bp_exact(const DiscountInstance& inst);

/// Greedy by gain-per-budget ratio with single-swap local search. Reported
/// objective is a lower bound on the exact optimum.
DiscountSolution solve_bp_heuristic(const DiscountInstance& inst);

}  // namespace glam
