#include "glam/discount.hpp"

#include "glam/analysis.hpp"
#include "glam/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace glam {

DiscountInstance precompute_discount_shares(const std::vector<Vector>& thetas,
                                            const Dataset& ds, const DiscountOptions& options) {
  if (thetas.size() != ds.observations.size()) {
    throw ValidationError("discount: need one theta per observation");
  }
  if (!(options.discount_rate > 0.0 && options.discount_rate < 1.0)) {
    throw ValidationError("discount: discount_rate must lie in (0,1)");
  }
  int transit = ds.spec.alternative_index(options.transit_alternative);
  if (transit < 0) {
    throw ValidationError("discount: alternative " + options.transit_alternative +
                          " not in spec");
  }
  int fare_col = ds.column_index(options.fare_column);
  if (fare_col < 0) {
    throw ValidationError("discount: fare column " + options.fare_column + " not in dataset");
  }
  CompiledDesign design = compile_design(ds.spec, ds.columns);

  DiscountInstance inst;
  inst.max_regions = options.max_regions;
  inst.budget = options.budget;
  inst.discount_rate = options.discount_rate;
  inst.demand_weighted_budget = options.demand_weighted_budget;

  const std::size_t n = ds.observations.size();
  inst.agent_ids.resize(n);
  inst.demand.resize(n);
  inst.fare.resize(n);
  inst.share_without.resize(n);
  inst.share_with.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    if (thetas[t].size() == 0) {
      throw ValidationError("discount: agent " + ds.observations[t].agent_id +
                            " has no parameters");
    }
  }
  // Share predictions are independent per agent; region bookkeeping stays in
  // dataset order below.
  parallel_for(n, options.threads, [&](std::size_t t) {
    const auto& obs = ds.observations[t];
    Vector base = predict_shares(thetas[t], obs, design);
    MarketObservation discounted = obs;
    discounted.attributes(transit, fare_col) *= (1.0 - options.discount_rate);
    Vector with = predict_shares(thetas[t], discounted, design);
    inst.agent_ids[t] = obs.agent_id;
    inst.demand[t] = obs.demand;
    inst.fare[t] = obs.attributes(transit, fare_col) * ds.spec.column_scale(options.fare_column);
    inst.share_without[t] = base[transit];
    inst.share_with[t] = with[transit];
  });
  std::map<std::string, int> region_index;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& region_id = ds.observations[t].region_id;
    auto [it, inserted] = region_index.try_emplace(
        region_id, static_cast<int>(inst.regions.size()));
    if (inserted) {
      inst.regions.push_back(region_id);
      inst.agents_by_region.emplace_back();
    }
    inst.agents_by_region[static_cast<std::size_t>(it->second)].push_back(static_cast<int>(t));
  }
  return inst;
}

namespace {

struct RegionStats {
  double gain = 0.0;   // ridership increase if selected
  double cost = 0.0;   // budget charge if selected
  double revenue_delta = 0.0;
};

std::vector<RegionStats> region_stats(const DiscountInstance& inst) {
  std::vector<RegionStats> stats(inst.regions.size());
  for (std::size_t r = 0; r < inst.regions.size(); ++r) {
    for (int t : inst.agents_by_region[r]) {
      double d = inst.demand[t];
      stats[r].gain += (inst.share_with[t] - inst.share_without[t]) * d;
      double charge = inst.discount_rate * inst.fare[t];
      if (inst.demand_weighted_budget) charge *= inst.share_without[t] * d;
      stats[r].cost += charge;
      stats[r].revenue_delta += inst.fare[t] * ((1.0 - inst.discount_rate) * inst.share_with[t] -
                                                inst.share_without[t]) *
                                d;
    }
  }
  return stats;
}

double baseline_ridership(const DiscountInstance& inst) {
  double total = 0.0;
  for (std::size_t t = 0; t < inst.agent_ids.size(); ++t) {
    total += inst.share_without[t] * inst.demand[t];
  }
  return total;
}

DiscountSolution assemble(const DiscountInstance& inst, const std::vector<RegionStats>& stats,
                          const std::vector<int>& selected, bool optimal) {
  DiscountSolution sol;
  sol.optimal = optimal;
  sol.gap = 0.0;
  double gain = 0.0;
  for (int r : selected) {
    sol.selected_regions.push_back(inst.regions[static_cast<std::size_t>(r)]);
    gain += stats[static_cast<std::size_t>(r)].gain;
    sol.budget_used += stats[static_cast<std::size_t>(r)].cost;
    sol.revenue_change += stats[static_cast<std::size_t>(r)].revenue_delta;
  }
  sol.ridership_gain = gain;
  sol.objective_ridership = baseline_ridership(inst) + gain;
  std::sort(sol.selected_regions.begin(), sol.selected_regions.end());
  return sol;
}

}  // namespace

DiscountSolution solve_bp_exact(const DiscountInstance& inst) {
  const int R = static_cast<int>(inst.regions.size());
  if (R > 64) {
    throw OptimizationError("exact solver limited to 64 regions; use the heuristic");
  }
  if (inst.max_regions < 0 || inst.budget < 0.0) {
    throw ValidationError("discount: O and B must be nonnegative");
  }
  auto stats = region_stats(inst);

  // Regions ordered by gain descending (ties by index) for tight bounds.
  std::vector<int> order(R);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&stats](int a, int b) {
    return stats[static_cast<std::size_t>(a)].gain > stats[static_cast<std::size_t>(b)].gain;
  });
  // suffix_best[k][c]: sum of the c largest positive gains among order[k..).
  const int O = std::min(inst.max_regions, R);
  std::vector<double> positive_gain(R);
  for (int k = 0; k < R; ++k) {
    positive_gain[k] = std::max(0.0, stats[static_cast<std::size_t>(order[k])].gain);
  }
  std::vector<std::vector<double>> suffix_best(R + 1, std::vector<double>(O + 1, 0.0));
  for (int k = R - 1; k >= 0; --k) {
    for (int c = 1; c <= O; ++c) {
      // order is gain-sorted, so taking the first c positive gains is best
      suffix_best[k][c] = positive_gain[k] > 0.0
                              ? positive_gain[k] + suffix_best[k + 1][c - 1]
                              : suffix_best[k + 1][c];
    }
  }

  // Seed the incumbent with the greedy solution for early pruning.
  DiscountSolution greedy = solve_bp_heuristic(inst);
  double best_gain = greedy.ridership_gain;
  std::vector<int> best_set;
  {
    // Recover greedy's region indices for the incumbent.
    for (const auto& name : greedy.selected_regions) {
      for (int r = 0; r < R; ++r) {
        if (inst.regions[static_cast<std::size_t>(r)] == name) best_set.push_back(r);
      }
    }
  }

  std::vector<int> current;
  // Depth-first over the sorted region order; bound ignores the budget.
  auto dfs = [&](auto&& self, int k, int used, double spent, double gain) -> void {
    if (gain > best_gain + 1e-12) {
      best_gain = gain;
      best_set = current;
    }
    if (k == R || used == O) return;
    if (gain + suffix_best[k][O - used] <= best_gain + 1e-12) return;  // prune
    int region = order[k];
    const auto& s = stats[static_cast<std::size_t>(region)];
    // Include branch first (sorted by gain, likely better).
    if (spent + s.cost <= inst.budget + 1e-9) {
      current.push_back(region);
      self(self, k + 1, used + 1, spent + s.cost, gain + s.gain);
      current.pop_back();
    }
    self(self, k + 1, used, spent, gain);
  };
  dfs(dfs, 0, 0, 0.0, 0.0);

  std::sort(best_set.begin(), best_set.end());
  return assemble(inst, stats, best_set, /*optimal=*/true);
}

DiscountSolution solve_bp_heuristic(const DiscountInstance& inst) {
  const int R = static_cast<int>(inst.regions.size());
  if (inst.max_regions < 0 || inst.budget < 0.0) {
    throw ValidationError("discount: O and B must be nonnegative");
  }
  auto stats = region_stats(inst);
  const int O = std::min(inst.max_regions, R);

  // Greedy by gain per unit of budget (free positive-gain regions first).
  std::vector<int> order(R);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&stats](int a, int b) {
    const auto& sa = stats[static_cast<std::size_t>(a)];
    const auto& sb = stats[static_cast<std::size_t>(b)];
    double ra = sa.cost > 0 ? sa.gain / sa.cost : (sa.gain > 0 ? kInf : 0.0);
    double rb = sb.cost > 0 ? sb.gain / sb.cost : (sb.gain > 0 ? kInf : 0.0);
    return ra > rb;
  });
  std::vector<int> selected;
  double spent = 0.0;
  for (int r : order) {
    if (static_cast<int>(selected.size()) == O) break;
    const auto& s = stats[static_cast<std::size_t>(r)];
    if (s.gain <= 0.0) continue;
    if (spent + s.cost > inst.budget + 1e-9) continue;
    selected.push_back(r);
    spent += s.cost;
  }

  // Single-swap local search: try replacing one member with one outsider.
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::size_t i = 0; i < selected.size() && !improved; ++i) {
      for (int candidate = 0; candidate < R && !improved; ++candidate) {
        if (std::find(selected.begin(), selected.end(), candidate) != selected.end()) continue;
        const auto& in = stats[static_cast<std::size_t>(candidate)];
        const auto& outgoing = stats[static_cast<std::size_t>(selected[i])];
        if (in.gain <= outgoing.gain) continue;
        if (spent - outgoing.cost + in.cost > inst.budget + 1e-9) continue;
        spent += in.cost - outgoing.cost;
        selected[i] = candidate;
        improved = true;
      }
    }
  }
  std::sort(selected.begin(), selected.end());
  auto sol = assemble(inst, stats, selected, /*optimal=*/false);
  return sol;
}

}  // namespace glam
