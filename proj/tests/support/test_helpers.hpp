#pragma once

// Shared builders for synthetic datasets and the two-mode illustrative
// example used across the test suites.

#include "glam/data_model.hpp"
#include "glam/rng.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace glam::testing {

/// Spec with shared time/cost parameters over `n_alts` alternatives and no
/// constants (every alternative identified by attributes alone).
inline ModelSpec make_time_cost_spec(int n_alts) {
  ModelSpec spec;
  spec.parameter_names = {"time", "cost"};
  spec.bounds.assign(2, Bounds{});
  for (int j = 0; j < n_alts; ++j) {
    spec.alternatives.push_back("alt" + std::to_string(j));
    spec.design.push_back({{"time", "time"}, {"cost", "cost"}});
  }
  return spec;
}

/// The two-mode taxi/transit spec: shared time and cost coefficients plus a
/// transit constant, optionally with a minutes-to-hours scale on time.
inline ModelSpec make_two_mode_spec(double time_scale = 1.0) {
  ModelSpec spec;
  spec.parameter_names = {"time", "cost", "asc_transit"};
  spec.bounds.assign(3, Bounds{});
  spec.alternatives = {"taxi", "transit"};
  spec.design = {
      {{"time", "time"}, {"cost", "cost"}},
      {{"time", "time"}, {"cost", "cost"}, {"asc_transit", kConstantColumn}},
  };
  if (time_scale != 1.0) spec.column_scales["time"] = time_scale;
  spec.reference_alternative = "taxi";
  return spec;
}

/// The eight-agent two-mode sample (times in minutes, costs in dollars).
inline Dataset make_illustrative_dataset(double time_scale = 1.0) {
  Dataset ds;
  ds.spec = make_two_mode_spec(time_scale);
  ds.columns = {"time", "cost"};
  const double rows[8][6] = {
      // taxi_time taxi_cost transit_time transit_cost taxi_share transit_share
      {10, 10, 30, 3, 0.8, 0.2},  {20, 15, 40, 3, 0.7, 0.3},  {40, 25, 60, 3, 0.6, 0.4},
      {10, 10, 30, 3, 0.2, 0.8},  {20, 15, 40, 3, 0.3, 0.7},  {40, 25, 60, 3, 0.4, 0.6},
      {10, 3, 30, 10, 0.1, 0.9},  {60, 25, 10, 3, 0.9, 0.1},
  };
  for (int i = 0; i < 8; ++i) {
    MarketObservation obs;
    obs.agent_id = "agent" + std::to_string(i + 1);
    obs.segment = "all";
    obs.region_id = "r0";
    obs.origin = {static_cast<double>(i), 0.0};
    obs.destination = {0.0, static_cast<double>(i)};
    obs.attributes = Matrix(2, 2);
    obs.attributes << rows[i][0], rows[i][1], rows[i][2], rows[i][3];
    obs.shares = Vector(2);
    obs.shares << rows[i][4], rows[i][5];
    obs.demand = 100.0;
    ds.observations.push_back(std::move(obs));
  }
  ds.validate();
  return ds;
}

inline Vector logit_shares(const Vector& utilities) {
  Vector e = (utilities.array() - utilities.maxCoeff()).exp().matrix();
  return e / e.sum();
}

struct SyntheticOptions {
  int n_agents = 200;
  int n_alts = 3;
  std::uint64_t seed = 7;
  double time_lo = 5.0, time_hi = 60.0;
  double cost_lo = 2.0, cost_hi = 30.0;
  std::vector<std::string> segments = {"all"};
  // When > 0, attributes are redrawn until the agent's largest absolute
  // log-share-ratio lands in [min_decisive_ratio, max_decisive_ratio]. Keeps
  // every market informative: near-uniform shares leave the inverse problem
  // loose around zero.
  double min_decisive_ratio = 0.0;
  double max_decisive_ratio = 6.0;
  // When > 0, additionally redraw until every other planted taste misses the
  // agent's log-ratios by at least this much on some pair, so no agent is
  // explainable by a foreign cluster.
  double cross_taste_margin = 0.0;
};

/// Exact-logit dataset from per-agent taste vectors cycled over
/// `taste_vectors`; attributes drawn uniformly. Returns the dataset and the
/// planted cluster label per agent.
inline std::pair<Dataset, std::vector<int>> forward_simulate(
    const std::vector<Vector>& taste_vectors, const SyntheticOptions& opt) {
  Dataset ds;
  ds.spec = make_time_cost_spec(opt.n_alts);
  ds.columns = {"time", "cost"};
  std::vector<int> labels;
  std::mt19937_64 rng(opt.seed);
  CompiledDesign design = compile_design(ds.spec, ds.columns);
  for (int t = 0; t < opt.n_agents; ++t) {
    int label = t % static_cast<int>(taste_vectors.size());
    labels.push_back(label);
    MarketObservation obs;
    obs.agent_id = "syn" + std::to_string(t);
    obs.segment = opt.segments[t % opt.segments.size()];
    obs.region_id = "region" + std::to_string(t % 5);
    obs.origin = {uniform01(rng) * 100.0, uniform01(rng) * 100.0};
    obs.destination = {uniform01(rng) * 100.0, uniform01(rng) * 100.0};
    obs.attributes = Matrix(opt.n_alts, 2);
    obs.shares = Vector::Zero(opt.n_alts);
    obs.demand = 50.0 + std::floor(uniform01(rng) * 100.0);
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (int j = 0; j < opt.n_alts; ++j) {
        obs.attributes(j, 0) = opt.time_lo + uniform01(rng) * (opt.time_hi - opt.time_lo);
        obs.attributes(j, 1) = opt.cost_lo + uniform01(rng) * (opt.cost_hi - opt.cost_lo);
      }
      Matrix X = design.rows(obs);
      obs.shares = logit_shares(X * taste_vectors[static_cast<std::size_t>(label)]);
      if (opt.min_decisive_ratio <= 0.0 && opt.cross_taste_margin <= 0.0) break;
      double worst = 0.0;
      for (int j = 0; j < opt.n_alts; ++j) {
        for (int k = j + 1; k < opt.n_alts; ++k) {
          worst = std::max(worst, std::abs(std::log(obs.shares[j] / obs.shares[k])));
        }
      }
      bool decisive = opt.min_decisive_ratio <= 0.0 ||
                      (worst >= opt.min_decisive_ratio && worst <= opt.max_decisive_ratio);
      bool separated = true;
      if (opt.cross_taste_margin > 0.0) {
        for (std::size_t o = 0; o < taste_vectors.size() && separated; ++o) {
          if (static_cast<int>(o) == label) continue;
          Vector v = X * taste_vectors[o];
          double miss = 0.0;
          for (int j = 0; j < opt.n_alts; ++j) {
            for (int k = j + 1; k < opt.n_alts; ++k) {
              miss = std::max(miss, std::abs((v[j] - v[k]) -
                                             std::log(obs.shares[j] / obs.shares[k])));
            }
          }
          if (miss < opt.cross_taste_margin) separated = false;
        }
      }
      if (decisive && separated) break;
    }
    ds.observations.push_back(std::move(obs));
  }
  ds.validate();
  return {std::move(ds), std::move(labels)};
}

}  // namespace glam::testing
