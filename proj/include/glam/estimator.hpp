#pragma once

#include "glam/data_model.hpp"
#include "glam/qp.hpp"
#include "glam/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace glam {

struct EstimatorConfig {
  int clusters = 1;                      // M
  double tol = 0.5;
  int max_iterations = 50;
  double convergence_threshold = 0.005;  // relative prior change
  std::uint64_t seed = 0;
  int max_tol_doublings = 3;
  int bootstrap_resamples = 0;           // 0 = off
  int threads = 0;                       // 0 = all cores
};

struct AgentParameters {
  Vector theta;          // empty if the agent never produced a feasible solve
  int cluster = 0;
  QPStatus status = QPStatus::infeasible;
  double tol_used = 0.0;
  double objective = 0.0;
};

struct IterationRecord {
  std::vector<Vector> priors;       // after the MSA update of this iteration
  std::vector<int> cluster_sizes;   // feasible members per cluster
  double mean_objective = 0.0;
  double max_prior_change = 0.0;
  int infeasible_agents = 0;
};

struct EstimationResult {
  std::vector<Vector> priors;          // final fixed-point priors, M entries
  std::vector<Vector> cluster_means;   // plain means of final member thetas
  std::vector<AgentParameters> agents; // aligned with dataset observations
  std::vector<IterationRecord> trace;
  bool converged = false;
  int iterations_run = 0;
  double tol = 0.0;
  int clusters = 0;
  std::optional<std::vector<Vector>> bootstrap_se;  // per cluster, per parameter
};

struct KMeansResult {
  std::vector<int> labels;
  std::vector<Vector> centroids;
};

/// Lloyd iterations with k-means++ seeding; empty clusters are reseeded with
/// the point farthest from its assigned centroid. Deterministic given seed.
/// When `warm_start` centroids are supplied they replace the k-means++
/// seeding, which keeps partitions stable across estimator iterations.
KMeansResult kmeans_cluster(const std::vector<Vector>& points, int clusters,
                            std::uint64_t seed,
                            const std::vector<Vector>* warm_start = nullptr);

/// One MSA blend: i/(i+1) * prior + 1/(i+1) * y, with i the 0-based iteration
/// counter (the first update replaces the prior entirely).
Vector msa_update(const Vector& prior, const Vector& y, int iteration);

/// Fixed-point estimation: per-agent projection QPs against cluster priors,
/// k-means reclassification, per-cluster means and MSA prior updates until
/// the priors stabilize. Deterministic given (dataset, config).
EstimationResult estimate_glam(const Dataset& ds, const EstimatorConfig& cfg);

/// Resamples agents with replacement, re-runs the full pipeline per resample
/// (the `prepare` hook re-applies any first-stage regression), and reports
/// the standard deviation of cluster means matched to the base result by
/// nearest centroid. Resamples that fail to estimate are skipped; more than
/// half failing is an error.
struct BootstrapResult {
  std::vector<Vector> se;  // per cluster, per parameter
  int resamples_used = 0;
  int resamples_failed = 0;
};

BootstrapResult bootstrap_standard_errors(
    const Dataset& ds, const EstimatorConfig& cfg,
    const std::function<Dataset(const Dataset&)>& prepare = {});

}  // namespace glam
