#include "glam/estimator.hpp"

#include "glam/parallel.hpp"
#include "glam/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace glam {

namespace {

int nearest_centroid(const Vector& x, const std::vector<Vector>& centroids) {
  int best = 0;
  double best_d = kInf;
  for (std::size_t m = 0; m < centroids.size(); ++m) {
    double d = (x - centroids[m]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(m);
    }
  }
  return best;
}

// Greedy global-minimum pairing of new centroids to reference vectors, so
// cluster labels stay comparable across iterations and resamples.
std::vector<int> align_labels(const std::vector<Vector>& centroids,
                              const std::vector<Vector>& reference) {
  const int M = static_cast<int>(centroids.size());
  std::vector<int> mapping(M, -1);  // mapping[new] = reference slot
  std::vector<bool> used_new(M, false), used_ref(M, false);
  for (int step = 0; step < M; ++step) {
    double best_d = kInf;
    int best_new = -1, best_ref = -1;
    for (int i = 0; i < M; ++i) {
      if (used_new[i]) continue;
      for (int j = 0; j < M; ++j) {
        if (used_ref[j]) continue;
        double d = (centroids[i] - reference[j]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best_new = i;
          best_ref = j;
        }
      }
    }
    mapping[best_new] = best_ref;
    used_new[best_new] = true;
    used_ref[best_ref] = true;
  }
  return mapping;
}

// Componentwise relative change with a floor at 2% of the vector scale:
// components that are negligible relative to the prior as a whole are
// measured against that floor instead of their own magnitude, otherwise a
// parameter pinned near zero would stall the stopping rule forever.
double relative_change(const Vector& old_prior, const Vector& new_prior) {
  double scale = std::max(old_prior.lpNorm<Eigen::Infinity>(),
                          new_prior.lpNorm<Eigen::Infinity>());
  double change = 0.0;
  for (Eigen::Index k = 0; k < old_prior.size(); ++k) {
    double denom = std::max({std::abs(old_prior[k]), 0.02 * scale, 1e-12});
    change = std::max(change, std::abs(new_prior[k] - old_prior[k]) / denom);
  }
  return change;
}

}  // namespace

KMeansResult kmeans_cluster(const std::vector<Vector>& points, int clusters,
                            std::uint64_t seed, const std::vector<Vector>* warm_start) {
  const int n = static_cast<int>(points.size());
  if (clusters < 1) throw ValidationError("kmeans: clusters must be >= 1");
  if (n < clusters) {
    throw EstimationError("kmeans: " + std::to_string(clusters) + " clusters but only " +
                          std::to_string(n) + " points");
  }
  std::mt19937_64 rng(seed);
  std::vector<Vector> centroids;
  centroids.reserve(clusters);

  if (warm_start && static_cast<int>(warm_start->size()) == clusters) {
    centroids = *warm_start;
  } else {
    // k-means++ seeding.
    centroids.push_back(points[uniform_index(rng, points.size())]);
    std::vector<double> dist2(points.size(), 0.0);
    while (static_cast<int>(centroids.size()) < clusters) {
      double total = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        double d = kInf;
        for (const auto& c : centroids) d = std::min(d, (points[i] - c).squaredNorm());
        dist2[i] = d;
        total += d;
      }
      std::size_t pick = 0;
      if (total > 0.0) {
        double target = uniform01(rng) * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          acc += dist2[i];
          if (acc >= target) {
            pick = i;
            break;
          }
          pick = i;
        }
      } else {
        pick = uniform_index(rng, points.size());
      }
      centroids.push_back(points[pick]);
    }
  }

  KMeansResult result;
  result.labels.assign(points.size(), 0);
  const int max_lloyd = 100;
  for (int round = 0; round < max_lloyd; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int label = nearest_centroid(points[i], centroids);
      if (label != result.labels[i]) {
        result.labels[i] = label;
        changed = true;
      }
    }
    std::vector<Vector> sums(clusters, Vector::Zero(points.front().size()));
    std::vector<int> counts(clusters, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[result.labels[i]] += points[i];
      counts[result.labels[i]] += 1;
    }
    for (int m = 0; m < clusters; ++m) {
      if (counts[m] > 0) {
        centroids[m] = sums[m] / counts[m];
      } else {
        // Reseed an empty cluster with the point farthest from its centroid.
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          double d = (points[i] - centroids[result.labels[i]]).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centroids[m] = points[far];
        result.labels[far] = m;
        changed = true;
      }
    }
    if (!changed && round > 0) break;
  }
  result.centroids = std::move(centroids);
  return result;
}

Vector msa_update(const Vector& prior, const Vector& y, int iteration) {
  if (iteration < 0) throw ValidationError("msa: iteration must be >= 0");
  double i = static_cast<double>(iteration);
  return (i / (i + 1.0)) * prior + (1.0 / (i + 1.0)) * y;
}

EstimationResult estimate_glam(const Dataset& ds, const EstimatorConfig& cfg) {
  if (cfg.clusters < 1) throw ValidationError("estimator: clusters must be >= 1");
  if (!(cfg.tol > 0.0)) throw ValidationError("estimator: tol must be positive");
  if (!(cfg.convergence_threshold > 0.0)) {
    throw ValidationError("estimator: convergence threshold must be positive");
  }
  if (ds.observations.empty()) throw EstimationError("estimator: empty dataset");

  const int M = cfg.clusters;
  const auto n_agents = ds.observations.size();
  const int K = static_cast<int>(ds.spec.parameter_names.size());
  CompiledDesign design = compile_design(ds.spec, ds.columns);

  EstimationResult result;
  result.tol = cfg.tol;
  result.clusters = M;
  result.priors.assign(M, Vector::Zero(K));

  std::mt19937_64 assign_rng(mix_seed(cfg.seed, 0));
  std::vector<int> assignment(n_agents);
  for (auto& a : assignment) a = static_cast<int>(uniform_index(assign_rng, M));

  std::vector<QPSolution> solves(n_agents);
  std::vector<Vector> last_feasible(n_agents);

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    // Step 2: per-agent projection onto its own constraint set, from the
    // prior of the agent's current cluster. Embarrassingly parallel; every
    // reduction below walks agents in index order so results do not depend
    // on the worker count.
    parallel_for(n_agents, cfg.threads, [&](std::size_t t) {
      solves[t] = relax_tolerance(ds.observations[t], design, result.priors[assignment[t]],
                                  cfg.tol, cfg.max_tol_doublings);
    });

    std::vector<std::size_t> feasible;
    for (std::size_t t = 0; t < n_agents; ++t) {
      if (solves[t].status != QPStatus::infeasible) {
        feasible.push_back(t);
        last_feasible[t] = solves[t].theta;
      }
    }
    if (feasible.empty()) {
      throw EstimationError("estimator: all agents infeasible at tol " +
                            std::to_string(cfg.tol));
    }
    if (static_cast<int>(feasible.size()) < M) {
      throw EstimationError("estimator: fewer feasible agents (" +
                            std::to_string(feasible.size()) + ") than clusters (" +
                            std::to_string(M) + ")");
    }

    // Step 3: k-means on the feasible thetas, labels aligned to the current
    // priors so the MSA blend compares like with like. After the first
    // iteration Lloyd is warm-started from the current priors: reseeding
    // every round would hop between local optima and churn the assignments.
    std::vector<Vector> points;
    points.reserve(feasible.size());
    for (auto t : feasible) points.push_back(solves[t].theta);
    KMeansResult km = kmeans_cluster(points, M, mix_seed(cfg.seed, 1 + iter),
                                     iter == 0 ? nullptr : &result.priors);
    std::vector<int> mapping = align_labels(km.centroids, result.priors);
    for (std::size_t i = 0; i < feasible.size(); ++i) {
      assignment[feasible[i]] = mapping[km.labels[i]];
    }

    // Step 4: per-cluster means over feasible members.
    std::vector<Vector> y(M, Vector::Zero(K));
    std::vector<int> sizes(M, 0);
    for (auto t : feasible) {
      y[assignment[t]] += solves[t].theta;
      sizes[assignment[t]] += 1;
    }
    for (int m = 0; m < M; ++m) {
      if (sizes[m] > 0) {
        y[m] /= sizes[m];
      } else {
        y[m] = result.priors[m];  // keep an empty cluster's prior in place
      }
    }

    // Step 5: MSA blend.
    double max_change = 0.0;
    std::vector<Vector> new_priors(M);
    for (int m = 0; m < M; ++m) {
      new_priors[m] = msa_update(result.priors[m], y[m], iter);
      max_change = std::max(max_change, relative_change(result.priors[m], new_priors[m]));
    }
    result.priors = std::move(new_priors);

    IterationRecord rec;
    rec.priors = result.priors;
    rec.cluster_sizes = sizes;
    rec.infeasible_agents = static_cast<int>(n_agents - feasible.size());
    double obj = 0.0;
    for (auto t : feasible) obj += solves[t].objective;
    rec.mean_objective = obj / static_cast<double>(feasible.size());
    rec.max_prior_change = max_change;
    result.trace.push_back(std::move(rec));
    result.iterations_run = iter + 1;

    // Step 6: stop once all priors have stabilized.
    if (max_change < cfg.convergence_threshold) {
      result.converged = true;
      break;
    }
  }

  result.agents.resize(n_agents);
  std::vector<Vector> sums(M, Vector::Zero(K));
  std::vector<int> counts(M, 0);
  for (std::size_t t = 0; t < n_agents; ++t) {
    AgentParameters& ap = result.agents[t];
    ap.cluster = assignment[t];
    ap.status = solves[t].status;
    ap.tol_used = solves[t].tol_used;
    ap.objective = solves[t].objective;
    if (solves[t].status != QPStatus::infeasible) {
      ap.theta = solves[t].theta;
      sums[ap.cluster] += ap.theta;
      counts[ap.cluster] += 1;
    } else if (last_feasible[t].size() > 0) {
      ap.theta = last_feasible[t];  // flagged infeasible, last feasible kept
    }
  }
  result.cluster_means.assign(M, Vector::Zero(K));
  for (int m = 0; m < M; ++m) {
    result.cluster_means[m] = counts[m] > 0 ? Vector(sums[m] / counts[m]) : result.priors[m];
  }
  if (cfg.bootstrap_resamples > 0) {
    result.bootstrap_se = bootstrap_standard_errors(ds, cfg).se;
  }
  return result;
}

BootstrapResult bootstrap_standard_errors(
    const Dataset& ds, const EstimatorConfig& cfg,
    const std::function<Dataset(const Dataset&)>& prepare) {
  if (cfg.bootstrap_resamples < 2) {
    throw ValidationError("bootstrap: need at least 2 resamples");
  }
  EstimatorConfig base_cfg = cfg;
  base_cfg.bootstrap_resamples = 0;
  EstimationResult base = estimate_glam(prepare ? prepare(ds) : ds, base_cfg);

  const int M = cfg.clusters;
  const int K = static_cast<int>(ds.spec.parameter_names.size());
  std::vector<std::vector<Vector>> draws(M);

  BootstrapResult out;
  for (int r = 0; r < cfg.bootstrap_resamples; ++r) {
    std::mt19937_64 rng(mix_seed(cfg.seed, 10'000 + r));
    Dataset resample;
    resample.spec = ds.spec;
    resample.columns = ds.columns;
    for (std::size_t i = 0; i < ds.observations.size(); ++i) {
      auto obs = ds.observations[uniform_index(rng, ds.observations.size())];
      obs.agent_id += "#" + std::to_string(i);  // keep agent ids unique
      resample.observations.push_back(std::move(obs));
    }
    try {
      if (prepare) resample = prepare(resample);
      EstimatorConfig rcfg = base_cfg;
      rcfg.seed = mix_seed(cfg.seed, 20'000 + r);
      EstimationResult res = estimate_glam(resample, rcfg);
      std::vector<int> mapping = align_labels(res.cluster_means, base.cluster_means);
      for (int m = 0; m < M; ++m) draws[mapping[m]].push_back(res.cluster_means[m]);
      out.resamples_used += 1;
    } catch (const Error&) {
      out.resamples_failed += 1;
    }
  }
  if (out.resamples_used < (cfg.bootstrap_resamples + 1) / 2) {
    throw EstimationError("bootstrap: more than half of the resamples failed (" +
                          std::to_string(out.resamples_failed) + " of " +
                          std::to_string(cfg.bootstrap_resamples) + ")");
  }
  out.se.assign(M, Vector::Zero(K));
  for (int m = 0; m < M; ++m) {
    const auto& d = draws[m];
    if (d.size() < 2) continue;
    Vector mean = Vector::Zero(K);
    for (const auto& v : d) mean += v;
    mean /= static_cast<double>(d.size());
    Vector var = Vector::Zero(K);
    for (const auto& v : d) var += (v - mean).cwiseProduct(v - mean);
    var /= static_cast<double>(d.size() - 1);
    out.se[m] = var.cwiseSqrt();
  }
  return out;
}

}  // namespace glam
