#include "glam/estimator.hpp"

#include "glam/analysis.hpp"
#include "glam/rng.hpp"

#include "../support/test_helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

using namespace glam;

TEST_CASE("msa_update blends with the 0-based iteration counter") {
  Vector prior = Vector::Constant(2, 5.0);
  Vector y = Vector::Constant(2, 1.0);
  SUBCASE("first update replaces the prior") {
    Vector out = msa_update(prior, y, 0);
    CHECK((out - y).norm() == 0.0);
  }
  SUBCASE("second update is the midpoint") {
    Vector out = msa_update(Vector::Zero(1), Vector::Constant(1, 2.0), 1);
    CHECK(out[0] == doctest::Approx(1.0));
  }
  SUBCASE("constant target telescopes to the target") {
    Vector p = Vector::Constant(1, 9.0);
    Vector target = Vector::Constant(1, 3.0);
    for (int i = 0; i < 40; ++i) p = msa_update(p, target, i);
    // After the i=0 replacement every later blend keeps the value at target.
    CHECK(p[0] == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("negative counter is rejected") {
    CHECK_THROWS_AS(msa_update(prior, y, -1), ValidationError);
  }
}

TEST_CASE("kmeans basics") {
  SUBCASE("single cluster centroid is the arithmetic mean") {
    std::vector<Vector> pts;
    Vector sum = Vector::Zero(2);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 25; ++i) {
      Vector v(2);
      v << uniform01(rng), uniform01(rng);
      sum += v;
      pts.push_back(v);
    }
    auto km = kmeans_cluster(pts, 1, 7);
    CHECK((km.centroids[0] - sum / 25.0).norm() < 1e-12);
  }
  SUBCASE("well-separated blobs split perfectly") {
    std::vector<Vector> pts;
    std::mt19937_64 rng(8);
    for (int i = 0; i < 30; ++i) {
      Vector v(2);
      v << uniform01(rng) * 2.0 - 1.0, uniform01(rng) * 2.0 - 1.0;
      if (i % 2 == 0) v.array() += 100.0;
      pts.push_back(v);
    }
    auto km = kmeans_cluster(pts, 2, 3);
    int label_far = km.labels[0];
    for (int i = 0; i < 30; ++i) {
      CHECK(km.labels[i] == (i % 2 == 0 ? label_far : 1 - label_far));
    }
  }
  SUBCASE("identical points exercise the reseed path") {
    std::vector<Vector> pts(6, Vector::Zero(3));
    auto km = kmeans_cluster(pts, 2, 5);
    CHECK(km.centroids.size() == 2);
    // Every point still gets a valid label.
    for (int label : km.labels) CHECK((label == 0 || label == 1));
  }
  SUBCASE("more clusters than points is an error") {
    std::vector<Vector> pts(2, Vector::Zero(1));
    CHECK_THROWS_AS(kmeans_cluster(pts, 3, 1), EstimationError);
  }
}

TEST_CASE("single degenerate agent converges immediately") {
  ModelSpec spec = testing::make_time_cost_spec(2);
  Dataset ds;
  ds.spec = spec;
  ds.columns = {"time", "cost"};
  MarketObservation obs;
  obs.agent_id = "only";
  obs.segment = "s";
  obs.region_id = "r";
  obs.attributes = Matrix(2, 2);
  obs.attributes << 10, 5, 10, 5;  // identical across alternatives
  obs.shares = Vector::Constant(2, 0.5);
  obs.demand = 1;
  ds.observations.push_back(obs);
  ds.validate();

  EstimatorConfig cfg;
  cfg.clusters = 1;
  cfg.seed = 3;
  auto result = estimate_glam(ds, cfg);
  CHECK(result.converged);
  CHECK(result.iterations_run <= 2);
  CHECK(result.agents[0].theta.norm() == 0.0);
  CHECK(result.agents[0].status == QPStatus::optimal);
}

TEST_CASE("two planted tastes are recovered with full purity") {
  Vector taste_a(2), taste_b(2);
  taste_a << -0.15, -0.01;
  taste_b << -0.01, -0.25;
  testing::SyntheticOptions opt;
  opt.n_agents = 200;
  opt.seed = 17;
  opt.min_decisive_ratio = 3.0;
  opt.cross_taste_margin = 1.5;
  auto [ds, labels] = testing::forward_simulate({taste_a, taste_b}, opt);

  EstimatorConfig cfg;
  cfg.clusters = 2;
  cfg.tol = 0.5;
  cfg.seed = 11;
  auto result = estimate_glam(ds, cfg);
  CHECK(result.converged);
  CHECK(result.iterations_run <= 30);

  // Match estimated clusters to planted tastes by nearest mean.
  const Vector planted[2] = {taste_a, taste_b};
  int map_a = (result.cluster_means[0] - taste_a).norm() <
                      (result.cluster_means[1] - taste_a).norm()
                  ? 0
                  : 1;
  int map_b = 1 - map_a;
  CHECK((result.cluster_means[map_a] - taste_a).lpNorm<Eigen::Infinity>() < 0.05);
  CHECK((result.cluster_means[map_b] - taste_b).lpNorm<Eigen::Infinity>() < 0.05);
  int mismatches = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    int want = labels[t] == 0 ? map_a : map_b;
    if (result.agents[t].cluster != want) ++mismatches;
  }
  CHECK(mismatches == 0);
  (void)planted;
}

TEST_CASE("final thetas honor their own constraint bands") {
  Vector taste(2);
  taste << -0.08, -0.1;
  testing::SyntheticOptions opt;
  opt.n_agents = 40;
  auto [ds, labels] = testing::forward_simulate({taste}, opt);
  (void)labels;
  EstimatorConfig cfg;
  cfg.clusters = 1;
  cfg.tol = 0.4;
  cfg.seed = 2;
  auto result = estimate_glam(ds, cfg);
  CompiledDesign design = compile_design(ds.spec, ds.columns);
  for (std::size_t t = 0; t < ds.observations.size(); ++t) {
    const auto& ap = result.agents[t];
    REQUIRE(ap.status != QPStatus::infeasible);
    Matrix X = design.rows(ds.observations[t]);
    const auto& s = ds.observations[t].shares;
    for (int j = 0; j < X.rows(); ++j) {
      for (int k = j + 1; k < X.rows(); ++k) {
        if (!(s[j] > 0 && s[k] > 0)) continue;
        double lhs = (X.row(j) - X.row(k)).dot(ap.theta);
        double target = std::log(s[j] / s[k]);
        CHECK(std::abs(lhs - target) <= ap.tol_used + 1e-8);
      }
    }
  }
}

TEST_CASE("estimation is bitwise deterministic across thread counts") {
  Vector taste_a(2), taste_b(2);
  taste_a << -0.2, -0.02;
  taste_b << -0.02, -0.3;
  testing::SyntheticOptions opt;
  opt.n_agents = 60;
  auto [ds, labels] = testing::forward_simulate({taste_a, taste_b}, opt);
  (void)labels;
  EstimatorConfig cfg;
  cfg.clusters = 2;
  cfg.seed = 123;
  cfg.threads = 1;
  auto serial = estimate_glam(ds, cfg);
  cfg.threads = 4;
  auto parallel = estimate_glam(ds, cfg);
  REQUIRE(serial.agents.size() == parallel.agents.size());
  CHECK(serial.iterations_run == parallel.iterations_run);
  for (std::size_t t = 0; t < serial.agents.size(); ++t) {
    REQUIRE(serial.agents[t].theta.size() == parallel.agents[t].theta.size());
    for (Eigen::Index k = 0; k < serial.agents[t].theta.size(); ++k) {
      CHECK(serial.agents[t].theta[k] == parallel.agents[t].theta[k]);  // bitwise
    }
    CHECK(serial.agents[t].cluster == parallel.agents[t].cluster);
  }
  for (int m = 0; m < 2; ++m) {
    for (Eigen::Index k = 0; k < serial.priors[m].size(); ++k) {
      CHECK(serial.priors[m][k] == parallel.priors[m][k]);
    }
  }
}

TEST_CASE("estimator input validation") {
  Dataset ds = testing::make_illustrative_dataset();
  EstimatorConfig cfg;
  SUBCASE("more clusters than agents") {
    cfg.clusters = 9;
    CHECK_THROWS_AS(estimate_glam(ds, cfg), EstimationError);
  }
  SUBCASE("zero tolerance") {
    cfg.tol = 0.0;
    CHECK_THROWS_AS(estimate_glam(ds, cfg), ValidationError);
  }
  SUBCASE("all agents infeasible") {
    // Bounds pin every parameter to zero, but shares demand a nonzero fit:
    // every sample agent's |log ratio| exceeds the 0.3 band.
    Dataset pinned = ds;
    for (auto& b : pinned.spec.bounds) b = {0.0, 0.0};
    cfg.clusters = 1;
    cfg.tol = 0.3;
    cfg.max_tol_doublings = 0;
    CHECK_THROWS_WITH_AS(estimate_glam(pinned, cfg), doctest::Contains("infeasible"),
                         EstimationError);
  }
}

TEST_CASE("every agent lands in exactly one cluster") {
  Vector t1(2), t2(2), t3(2);
  t1 << -0.1, -0.01;
  t2 << -0.01, -0.2;
  t3 << 0.05, 0.05;
  testing::SyntheticOptions opt;
  opt.n_agents = 90;
  auto [ds, labels] = testing::forward_simulate({t1, t2, t3}, opt);
  (void)labels;
  EstimatorConfig cfg;
  cfg.clusters = 3;
  cfg.seed = 5;
  auto result = estimate_glam(ds, cfg);
  std::vector<int> counts(3, 0);
  for (const auto& ap : result.agents) {
    REQUIRE(ap.cluster >= 0);
    REQUIRE(ap.cluster < 3);
    counts[ap.cluster] += 1;
  }
  CHECK(counts[0] + counts[1] + counts[2] == 90);
}

TEST_CASE("infeasible agents are flagged and excluded from cluster means") {
  // One agent's log-ratio is far beyond what the pinned parameter can reach;
  // the rest are ordinary.
  ModelSpec spec;
  spec.parameter_names = {"beta"};
  spec.bounds = {{-0.1, 0.1}};
  spec.alternatives = {"a", "b"};
  spec.design = {{{"beta", "x"}}, {}};
  Dataset ds;
  ds.spec = spec;
  ds.columns = {"x"};
  auto add_agent = [&ds](const std::string& id, double x, double log_ratio) {
    MarketObservation obs;
    obs.agent_id = id;
    obs.segment = "s";
    obs.region_id = "r";
    obs.attributes = Matrix(2, 1);
    obs.attributes << x, 0.0;
    double ratio = std::exp(log_ratio);
    obs.shares = Vector(2);
    obs.shares << ratio / (1.0 + ratio), 1.0 / (1.0 + ratio);
    obs.demand = 1.0;
    ds.observations.push_back(std::move(obs));
  };
  add_agent("ok1", 1.0, 0.05);
  add_agent("ok2", 1.0, -0.02);
  add_agent("stuck", 1.0, 6.0);  // needs beta = 6 >> ub at any relaxed tol
  ds.validate();

  EstimatorConfig cfg;
  cfg.clusters = 1;
  cfg.tol = 0.1;
  cfg.max_tol_doublings = 2;
  cfg.seed = 1;
  auto result = estimate_glam(ds, cfg);
  CHECK(result.agents[0].status == QPStatus::optimal);
  CHECK(result.agents[1].status == QPStatus::optimal);
  CHECK(result.agents[2].status == QPStatus::infeasible);
  CHECK(result.trace.back().infeasible_agents == 1);
  // The cluster mean is built from the two feasible agents only.
  double expect = (result.agents[0].theta[0] + result.agents[1].theta[0]) / 2.0;
  CHECK(result.cluster_means[0][0] == doctest::Approx(expect));
}

TEST_CASE("bootstrap standard errors") {
  SUBCASE("zero-variance dataset gives near-zero SEs") {
    // Identical agents: every resample estimates the same parameters.
    Vector taste(2);
    taste << -0.1, -0.05;
    testing::SyntheticOptions opt;
    opt.n_agents = 20;
    auto [proto, labels] = testing::forward_simulate({taste}, opt);
    (void)labels;
    Dataset ds;
    ds.spec = proto.spec;
    ds.columns = proto.columns;
    for (int i = 0; i < 20; ++i) {
      auto obs = proto.observations[0];
      obs.agent_id = "clone" + std::to_string(i);
      ds.observations.push_back(std::move(obs));
    }
    EstimatorConfig cfg;
    cfg.clusters = 1;
    cfg.seed = 6;
    cfg.bootstrap_resamples = 8;
    auto bs = bootstrap_standard_errors(ds, cfg);
    CHECK(bs.resamples_used == 8);
    CHECK(bs.se[0].lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SUBCASE("a single resample is rejected") {
    Dataset ds = testing::make_illustrative_dataset();
    EstimatorConfig cfg;
    cfg.bootstrap_resamples = 1;
    CHECK_THROWS_AS(bootstrap_standard_errors(ds, cfg), ValidationError);
  }
  SUBCASE("finite SEs on the illustrative sample inside a minute") {
    auto start = std::chrono::steady_clock::now();
    Dataset ds = testing::make_illustrative_dataset();
    EstimatorConfig cfg;
    cfg.clusters = 3;
    cfg.seed = 1;
    cfg.bootstrap_resamples = 30;
    auto bs = bootstrap_standard_errors(ds, cfg);
    CHECK(bs.resamples_used + bs.resamples_failed == 30);
    for (const auto& se : bs.se) {
      CHECK(se.allFinite());
    }
    double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(elapsed < 60.0);
  }
}

TEST_CASE("illustrative run converges quickly with damped prior changes") {
  // Pinned configuration shared with the acceptance suite: source units,
  // default tolerance, M = 3.
  Dataset ds = testing::make_illustrative_dataset();
  EstimatorConfig cfg;
  cfg.clusters = 3;
  cfg.tol = 0.5;
  cfg.seed = 0;
  auto result = estimate_glam(ds, cfg);
  CHECK(result.converged);
  CHECK(result.iterations_run <= 30);
  REQUIRE(result.trace.size() >= 4);
  for (std::size_t i = 4; i < result.trace.size(); ++i) {
    CHECK(result.trace[i].max_prior_change <= result.trace[i - 1].max_prior_change + 1e-9);
  }
  // No agent is infeasible on this sample at the default tolerance.
  for (const auto& ap : result.agents) CHECK(ap.status != QPStatus::infeasible);
}

TEST_CASE("trace exposes MSA damping") {
  Vector taste_a(2), taste_b(2);
  taste_a << -0.12, -0.01;
  taste_b << -0.02, -0.22;
  testing::SyntheticOptions opt;
  opt.n_agents = 50;
  auto [ds, labels] = testing::forward_simulate({taste_a, taste_b}, opt);
  (void)labels;
  EstimatorConfig cfg;
  cfg.clusters = 2;
  cfg.seed = 77;
  auto result = estimate_glam(ds, cfg);
  REQUIRE(result.trace.size() >= 4);
  for (std::size_t i = 4; i < result.trace.size(); ++i) {
    CHECK(result.trace[i].max_prior_change <=
          result.trace[i - 1].max_prior_change + 1e-9);
  }
}
