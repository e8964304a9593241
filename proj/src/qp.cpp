#include "glam/qp.hpp"

#include <algorithm>
#include <cmath>

namespace glam {

std::string to_string(QPStatus status) {
  switch (status) {
    case QPStatus::optimal: return "optimal";
    case QPStatus::relaxed: return "relaxed";
    case QPStatus::infeasible: return "infeasible";
  }
  return "unknown";
}

QPSubproblem build_agent_qp(const MarketObservation& obs, const CompiledDesign& design,
                            const Vector& prior, double tol) {
  if (!(tol > 0.0)) throw ValidationError("qp: tol must be positive");
  if (prior.size() != design.n_params) throw ValidationError("qp: prior length mismatch");
  QPSubproblem p;
  p.prior = prior;
  p.box = design.bounds;
  p.tol_used = tol;
  Matrix X = design.rows(obs);
  const int J = design.n_alternatives;
  for (int j = 0; j < J; ++j) {
    if (!(obs.shares[j] > 0.0)) continue;
    for (int k = j + 1; k < J; ++k) {
      if (!(obs.shares[k] > 0.0)) continue;
      QPConstraintRow row;
      row.a = (X.row(j) - X.row(k)).transpose();
      double log_ratio = std::log(obs.shares[j] / obs.shares[k]);
      row.lower = log_ratio - tol;
      row.upper = log_ratio + tol;
      row.j = j;
      row.j_prime = k;
      p.rows.push_back(std::move(row));
    }
  }
  return p;
}

namespace {

// One-sided constraint c' theta >= d with unit-norm c. `source` is the index
// of the originating two-sided row, or -1 for box constraints.
struct OneSided {
  Vector c;
  double d;
  int source;
};

constexpr double kFeasEps = 1e-10;
constexpr double kNullEps = 1e-10;   // |z| below this means c is in span(N)
constexpr double kDualEps = 1e-12;

}  // namespace

QPSolution solve_projection_qp(const QPSubproblem& problem) {
  const Eigen::Index n = problem.prior.size();
  QPSolution sol;
  sol.tol_used = problem.tol_used;

  std::vector<OneSided> cons;
  // Rows are normalized so feasibility and dual tolerances act on distances.
  auto push = [&cons](Vector c, double d, int source) {
    double norm = c.norm();
    cons.push_back({c / norm, d / norm, source});
  };
  for (std::size_t i = 0; i < problem.rows.size(); ++i) {
    const auto& row = problem.rows[i];
    if (row.lower > row.upper) throw ValidationError("qp: row with lower > upper");
    double norm = row.a.norm();
    if (norm == 0.0) {
      // 0 >= lower and 0 <= upper or the whole problem is empty.
      if (row.lower > kFeasEps || row.upper < -kFeasEps) {
        sol.status = QPStatus::infeasible;
        return sol;
      }
      continue;
    }
    if (std::isfinite(row.lower)) push(row.a, row.lower, static_cast<int>(i));
    if (std::isfinite(row.upper)) push(-row.a, -row.upper, static_cast<int>(i));
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& b = problem.box[static_cast<std::size_t>(k)];
    if (b.lower > b.upper) throw ValidationError("qp: empty box");
    if (std::isfinite(b.lower)) {
      Vector e = Vector::Zero(n);
      e[k] = 1.0;
      push(std::move(e), b.lower, -1);
    }
    if (std::isfinite(b.upper)) {
      Vector e = Vector::Zero(n);
      e[k] = -1.0;
      push(std::move(e), -b.upper, -1);
    }
  }

  Vector theta = problem.prior;
  std::vector<int> active;           // indices into cons
  std::vector<double> lambda;        // duals, aligned with active
  const int m = static_cast<int>(cons.size());

  auto violation = [&](int i) { return cons[i].d - cons[i].c.dot(theta); };

  const int max_steps = 50 * (m + static_cast<int>(n) + 2);
  int steps = 0;
  while (true) {
    // Most violated constraint not yet active.
    int p = -1;
    double worst = kFeasEps;
    for (int i = 0; i < m; ++i) {
      if (std::find(active.begin(), active.end(), i) != active.end()) continue;
      double v = violation(i);
      if (v > worst) {
        worst = v;
        p = i;
      }
    }
    if (p < 0) break;  // primal feasible: done

    double lambda_p = 0.0;
    while (true) {
      if (++steps > max_steps) {
        throw EstimationError("qp: active-set iteration limit exceeded");
      }
      const auto q = static_cast<Eigen::Index>(active.size());
      Vector z;
      Vector r;
      if (q == 0) {
        z = cons[p].c;
      } else {
        Matrix N(n, q);
        for (Eigen::Index k = 0; k < q; ++k) N.col(k) = cons[active[k]].c;
        r = (N.transpose() * N).ldlt().solve(N.transpose() * cons[p].c);
        z = cons[p].c - N * r;
      }
      const double z2 = z.squaredNorm();
      const bool have_primal_step = z2 > kNullEps * kNullEps;

      // Dual blocking step.
      double t1 = kInf;
      int blocking = -1;
      for (Eigen::Index k = 0; k < q; ++k) {
        if (r.size() > 0 && r[k] > kDualEps) {
          double step = lambda[k] / r[k];
          if (step < t1) {
            t1 = step;
            blocking = static_cast<int>(k);
          }
        }
      }
      double t2 = have_primal_step ? violation(p) / z2 : kInf;
      double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        sol.status = QPStatus::infeasible;
        return sol;
      }
      if (have_primal_step) theta += t * z;
      for (Eigen::Index k = 0; k < q; ++k) {
        if (r.size() > 0) lambda[k] -= t * r[k];
      }
      lambda_p += t;
      if (t2 <= t1) {
        active.push_back(p);
        lambda.push_back(lambda_p);
        break;
      }
      active.erase(active.begin() + blocking);
      lambda.erase(lambda.begin() + blocking);
    }
  }

  sol.theta = theta;
  sol.objective = (theta - problem.prior).squaredNorm();
  sol.status = QPStatus::optimal;

  // KKT certificate: stationarity, primal feasibility, complementary slack.
  Vector grad = theta - problem.prior;
  double comp = 0.0;
  for (std::size_t k = 0; k < active.size(); ++k) {
    const auto& con = cons[active[k]];
    grad -= lambda[k] * con.c;
    comp = std::max(comp, std::abs(lambda[k] * (con.c.dot(theta) - con.d)));
  }
  double primal = 0.0;
  for (int i = 0; i < m; ++i) primal = std::max(primal, violation(i));
  sol.kkt_residual = std::max({grad.lpNorm<Eigen::Infinity>(), comp, primal});

  for (std::size_t k = 0; k < active.size(); ++k) {
    int src = cons[active[k]].source;
    if (src >= 0 &&
        std::find(sol.active_rows.begin(), sol.active_rows.end(), src) == sol.active_rows.end()) {
      sol.active_rows.push_back(src);
    }
  }
  std::sort(sol.active_rows.begin(), sol.active_rows.end());
  return sol;
}

QPSolution relax_tolerance(const MarketObservation& obs, const CompiledDesign& design,
                           const Vector& prior, double tol, int max_doublings) {
  if (max_doublings < 0) throw ValidationError("qp: max_doublings must be >= 0");
  double current = tol;
  QPSolution last;
  for (int attempt = 0; attempt <= max_doublings; ++attempt) {
    QPSubproblem p = build_agent_qp(obs, design, prior, current);
    last = solve_projection_qp(p);
    if (last.status == QPStatus::optimal) {
      if (attempt > 0) last.status = QPStatus::relaxed;
      last.tol_used = current;
      return last;
    }
    current *= 2.0;
  }
  last.tol_used = current / 2.0;
  return last;  // status infeasible
}

}  // namespace glam
