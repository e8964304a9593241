#pragma once

#include "glam/data_model.hpp"
#include "glam/types.hpp"

#include <string>
#include <vector>

namespace glam {

/// One two-sided row: lower <= a' theta <= upper, built from a pair of
/// alternatives with positive observed shares.
struct QPConstraintRow {
  Vector a;
  double lower = -kInf;
  double upper = kInf;
  int j = -1;        // pair members (alternative indices)
  int j_prime = -1;
};

/// Euclidean projection of a prior onto the polyhedron spanned by the
/// log-share-ratio rows and the parameter box.
struct QPSubproblem {
  Vector prior;
  std::vector<QPConstraintRow> rows;
  std::vector<Bounds> box;
  double tol_used = 0.0;
};

enum class QPStatus { optimal, relaxed, infeasible };

std::string to_string(QPStatus status);

struct QPSolution {
  Vector theta;
  double objective = 0.0;       // ||theta - prior||^2
  double kkt_residual = kInf;
  std::vector<int> active_rows;  // indices into QPSubproblem::rows
  QPStatus status = QPStatus::infeasible;
  double tol_used = 0.0;
};

/// Builds the per-agent subproblem: one row per unordered pair of
/// alternatives with strictly positive shares (a = X_j - X_j', band
/// ln(s_j/s_j') -/+ tol), plus the spec's box. Agents with fewer than two
/// positive-share alternatives get zero rows and degenerate to a box
/// projection.
QPSubproblem build_agent_qp(const MarketObservation& obs, const CompiledDesign& design,
                            const Vector& prior, double tol);

/// Dual active-set projection (identity Hessian). Returns the unique
/// minimizer with a KKT certificate, or status infeasible; never a silent
/// answer.
QPSolution solve_projection_qp(const QPSubproblem& problem);

/// Solves at `tol`, doubling the tolerance up to `max_doublings` times on
/// infeasibility. A solution obtained after relaxation carries status
/// `relaxed` and records the tolerance actually used.
QPSolution relax_tolerance(const MarketObservation& obs, const CompiledDesign& design,
                           const Vector& prior, double tol, int max_doublings);

}  // namespace glam
