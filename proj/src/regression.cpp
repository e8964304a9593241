#include "glam/regression.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace glam {

namespace {

Matrix with_intercept(const Matrix& X, bool intercept) {
  if (!intercept) return X;
  Matrix Xi(X.rows(), X.cols() + 1);
  Xi.col(0).setOnes();
  Xi.rightCols(X.cols()) = X;
  return Xi;
}

std::vector<std::string> default_names(Eigen::Index n, const std::string& prefix) {
  std::vector<std::string> names;
  for (Eigen::Index i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

std::vector<std::string> with_intercept_name(std::vector<std::string> names, bool intercept) {
  if (intercept) names.insert(names.begin(), "(intercept)");
  return names;
}

void check_rank(const Eigen::ColPivHouseholderQR<Matrix>& qr,
                const std::vector<std::string>& names) {
  const auto cols = qr.cols();
  if (qr.rank() == cols) return;
  // The trailing permuted columns are the ones expressible through the others.
  std::ostringstream msg;
  msg << "rank-deficient design; dependent columns:";
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index i = qr.rank(); i < cols; ++i) {
    msg << ' ' << names[static_cast<std::size_t>(perm[i])];
  }
  throw EstimationError(msg.str());
}

}  // namespace

LinearModelFit ols_fit(const Vector& y, const Matrix& X, bool intercept,
                       const std::vector<std::string>& names) {
  if (X.rows() != y.size()) throw ValidationError("ols: row count mismatch");
  Matrix Xd = with_intercept(X, intercept);
  auto col_names = with_intercept_name(
      names.empty() ? default_names(X.cols(), "x") : names, intercept);
  if (Xd.rows() <= Xd.cols()) {
    throw ValidationError("ols: need more observations than columns");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(Xd);
  check_rank(qr, col_names);
  Vector beta = qr.solve(y);
  Vector resid = y - Xd * beta;
  const double n = static_cast<double>(Xd.rows());
  const double k = static_cast<double>(Xd.cols());
  double rss = resid.squaredNorm();
  double sigma2 = rss / (n - k);
  Matrix xtx_inv = (Xd.transpose() * Xd).ldlt().solve(Matrix::Identity(Xd.cols(), Xd.cols()));
  LinearModelFit fit;
  fit.coefficients = beta;
  fit.standard_errors = (sigma2 * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
  fit.residuals = resid;
  fit.n_obs = static_cast<int>(Xd.rows());
  fit.column_names = std::move(col_names);
  double tss = intercept ? (y.array() - y.mean()).square().sum() : y.squaredNorm();
  fit.r_squared = tss > 0 ? 1.0 - rss / tss : 0.0;
  return fit;
}

LinearModelFit tsls_fit(const Vector& y, const Matrix& X_exog, const Matrix& X_endog,
                        const Matrix& instruments, bool intercept,
                        const std::vector<std::string>& exog_names,
                        const std::vector<std::string>& endog_names,
                        const std::vector<std::string>& instrument_names) {
  if (X_endog.cols() == 0) {
    return ols_fit(y, X_exog, intercept, exog_names);
  }
  if (instruments.cols() < X_endog.cols()) {
    throw EstimationError("tsls: under-identified (" + std::to_string(instruments.cols()) +
                          " instruments for " + std::to_string(X_endog.cols()) +
                          " endogenous columns)");
  }
  if (X_exog.rows() != y.size() || X_endog.rows() != y.size() ||
      instruments.rows() != y.size()) {
    throw ValidationError("tsls: row count mismatch");
  }
  auto exn = exog_names.empty() ? default_names(X_exog.cols(), "exog") : exog_names;
  auto enn = endog_names.empty() ? default_names(X_endog.cols(), "endog") : endog_names;
  auto ivn = instrument_names.empty() ? default_names(instruments.cols(), "iv")
                                      : instrument_names;

  // First stage: project each endogenous column on [exog, instruments].
  Matrix Z(y.size(), X_exog.cols() + instruments.cols());
  Z.leftCols(X_exog.cols()) = X_exog;
  Z.rightCols(instruments.cols()) = instruments;
  Matrix Zd = with_intercept(Z, intercept);
  std::vector<std::string> z_names = exn;
  z_names.insert(z_names.end(), ivn.begin(), ivn.end());
  z_names = with_intercept_name(std::move(z_names), intercept);
  Eigen::ColPivHouseholderQR<Matrix> zqr(Zd);
  check_rank(zqr, z_names);
  Matrix fitted(y.size(), X_endog.cols());
  for (Eigen::Index c = 0; c < X_endog.cols(); ++c) {
    fitted.col(c) = Zd * zqr.solve(X_endog.col(c));
  }

  // Second stage on [exog, fitted endogenous].
  Matrix X2(y.size(), X_exog.cols() + X_endog.cols());
  X2.leftCols(X_exog.cols()) = X_exog;
  X2.rightCols(X_endog.cols()) = fitted;
  Matrix X2d = with_intercept(X2, intercept);
  std::vector<std::string> names2 = exn;
  names2.insert(names2.end(), enn.begin(), enn.end());
  names2 = with_intercept_name(std::move(names2), intercept);
  if (X2d.rows() <= X2d.cols()) {
    throw ValidationError("tsls: need more observations than columns");
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(X2d);
  check_rank(qr, names2);
  Vector beta = qr.solve(y);

  // Structural residuals at the original endogenous values.
  Matrix Xorig(y.size(), X_exog.cols() + X_endog.cols());
  Xorig.leftCols(X_exog.cols()) = X_exog;
  Xorig.rightCols(X_endog.cols()) = X_endog;
  Matrix Xorigd = with_intercept(Xorig, intercept);
  Vector resid = y - Xorigd * beta;

  const double n = static_cast<double>(X2d.rows());
  const double k = static_cast<double>(X2d.cols());
  double sigma2 = resid.squaredNorm() / (n - k);
  Matrix xtx_inv =
      (X2d.transpose() * X2d).ldlt().solve(Matrix::Identity(X2d.cols(), X2d.cols()));

  LinearModelFit fit;
  fit.coefficients = beta;
  fit.standard_errors = (sigma2 * xtx_inv.diagonal()).cwiseMax(0.0).cwiseSqrt();
  fit.residuals = resid;
  fit.n_obs = static_cast<int>(n);
  fit.column_names = std::move(names2);
  fit.used_instruments = ivn;
  double tss = intercept ? (y.array() - y.mean()).square().sum() : y.squaredNorm();
  fit.r_squared = tss > 0 ? 1.0 - resid.squaredNorm() / tss : 0.0;
  return fit;
}

int GroupingScheme::group_of(std::size_t dim, const std::string& alt) const {
  const auto& groups = dimensions[dim].groups;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (std::find(groups[g].begin(), groups[g].end(), alt) != groups[g].end()) {
      return static_cast<int>(g);
    }
  }
  return -1;
}

InstrumentMatrix build_differentiation_instruments(const Dataset& ds,
                                                   const GroupingScheme& groups,
                                                   const std::vector<std::string>& columns) {
  const int n_alts = static_cast<int>(ds.spec.alternatives.size());
  std::vector<int> col_idx;
  for (const auto& col : columns) {
    int c = ds.column_index(col);
    if (c < 0) throw ValidationError("instrument column " + col + " not in dataset");
    col_idx.push_back(c);
  }
  for (const auto& dim : groups.dimensions) {
    for (const auto& group : dim.groups) {
      for (const auto& alt : group) {
        if (ds.spec.alternative_index(alt) < 0) {
          throw ValidationError("instrument group in dimension " + dim.name +
                                " references unknown alternative " + alt);
        }
      }
    }
  }

  InstrumentMatrix out;
  for (const auto& dim : groups.dimensions) {
    for (const auto& col : columns) out.names.push_back("iv_" + dim.name + "_" + col);
  }
  out.values = Matrix::Zero(static_cast<Eigen::Index>(ds.observations.size()) * n_alts,
                            static_cast<Eigen::Index>(out.names.size()));

  std::vector<bool> singleton_warned(groups.dimensions.size(), false);
  for (std::size_t t = 0; t < ds.observations.size(); ++t) {
    const auto& obs = ds.observations[t];
    for (int j = 0; j < n_alts; ++j) {
      Eigen::Index r = out.row(t, j, n_alts);
      Eigen::Index cursor = 0;
      for (std::size_t d = 0; d < groups.dimensions.size(); ++d) {
        int g = groups.group_of(d, ds.spec.alternatives[j]);
        const auto* members =
            g >= 0 ? &groups.dimensions[d].groups[static_cast<std::size_t>(g)] : nullptr;
        for (std::size_t c = 0; c < columns.size(); ++c, ++cursor) {
          if (!members) continue;
          double sum = 0.0;
          int count = 0;
          for (const auto& other : *members) {
            int jo = ds.spec.alternative_index(other);
            if (jo == j) continue;
            sum += obs.attributes(jo, col_idx[c]) * ds.spec.column_scale(columns[c]);
            ++count;
          }
          if (count == 0) {
            if (!singleton_warned[d]) {
              singleton_warned[d] = true;
              out.warnings.push_back("dimension " + groups.dimensions[d].name +
                                     " has a singleton group; instrument set to 0");
            }
            continue;
          }
          out.values(r, cursor) = sum / count;
        }
      }
    }
  }
  return out;
}

InstrumentMatrix instrument_columns(const Dataset& ds, const std::vector<std::string>& columns) {
  const int n_alts = static_cast<int>(ds.spec.alternatives.size());
  InstrumentMatrix out;
  std::vector<int> col_idx;
  for (const auto& col : columns) {
    int c = ds.column_index(col);
    if (c < 0) throw ValidationError("instrument column " + col + " not in dataset");
    col_idx.push_back(c);
    out.names.push_back(col);
  }
  out.values = Matrix::Zero(static_cast<Eigen::Index>(ds.observations.size()) * n_alts,
                            static_cast<Eigen::Index>(columns.size()));
  for (std::size_t t = 0; t < ds.observations.size(); ++t) {
    for (int j = 0; j < n_alts; ++j) {
      for (std::size_t c = 0; c < columns.size(); ++c) {
        out.values(out.row(t, j, n_alts), static_cast<Eigen::Index>(c)) =
            ds.observations[t].attributes(j, col_idx[c]) * ds.spec.column_scale(columns[c]);
      }
    }
  }
  return out;
}

ControlFunctionResult control_function_stage1(const Dataset& ds,
                                              const InstrumentMatrix& instruments) {
  ControlFunctionResult result;
  result.dataset = ds;
  if (!ds.spec.endogenous_column) return result;  // nothing declared: no-op

  const auto& spec = ds.spec;
  auto control_col_name = spec.control_column();
  if (!control_col_name) throw ValidationError("control stage: spec has no control column");
  if (instruments.names.empty()) {
    throw ValidationError("control stage: endogeneity declared but no instruments supplied");
  }
  result.instrument_names = instruments.names;

  Dataset& out = result.dataset;
  int control_c = out.column_index(*control_col_name);
  if (control_c < 0) {
    out.columns.push_back(*control_col_name);
    control_c = static_cast<int>(out.columns.size()) - 1;
    for (auto& obs : out.observations) {
      obs.attributes.conservativeResize(Eigen::NoChange, out.columns.size());
      obs.attributes.col(control_c).setZero();
    }
  } else {
    for (auto& obs : out.observations) obs.attributes.col(control_c).setZero();
  }

  int endog_c = out.column_index(*spec.endogenous_column);
  if (endog_c < 0) {
    throw ValidationError("control stage: endogenous column " + *spec.endogenous_column +
                          " not in dataset");
  }
  const int n_alts = static_cast<int>(spec.alternatives.size());
  const auto n_obs = static_cast<Eigen::Index>(out.observations.size());

  // One regression per alternative whose design carries the endogenous column.
  for (int j = 0; j < n_alts; ++j) {
    bool carries = false;
    std::vector<std::string> exog_cols;
    for (const auto& [param, column] : spec.design[j]) {
      if (column == kConstantColumn) continue;
      if (column == *spec.endogenous_column) {
        carries = true;
      } else if (column != *control_col_name &&
                 std::find(exog_cols.begin(), exog_cols.end(), column) == exog_cols.end()) {
        exog_cols.push_back(column);
      }
    }
    if (!carries) continue;

    Vector y(n_obs);
    Matrix X_exog(n_obs, static_cast<Eigen::Index>(exog_cols.size()));
    Matrix Z(n_obs, static_cast<Eigen::Index>(instruments.names.size()));
    for (Eigen::Index t = 0; t < n_obs; ++t) {
      const auto& obs = out.observations[static_cast<std::size_t>(t)];
      y[t] = obs.attributes(j, endog_c) * spec.column_scale(*spec.endogenous_column);
      for (std::size_t c = 0; c < exog_cols.size(); ++c) {
        int ci = out.column_index(exog_cols[c]);
        X_exog(t, static_cast<Eigen::Index>(c)) =
            obs.attributes(j, ci) * spec.column_scale(exog_cols[c]);
      }
      Z.row(t) = instruments.values.row(
          instruments.row(static_cast<std::size_t>(t), j, n_alts));
    }
    Matrix X(n_obs, X_exog.cols() + Z.cols());
    X.leftCols(X_exog.cols()) = X_exog;
    X.rightCols(Z.cols()) = Z;
    std::vector<std::string> names = exog_cols;
    names.insert(names.end(), instruments.names.begin(), instruments.names.end());
    LinearModelFit fit = ols_fit(y, X, /*intercept=*/true, names);
    fit.used_instruments = instruments.names;
    for (Eigen::Index t = 0; t < n_obs; ++t) {
      out.observations[static_cast<std::size_t>(t)].attributes(j, control_c) = fit.residuals[t];
    }
    result.first_stages.emplace(spec.alternatives[j], std::move(fit));
  }
  if (result.first_stages.empty()) {
    throw ValidationError("control stage: endogenous column feeds no alternative");
  }
  return result;
}

}  // namespace glam
