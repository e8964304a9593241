#include "glam/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace glam {

std::string to_string(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::MNL: return "MNL";
    case BenchmarkKind::NL: return "NL";
    case BenchmarkKind::IPDL: return "IPDL";
  }
  return "unknown";
}

BenchmarkKind benchmark_kind_from_string(const std::string& name) {
  std::string lower;
  for (char c : name) lower.push_back(static_cast<char>(std::tolower(c)));
  if (lower == "mnl") return BenchmarkKind::MNL;
  if (lower == "nl") return BenchmarkKind::NL;
  if (lower == "ipdl") return BenchmarkKind::IPDL;
  throw ValidationError("unknown benchmark kind: " + name);
}

namespace {

int resolve_reference(const ModelSpec& spec) {
  if (spec.reference_alternative) return spec.alternative_index(*spec.reference_alternative);
  for (std::size_t j = 0; j < spec.alternatives.size(); ++j) {
    if (!spec.has_constant(static_cast<int>(j))) return static_cast<int>(j);
  }
  throw ValidationError("benchmark: no alternative without a constant to use as reference");
}

// Benchmarks drop the control slot entirely: endogeneity is handled by the
// instruments, and the residual column does not exist in raw data.
ModelSpec without_control(const ModelSpec& spec) {
  if (!spec.control_parameter) return spec;
  ModelSpec out = spec;
  int cp = out.parameter_index(*out.control_parameter);
  out.parameter_names.erase(out.parameter_names.begin() + cp);
  out.bounds.erase(out.bounds.begin() + cp);
  for (auto& alt : out.design) alt.erase(*spec.control_parameter);
  out.control_parameter.reset();
  out.endogenous_column.reset();
  return out;
}

}  // namespace

BenchmarkFit estimate_benchmark(const Dataset& ds, BenchmarkKind kind,
                                const GroupingScheme& groups,
                                const InstrumentMatrix* instruments,
                                const BenchmarkOptions& options) {
  if (kind == BenchmarkKind::NL && groups.dimensions.size() != 1) {
    throw ValidationError("benchmark: NL takes exactly one grouping dimension");
  }
  if (kind == BenchmarkKind::IPDL && groups.dimensions.empty()) {
    throw ValidationError("benchmark: IPDL needs at least one grouping dimension");
  }
  const bool with_rho = kind != BenchmarkKind::MNL && !options.force_rho_zero;

  const ModelSpec spec = without_control(ds.spec);
  const int ref = resolve_reference(spec);
  const int n_alts = static_cast<int>(spec.alternatives.size());
  CompiledDesign design = compile_design(spec, ds.columns);

  std::vector<int> param_idx;
  for (std::size_t p = 0; p < spec.parameter_names.size(); ++p) {
    param_idx.push_back(static_cast<int>(p));
  }

  // Mark parameters fed by the endogenous column anywhere in the design.
  std::vector<bool> endogenous_param(spec.parameter_names.size(), false);
  if (ds.spec.endogenous_column) {
    for (const auto& alt : spec.design) {
      for (const auto& [param, column] : alt) {
        if (column == *ds.spec.endogenous_column) {
          endogenous_param[static_cast<std::size_t>(spec.parameter_index(param))] = true;
        }
      }
    }
  }

  BenchmarkFit out;
  out.kind = kind;
  out.reference_alternative = spec.alternatives[static_cast<std::size_t>(ref)];
  out.groups = groups;

  // Stack rows over inside alternatives with positive shares.
  struct RowRef {
    std::size_t t;
    int j;
  };
  std::vector<RowRef> rows;
  for (std::size_t t = 0; t < ds.observations.size(); ++t) {
    const auto& obs = ds.observations[t];
    bool any_inside = false;
    for (int j = 0; j < n_alts; ++j) {
      if (j == ref) continue;
      if (obs.shares[j] > 0.0) {
        rows.push_back({t, j});
        any_inside = true;
      } else {
        out.excluded_zero_share_rows += 1;
      }
    }
    if (any_inside && !(obs.shares[ref] > 0.0)) {
      throw ValidationError("benchmark: reference alternative " + out.reference_alternative +
                            " has zero share for agent " + obs.agent_id);
    }
  }
  if (rows.empty()) throw EstimationError("benchmark: no usable rows");

  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  const auto n_params = static_cast<Eigen::Index>(param_idx.size());
  const auto n_dims = static_cast<Eigen::Index>(with_rho ? groups.dimensions.size() : 0);

  Vector y(n_rows);
  Matrix X_exog(n_rows, n_params);  // endogenous params get moved below
  Matrix Rho(n_rows, n_dims);
  std::vector<Matrix> design_cache(ds.observations.size());
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& ref_row = rows[static_cast<std::size_t>(r)];
    const auto& obs = ds.observations[ref_row.t];
    if (design_cache[ref_row.t].size() == 0) design_cache[ref_row.t] = design.rows(obs);
    const Matrix& X = design_cache[ref_row.t];
    y[r] = std::log(obs.shares[ref_row.j] / obs.shares[ref]);
    for (Eigen::Index c = 0; c < n_params; ++c) {
      int p = param_idx[static_cast<std::size_t>(c)];
      X_exog(r, c) = X(ref_row.j, p) - X(ref, p);
    }
    for (Eigen::Index d = 0; d < n_dims; ++d) {
      int g = groups.group_of(static_cast<std::size_t>(d),
                              spec.alternatives[static_cast<std::size_t>(ref_row.j)]);
      if (g < 0) {
        Rho(r, d) = 0.0;
        continue;
      }
      double group_share = 0.0;
      for (const auto& member :
           groups.dimensions[static_cast<std::size_t>(d)].groups[static_cast<std::size_t>(g)]) {
        group_share += obs.shares[spec.alternative_index(member)];
      }
      Rho(r, d) = std::log(obs.shares[ref_row.j] / group_share);
    }
  }

  // Split regressors into exogenous and endogenous blocks.
  std::vector<Eigen::Index> exog_cols, endog_cols;
  for (Eigen::Index c = 0; c < n_params; ++c) {
    if (endogenous_param[static_cast<std::size_t>(param_idx[static_cast<std::size_t>(c)])]) {
      endog_cols.push_back(c);
    } else {
      exog_cols.push_back(c);
    }
  }
  const auto n_endog = static_cast<Eigen::Index>(endog_cols.size()) + n_dims;

  std::vector<std::string> exog_names, endog_names;
  Matrix Xe(n_rows, static_cast<Eigen::Index>(exog_cols.size()));
  for (std::size_t i = 0; i < exog_cols.size(); ++i) {
    Xe.col(static_cast<Eigen::Index>(i)) = X_exog.col(exog_cols[i]);
    exog_names.push_back(
        spec.parameter_names[static_cast<std::size_t>(param_idx[static_cast<std::size_t>(
            exog_cols[i])])]);
  }
  Matrix Xn(n_rows, n_endog);
  for (std::size_t i = 0; i < endog_cols.size(); ++i) {
    Xn.col(static_cast<Eigen::Index>(i)) = X_exog.col(endog_cols[i]);
    endog_names.push_back(
        spec.parameter_names[static_cast<std::size_t>(param_idx[static_cast<std::size_t>(
            endog_cols[i])])]);
  }
  for (Eigen::Index d = 0; d < n_dims; ++d) {
    Xn.col(static_cast<Eigen::Index>(endog_cols.size()) + d) = Rho.col(d);
    endog_names.push_back("rho_" + groups.dimensions[static_cast<std::size_t>(d)].name);
  }

  LinearModelFit fit;
  if (n_endog == 0) {
    fit = ols_fit(y, Xe, /*intercept=*/false, exog_names);
  } else {
    if (instruments == nullptr || instruments->names.empty()) {
      throw ValidationError("benchmark: endogenous regressors but no instruments supplied");
    }
    Matrix Z(n_rows, static_cast<Eigen::Index>(instruments->names.size()));
    for (Eigen::Index r = 0; r < n_rows; ++r) {
      const auto& rr = rows[static_cast<std::size_t>(r)];
      Z.row(r) = instruments->values.row(instruments->row(rr.t, rr.j, n_alts));
    }
    fit = tsls_fit(y, Xe, Xn, Z, /*intercept=*/false, exog_names, endog_names,
                   instruments->names);
  }

  // Re-assemble coefficients in (parameters..., rho...) order.
  const auto n_coef = n_params + n_dims;
  out.coefficients = Vector::Zero(n_coef);
  out.parameter_slots.assign(static_cast<std::size_t>(n_coef), -1);
  for (std::size_t i = 0; i < exog_cols.size(); ++i) {
    out.coefficients[exog_cols[i]] = fit.coefficients[static_cast<Eigen::Index>(i)];
  }
  for (std::size_t i = 0; i < endog_cols.size(); ++i) {
    out.coefficients[endog_cols[i]] =
        fit.coefficients[static_cast<Eigen::Index>(exog_cols.size() + i)];
  }
  out.rho = Vector::Zero(static_cast<Eigen::Index>(groups.dimensions.size()));
  for (Eigen::Index d = 0; d < n_dims; ++d) {
    double value =
        fit.coefficients[static_cast<Eigen::Index>(exog_cols.size() + endog_cols.size()) + d];
    out.coefficients[n_params + d] = value;
    out.rho[d] = value;
  }
  for (Eigen::Index c = 0; c < n_params; ++c) {
    out.coefficient_names.push_back(
        spec.parameter_names[static_cast<std::size_t>(param_idx[static_cast<std::size_t>(c)])]);
    out.parameter_slots[static_cast<std::size_t>(c)] = param_idx[static_cast<std::size_t>(c)];
  }
  for (Eigen::Index d = 0; d < n_dims; ++d) {
    out.coefficient_names.push_back("rho_" +
                                    groups.dimensions[static_cast<std::size_t>(d)].name);
  }
  if (!with_rho && kind != BenchmarkKind::MNL) {
    // rho pinned at zero: keep the slots so prediction sees zeros.
    for (std::size_t d = 0; d < groups.dimensions.size(); ++d) {
      out.coefficient_names.push_back("rho_" + groups.dimensions[d].name);
    }
    out.rho = Vector::Zero(static_cast<Eigen::Index>(groups.dimensions.size()));
    Vector coef(out.coefficients.size() + static_cast<Eigen::Index>(groups.dimensions.size()));
    coef.head(out.coefficients.size()) = out.coefficients;
    coef.tail(static_cast<Eigen::Index>(groups.dimensions.size())).setZero();
    out.coefficients = coef;
    out.parameter_slots.resize(out.coefficient_names.size(), -1);
  }
  out.fit = std::move(fit);
  return out;
}

Vector benchmark_predict_shares(const BenchmarkFit& fit, const Dataset& ds,
                                const MarketObservation& obs) {
  const ModelSpec spec = without_control(ds.spec);
  const int ref = spec.alternative_index(fit.reference_alternative);
  if (ref < 0) throw ValidationError("benchmark: reference alternative missing from spec");
  const int n_alts = static_cast<int>(spec.alternatives.size());
  CompiledDesign design = compile_design(spec, ds.columns);
  Matrix X = design.rows(obs);

  Vector delta = Vector::Zero(n_alts);
  for (std::size_t c = 0; c < fit.parameter_slots.size(); ++c) {
    int p = fit.parameter_slots[c];
    if (p < 0) continue;
    for (int j = 0; j < n_alts; ++j) {
      if (j == ref) continue;
      delta[j] += fit.coefficients[static_cast<Eigen::Index>(c)] * (X(j, p) - X(ref, p));
    }
  }

  auto softmax = [](const Vector& v) {
    Vector e = (v.array() - v.maxCoeff()).exp();
    return Vector(e / e.sum());
  };
  bool rho_free = fit.rho.size() > 0 && fit.rho.lpNorm<Eigen::Infinity>() > 0.0;
  if (!rho_free) return softmax(delta);

  // Damped fixed point on the implicit log-share system.
  Vector log_s = (softmax(delta).array() + 1e-300).log().matrix();
  const int max_iter = 10'000;
  const double tol = 1e-10;
  double residual = kInf;
  for (int it = 0; it < max_iter; ++it) {
    Vector u = Vector::Zero(n_alts);
    for (int j = 0; j < n_alts; ++j) {
      if (j == ref) continue;
      u[j] = delta[j];
      for (Eigen::Index d = 0; d < fit.rho.size(); ++d) {
        int g = fit.groups.group_of(static_cast<std::size_t>(d),
                                    spec.alternatives[static_cast<std::size_t>(j)]);
        if (g < 0) continue;
        double group_share = 0.0;
        for (const auto& member : fit.groups.dimensions[static_cast<std::size_t>(d)]
                                      .groups[static_cast<std::size_t>(g)]) {
          group_share += std::exp(log_s[spec.alternative_index(member)]);
        }
        u[j] += fit.rho[d] * (log_s[j] - std::log(group_share));
      }
    }
    residual = 0.0;
    for (int j = 0; j < n_alts; ++j) {
      if (j == ref) continue;
      residual = std::max(residual, std::abs((log_s[j] - log_s[ref]) - u[j]));
    }
    if (residual <= tol) {
      Vector s = log_s.array().exp().matrix();
      return Vector(s / s.sum());
    }
    Vector next = (softmax(u).array() + 1e-300).log().matrix();
    log_s = 0.5 * log_s + 0.5 * next;
    // renormalize in log space
    double lse = std::log(log_s.array().exp().sum());
    log_s.array() -= lse;
  }
  throw OptimizationError("benchmark: share fixed point did not converge (residual " +
                          std::to_string(residual) + ")");
}

SharePredictor benchmark_predictor(const BenchmarkFit& fit, const Dataset& ds) {
  auto fit_copy = std::make_shared<BenchmarkFit>(fit);
  auto ds_shell = std::make_shared<Dataset>();
  ds_shell->spec = ds.spec;
  ds_shell->columns = ds.columns;
  return [fit_copy, ds_shell](const MarketObservation& obs) {
    return benchmark_predict_shares(*fit_copy, *ds_shell, obs);
  };
}

}  // namespace glam
