#include "glam/serialization.hpp"

#include <cmath>
#include <fstream>

namespace glam {

using nlohmann::json;

namespace {

json bounds_to_json(const Bounds& b) {
  json j = json::array();
  j.push_back(std::isfinite(b.lower) ? json(b.lower) : json(nullptr));
  j.push_back(std::isfinite(b.upper) ? json(b.upper) : json(nullptr));
  return j;
}

Bounds bounds_from_json(const json& j) {
  Bounds b;
  if (!j.is_array() || j.size() != 2) throw ValidationError("spec: bound must be a [lb, ub] pair");
  if (!j[0].is_null()) b.lower = j[0].get<double>();
  if (!j[1].is_null()) b.upper = j[1].get<double>();
  return b;
}

json vector_to_json(const Vector& v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

QPStatus status_from_string(const std::string& s) {
  if (s == "optimal") return QPStatus::optimal;
  if (s == "relaxed") return QPStatus::relaxed;
  if (s == "infeasible") return QPStatus::infeasible;
  throw ValidationError("unknown QP status: " + s);
}

}  // namespace

json spec_to_json(const ModelSpec& spec) {
  json j;
  j["parameters"] = spec.parameter_names;
  json bounds = json::object();
  for (std::size_t k = 0; k < spec.parameter_names.size(); ++k) {
    const auto& b = spec.bounds[k];
    if (std::isfinite(b.lower) || std::isfinite(b.upper)) {
      bounds[spec.parameter_names[k]] = bounds_to_json(b);
    }
  }
  j["bounds"] = bounds;
  j["alternatives"] = spec.alternatives;
  json design = json::object();
  for (std::size_t a = 0; a < spec.alternatives.size(); ++a) {
    design[spec.alternatives[a]] = spec.design[a];
  }
  j["design"] = design;
  if (!spec.column_scales.empty()) j["column_scales"] = spec.column_scales;
  if (spec.endogenous_column) j["endogenous_column"] = *spec.endogenous_column;
  if (spec.control_parameter) j["control_parameter"] = *spec.control_parameter;
  if (spec.reference_alternative) j["reference_alternative"] = *spec.reference_alternative;
  return j;
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  spec.parameter_names = j.at("parameters").get<std::vector<std::string>>();
  spec.alternatives = j.at("alternatives").get<std::vector<std::string>>();
  spec.bounds.assign(spec.parameter_names.size(), Bounds{});
  if (j.contains("bounds")) {
    for (const auto& [name, value] : j.at("bounds").items()) {
      int p = spec.parameter_index(name);
      if (p < 0) throw ValidationError("spec: bound for unknown parameter " + name);
      spec.bounds[static_cast<std::size_t>(p)] = bounds_from_json(value);
    }
  }
  const auto& design = j.at("design");
  spec.design.resize(spec.alternatives.size());
  for (std::size_t a = 0; a < spec.alternatives.size(); ++a) {
    const auto& alt = spec.alternatives[a];
    if (!design.contains(alt)) throw ValidationError("spec: no design entry for " + alt);
    spec.design[a] = design.at(alt).get<std::map<std::string, std::string>>();
  }
  if (j.contains("column_scales")) {
    spec.column_scales = j.at("column_scales").get<std::map<std::string, double>>();
  }
  if (j.contains("endogenous_column")) {
    spec.endogenous_column = j.at("endogenous_column").get<std::string>();
  }
  if (j.contains("control_parameter")) {
    spec.control_parameter = j.at("control_parameter").get<std::string>();
  }
  if (j.contains("reference_alternative")) {
    spec.reference_alternative = j.at("reference_alternative").get<std::string>();
  }
  spec.validate();
  return spec;
}

ModelSpec load_spec_json(const std::string& path) { return spec_from_json(read_json_file(path)); }

json estimation_result_to_json(const EstimationResult& result, const Dataset& ds) {
  json j;
  j["clusters"] = result.clusters;
  j["tol"] = result.tol;
  j["converged"] = result.converged;
  j["iterations_run"] = result.iterations_run;
  json priors = json::array();
  for (const auto& p : result.priors) priors.push_back(vector_to_json(p));
  j["priors"] = priors;
  json means = json::array();
  for (const auto& m : result.cluster_means) means.push_back(vector_to_json(m));
  j["cluster_means"] = means;
  json agents = json::object();
  for (std::size_t t = 0; t < result.agents.size(); ++t) {
    const auto& ap = result.agents[t];
    json a;
    a["cluster"] = ap.cluster;
    a["status"] = to_string(ap.status);
    a["tol_used"] = ap.tol_used;
    a["objective"] = ap.objective;
    a["theta"] = ap.theta.size() > 0 ? vector_to_json(ap.theta) : json(nullptr);
    agents[ds.observations[t].agent_id] = std::move(a);
  }
  j["agents"] = agents;
  json trace = json::array();
  for (const auto& rec : result.trace) {
    json r;
    json rp = json::array();
    for (const auto& p : rec.priors) rp.push_back(vector_to_json(p));
    r["priors"] = rp;
    r["cluster_sizes"] = rec.cluster_sizes;
    r["mean_objective"] = rec.mean_objective;
    r["max_prior_change"] = rec.max_prior_change;
    r["infeasible_agents"] = rec.infeasible_agents;
    trace.push_back(std::move(r));
  }
  j["trace"] = trace;
  if (result.bootstrap_se) {
    json se = json::array();
    for (const auto& v : *result.bootstrap_se) se.push_back(vector_to_json(v));
    j["bootstrap_se"] = se;
  }
  return j;
}

EstimationResult estimation_result_from_json(const json& j, const Dataset& ds) {
  EstimationResult result;
  result.clusters = j.at("clusters").get<int>();
  result.tol = j.at("tol").get<double>();
  result.converged = j.at("converged").get<bool>();
  result.iterations_run = j.at("iterations_run").get<int>();
  for (const auto& p : j.at("priors")) result.priors.push_back(vector_from_json(p));
  for (const auto& m : j.at("cluster_means")) result.cluster_means.push_back(vector_from_json(m));
  const auto& agents = j.at("agents");
  result.agents.resize(ds.observations.size());
  for (std::size_t t = 0; t < ds.observations.size(); ++t) {
    const auto& id = ds.observations[t].agent_id;
    if (!agents.contains(id)) {
      throw ValidationError("result file has no agent " + id + " from the dataset");
    }
    const auto& a = agents.at(id);
    AgentParameters ap;
    ap.cluster = a.at("cluster").get<int>();
    ap.status = status_from_string(a.at("status").get<std::string>());
    ap.tol_used = a.at("tol_used").get<double>();
    ap.objective = a.at("objective").get<double>();
    if (!a.at("theta").is_null()) ap.theta = vector_from_json(a.at("theta"));
    result.agents[t] = std::move(ap);
  }
  if (j.contains("trace")) {
    for (const auto& r : j.at("trace")) {
      IterationRecord rec;
      for (const auto& p : r.at("priors")) rec.priors.push_back(vector_from_json(p));
      rec.cluster_sizes = r.at("cluster_sizes").get<std::vector<int>>();
      rec.mean_objective = r.at("mean_objective").get<double>();
      rec.max_prior_change = r.at("max_prior_change").get<double>();
      rec.infeasible_agents = r.at("infeasible_agents").get<int>();
      result.trace.push_back(std::move(rec));
    }
  }
  if (j.contains("bootstrap_se")) {
    std::vector<Vector> se;
    for (const auto& v : j.at("bootstrap_se")) se.push_back(vector_from_json(v));
    result.bootstrap_se = std::move(se);
  }
  return result;
}

EstimationResult load_estimation_result(const std::string& path, const Dataset& ds) {
  return estimation_result_from_json(read_json_file(path), ds);
}

json benchmark_fit_to_json(const BenchmarkFit& fit) {
  json j;
  j["kind"] = to_string(fit.kind);
  j["coefficient_names"] = fit.coefficient_names;
  j["coefficients"] = vector_to_json(fit.coefficients);
  j["rho"] = vector_to_json(fit.rho);
  j["reference_alternative"] = fit.reference_alternative;
  j["parameter_slots"] = fit.parameter_slots;
  j["excluded_zero_share_rows"] = fit.excluded_zero_share_rows;
  json dims = json::array();
  for (const auto& dim : fit.groups.dimensions) {
    json d;
    d["name"] = dim.name;
    d["groups"] = dim.groups;
    dims.push_back(std::move(d));
  }
  j["groups"] = dims;
  json f;
  f["coefficients"] = vector_to_json(fit.fit.coefficients);
  f["standard_errors"] = vector_to_json(fit.fit.standard_errors);
  f["r_squared"] = fit.fit.r_squared;
  f["n_obs"] = fit.fit.n_obs;
  f["column_names"] = fit.fit.column_names;
  f["used_instruments"] = fit.fit.used_instruments;
  j["fit"] = f;
  return j;
}

BenchmarkFit benchmark_fit_from_json(const json& j) {
  BenchmarkFit fit;
  fit.kind = benchmark_kind_from_string(j.at("kind").get<std::string>());
  fit.coefficient_names = j.at("coefficient_names").get<std::vector<std::string>>();
  fit.coefficients = vector_from_json(j.at("coefficients"));
  fit.rho = vector_from_json(j.at("rho"));
  fit.reference_alternative = j.at("reference_alternative").get<std::string>();
  fit.parameter_slots = j.at("parameter_slots").get<std::vector<int>>();
  fit.excluded_zero_share_rows = j.at("excluded_zero_share_rows").get<int>();
  for (const auto& d : j.at("groups")) {
    GroupingScheme::Dimension dim;
    dim.name = d.at("name").get<std::string>();
    dim.groups = d.at("groups").get<std::vector<std::vector<std::string>>>();
    fit.groups.dimensions.push_back(std::move(dim));
  }
  const auto& f = j.at("fit");
  fit.fit.coefficients = vector_from_json(f.at("coefficients"));
  fit.fit.standard_errors = vector_from_json(f.at("standard_errors"));
  fit.fit.r_squared = f.at("r_squared").get<double>();
  fit.fit.n_obs = f.at("n_obs").get<int>();
  fit.fit.column_names = f.at("column_names").get<std::vector<std::string>>();
  fit.fit.used_instruments = f.at("used_instruments").get<std::vector<std::string>>();
  return fit;
}

json discount_instance_to_json(const DiscountInstance& inst) {
  json j;
  j["regions"] = inst.regions;
  j["agents_by_region"] = inst.agents_by_region;
  j["agent_ids"] = inst.agent_ids;
  j["demand"] = inst.demand;
  j["fare"] = inst.fare;
  j["share_with"] = inst.share_with;
  j["share_without"] = inst.share_without;
  j["max_regions"] = inst.max_regions;
  j["budget"] = inst.budget;
  j["discount_rate"] = inst.discount_rate;
  j["demand_weighted_budget"] = inst.demand_weighted_budget;
  return j;
}

json discount_solution_to_json(const DiscountSolution& sol) {
  json j;
  j["selected_regions"] = sol.selected_regions;
  j["objective_ridership"] = sol.objective_ridership;
  j["ridership_gain"] = sol.ridership_gain;
  j["revenue_change"] = sol.revenue_change;
  j["budget_used"] = sol.budget_used;
  j["optimal"] = sol.optimal;
  j["gap"] = sol.gap;
  return j;
}

json qp_subproblem_to_json(const QPSubproblem& problem) {
  json j;
  j["prior"] = vector_to_json(problem.prior);
  j["tol_used"] = problem.tol_used;
  json rows = json::array();
  for (const auto& row : problem.rows) {
    json r;
    r["a"] = vector_to_json(row.a);
    r["lower"] = std::isfinite(row.lower) ? json(row.lower) : json(nullptr);
    r["upper"] = std::isfinite(row.upper) ? json(row.upper) : json(nullptr);
    r["pair"] = {row.j, row.j_prime};
    rows.push_back(std::move(r));
  }
  j["rows"] = rows;
  json box = json::array();
  for (const auto& b : problem.box) box.push_back(bounds_to_json(b));
  j["box"] = box;
  return j;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << contents;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return j;
}

}  // namespace glam
