#pragma once

#include "glam/benchmarks.hpp"
#include "glam/data_model.hpp"
#include "glam/discount.hpp"
#include "glam/estimator.hpp"

#include <json.hpp>

#include <string>

namespace glam {

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);
ModelSpec load_spec_json(const std::string& path);

nlohmann::json estimation_result_to_json(const EstimationResult& result, const Dataset& ds);
/// Rebuilds a result against the dataset it was estimated on (agent order
/// must match; ids are checked).
EstimationResult estimation_result_from_json(const nlohmann::json& j, const Dataset& ds);
EstimationResult load_estimation_result(const std::string& path, const Dataset& ds);

nlohmann::json benchmark_fit_to_json(const BenchmarkFit& fit);
BenchmarkFit benchmark_fit_from_json(const nlohmann::json& j);

nlohmann::json discount_instance_to_json(const DiscountInstance& inst);
nlohmann::json discount_solution_to_json(const DiscountSolution& sol);

/// Debug dump of a projection subproblem.
nlohmann::json qp_subproblem_to_json(const QPSubproblem& problem);

void write_text_file(const std::string& path, const std::string& contents);
nlohmann::json read_json_file(const std::string& path);

}  // namespace glam
