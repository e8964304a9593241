// Command-line front end for market-level mixed logit estimation and the
// downstream analysis/optimization pipeline.
//
// Subcommands: validate, estimate, evaluate, analyze, benchmark,
// optimize-discount. A JSON run config can preload any flag (--config);
// explicit flags win. Exit codes: 0 ok, 2 validation, 3 estimation,
// 4 infeasible/optimization, 1 anything else.

#include "glam/analysis.hpp"
#include "glam/benchmarks.hpp"
#include "glam/csv.hpp"
#include "glam/data_model.hpp"
#include "glam/discount.hpp"
#include "glam/estimator.hpp"
#include "glam/qp.hpp"
#include "glam/regression.hpp"
#include "glam/serialization.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string data_path;
  std::string spec_path;
  std::string out_dir;
  int threads = 0;
};

std::string default_out_dir() {
  const char* env = std::getenv("GLAM_OUTPUT_DIR");
  return env && *env ? env : ".";
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(text);
  while (std::getline(ss, item, sep)) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "auto:driving|ondemand|carpool,transit|walking;waiting:transit|ondemand"
// -> dimensions separated by ';', groups by ',', members by '|'.
glam::GroupingScheme parse_dimensions(const std::string& text) {
  glam::GroupingScheme scheme;
  for (const auto& dim_text : split_list(text, ';')) {
    auto colon = dim_text.find(':');
    if (colon == std::string::npos) {
      throw glam::ValidationError("bad dimension syntax (want name:group|members): " + dim_text);
    }
    glam::GroupingScheme::Dimension dim;
    dim.name = dim_text.substr(0, colon);
    for (const auto& group_text : split_list(dim_text.substr(colon + 1), ',')) {
      dim.groups.push_back(split_list(group_text, '|'));
    }
    scheme.dimensions.push_back(std::move(dim));
  }
  return scheme;
}

struct InstrumentArgs {
  std::string columns;       // explicit per-row instrument columns
  std::string dimensions;    // differentiation-instrument dimensions
  std::string attr_columns;  // columns averaged within groups
};

std::optional<glam::InstrumentMatrix> build_instruments(const glam::Dataset& ds,
                                                        const InstrumentArgs& args) {
  if (!args.columns.empty()) {
    return glam::instrument_columns(ds, split_list(args.columns, ','));
  }
  if (!args.dimensions.empty()) {
    if (args.attr_columns.empty()) {
      throw glam::ValidationError("--iv-dimensions needs --iv-attr-columns");
    }
    auto iv = glam::build_differentiation_instruments(ds, parse_dimensions(args.dimensions),
                                                      split_list(args.attr_columns, ','));
    for (const auto& warning : iv.warnings) std::cerr << "warning: " << warning << "\n";
    return iv;
  }
  return std::nullopt;
}

glam::Dataset load_inputs(const CommonArgs& common) {
  glam::ModelSpec spec = glam::load_spec_json(common.spec_path);
  return glam::load_dataset_csv(common.data_path, spec);
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw glam::ValidationError("cannot create output directory " + dir);
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw glam::ValidationError("cannot write " + path);
  out << j.dump(2) << "\n";
}

// Applies the spec-declared endogeneity correction when instruments are given.
glam::Dataset prepare_dataset(const glam::Dataset& ds, const InstrumentArgs& iv_args,
                              std::map<std::string, glam::LinearModelFit>* stages = nullptr) {
  if (!ds.spec.endogenous_column) return ds;
  auto control_col = ds.spec.control_column();
  if (control_col && ds.column_index(*control_col) >= 0) {
    // Control residuals already present (prepared CSV from a previous run).
    return ds;
  }
  auto iv = build_instruments(ds, iv_args);
  if (!iv) {
    throw glam::ValidationError(
        "spec declares an endogenous column; supply --iv-columns or --iv-dimensions "
        "(or pass the prepared CSV emitted by `estimate`)");
  }
  auto stage1 = glam::control_function_stage1(ds, *iv);
  if (stages) *stages = stage1.first_stages;
  return stage1.dataset;
}

void write_agent_csv(const std::string& path, const glam::Dataset& ds,
                     const glam::EstimationResult& result) {
  glam::CsvTable table;
  table.header = {"agent_id", "cluster", "status", "tol_used", "objective"};
  for (const auto& name : ds.spec.parameter_names) table.header.push_back(name);
  for (std::size_t t = 0; t < result.agents.size(); ++t) {
    const auto& ap = result.agents[t];
    std::vector<std::string> row = {ds.observations[t].agent_id, std::to_string(ap.cluster),
                                    glam::to_string(ap.status), glam::format_double(ap.tol_used),
                                    glam::format_double(ap.objective)};
    for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(ds.spec.parameter_names.size()); ++k) {
      row.push_back(ap.theta.size() > 0 ? glam::format_double(ap.theta[k]) : "");
    }
    table.rows.push_back(std::move(row));
  }
  glam::write_csv(path, table);
}

void write_trace_csv(const std::string& path, const glam::Dataset& ds,
                     const glam::EstimationResult& result) {
  glam::CsvTable table;
  table.header = {"iteration", "cluster", "size", "mean_objective", "max_prior_change",
                  "infeasible_agents"};
  for (const auto& name : ds.spec.parameter_names) table.header.push_back("prior_" + name);
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    const auto& rec = result.trace[i];
    for (std::size_t m = 0; m < rec.priors.size(); ++m) {
      std::vector<std::string> row = {std::to_string(i),
                                      std::to_string(m),
                                      std::to_string(rec.cluster_sizes[m]),
                                      glam::format_double(rec.mean_objective),
                                      glam::format_double(rec.max_prior_change),
                                      std::to_string(rec.infeasible_agents)};
      for (Eigen::Index k = 0; k < rec.priors[m].size(); ++k) {
        row.push_back(glam::format_double(rec.priors[m][k]));
      }
      table.rows.push_back(std::move(row));
    }
  }
  glam::write_csv(path, table);
}

int cmd_estimate(const CommonArgs& common, const glam::EstimatorConfig& cfg,
                 const InstrumentArgs& iv_args) {
  ensure_out_dir(common.out_dir);
  glam::Dataset raw = load_inputs(common);
  std::map<std::string, glam::LinearModelFit> stages;
  glam::Dataset ds = prepare_dataset(raw, iv_args, &stages);

  glam::EstimatorConfig run_cfg = cfg;
  run_cfg.bootstrap_resamples = 0;
  glam::EstimationResult result = glam::estimate_glam(ds, run_cfg);
  if (cfg.bootstrap_resamples > 0) {
    // Resample the raw data so the first-stage regression re-runs per
    // resample when the spec declares endogeneity.
    auto rerun_stage1 = [&iv_args](const glam::Dataset& sample) {
      return prepare_dataset(sample, iv_args);
    };
    auto bs = glam::bootstrap_standard_errors(raw, cfg, rerun_stage1);
    result.bootstrap_se = bs.se;
    if (bs.resamples_failed > 0) {
      std::cerr << "bootstrap: " << bs.resamples_failed << " of " << cfg.bootstrap_resamples
                << " resamples failed and were skipped\n";
    }
  }

  fs::path out(common.out_dir);
  write_json_file((out / "result.json").string(), glam::estimation_result_to_json(result, ds));
  write_agent_csv((out / "agent_parameters.csv").string(), ds, result);
  write_trace_csv((out / "trace.csv").string(), ds, result);
  glam::write_dataset_csv(ds, (out / "prepared_data.csv").string());
  if (!stages.empty()) {
    json first_stage = json::object();
    for (const auto& [alt, fit] : stages) {
      json f;
      f["r_squared"] = fit.r_squared;
      f["n_obs"] = fit.n_obs;
      json coef = json::object();
      for (std::size_t i = 0; i < fit.column_names.size(); ++i) {
        coef[fit.column_names[i]] = fit.coefficients[static_cast<Eigen::Index>(i)];
      }
      f["coefficients"] = coef;
      first_stage[alt] = std::move(f);
    }
    write_json_file((out / "first_stage.json").string(), first_stage);
  }

  int infeasible = 0;
  int relaxed = 0;
  for (const auto& ap : result.agents) {
    if (ap.status == glam::QPStatus::infeasible) ++infeasible;
    if (ap.status == glam::QPStatus::relaxed) ++relaxed;
  }
  std::cout << (result.converged ? "converged" : "stopped") << " after "
            << result.iterations_run << " iterations; " << result.agents.size() << " agents ("
            << relaxed << " relaxed, " << infeasible << " infeasible)\n";
  for (int m = 0; m < result.clusters; ++m) {
    std::cout << "cluster " << m << " prior:";
    for (Eigen::Index k = 0; k < result.priors[m].size(); ++k) {
      std::cout << ' ' << result.priors[m][k];
    }
    std::cout << "\n";
  }
  if (!result.converged) {
    std::cerr << "warning: hit the iteration cap before the priors stabilized\n";
  }
  return 0;
}

struct MetricsRow {
  std::string model;
  std::string sample;
  std::string k;
  glam::PredictionReport report;
};

void append_metrics(glam::CsvTable& table, const MetricsRow& row) {
  table.rows.push_back(
      {row.model, row.sample, row.k, glam::format_double(row.report.mae),
       glam::format_double(row.report.overall_accuracy),
       row.report.adjusted_r_square ? glam::format_double(*row.report.adjusted_r_square) : "",
       std::to_string(row.report.n_agents)});
}

int cmd_evaluate(const CommonArgs& common, const std::string& result_path,
                 const std::string& test_path, int knn_min, int knn_max,
                 const std::vector<std::string>& benchmark_paths) {
  ensure_out_dir(common.out_dir);
  glam::ModelSpec spec = glam::load_spec_json(common.spec_path);
  glam::Dataset train = glam::load_dataset_csv(common.data_path, spec);
  glam::EstimationResult result = glam::load_estimation_result(result_path, train);
  glam::CompiledDesign design = glam::compile_design(spec, train.columns);

  glam::CsvTable table;
  table.header = {"model", "sample", "k", "mae", "overall_accuracy", "adjusted_r_square",
                  "n_agents"};

  const int glam_dof =
      static_cast<int>(spec.parameter_names.size()) * std::max(1, result.clusters);

  {
    std::vector<glam::Vector> predicted, observed;
    for (std::size_t t = 0; t < train.observations.size(); ++t) {
      const auto& ap = result.agents[t];
      if (ap.theta.size() == 0) continue;
      predicted.push_back(glam::predict_shares(ap.theta, train.observations[t], design));
      observed.push_back(train.observations[t].shares);
    }
    auto report = glam::accuracy_metrics(predicted, observed, glam_dof);
    append_metrics(table, {"glam", "in-sample", "", report});
  }

  std::optional<glam::Dataset> test;
  if (!test_path.empty()) {
    test = glam::load_dataset_csv(test_path, spec);
    for (int k = knn_min; k <= knn_max; ++k) {
      auto thetas = glam::knn_transfer(result, train, test->observations, k);
      std::vector<glam::Vector> predicted, observed;
      for (std::size_t t = 0; t < test->observations.size(); ++t) {
        predicted.push_back(glam::predict_shares(thetas[t], test->observations[t], design));
        observed.push_back(test->observations[t].shares);
      }
      auto report = glam::accuracy_metrics(predicted, observed, glam_dof);
      append_metrics(table, {"glam", "out-of-sample", std::to_string(k), report});
    }
  }

  for (const auto& path : benchmark_paths) {
    glam::BenchmarkFit fit = glam::benchmark_fit_from_json(glam::read_json_file(path));
    std::string name = glam::to_string(fit.kind);
    int dof = static_cast<int>(fit.fit.column_names.size());
    {
      std::vector<glam::Vector> predicted, observed;
      for (const auto& obs : train.observations) {
        predicted.push_back(glam::benchmark_predict_shares(fit, train, obs));
        observed.push_back(obs.shares);
      }
      append_metrics(table,
                     {name, "in-sample", "", glam::accuracy_metrics(predicted, observed, dof)});
    }
    if (test) {
      std::vector<glam::Vector> predicted, observed;
      for (const auto& obs : test->observations) {
        predicted.push_back(glam::benchmark_predict_shares(fit, *test, obs));
        observed.push_back(obs.shares);
      }
      append_metrics(
          table, {name, "out-of-sample", "", glam::accuracy_metrics(predicted, observed, dof)});
    }
  }

  fs::path out(common.out_dir);
  glam::write_csv((out / "metrics.csv").string(), table);
  json metrics = json::array();
  for (const auto& row : table.rows) {
    json entry;
    for (std::size_t c = 0; c < table.header.size(); ++c) entry[table.header[c]] = row[c];
    metrics.push_back(std::move(entry));
  }
  write_json_file((out / "metrics.json").string(), metrics);
  for (const auto& row : table.rows) {
    std::cout << row[0] << " " << row[1] << (row[2].empty() ? "" : " k=" + row[2])
              << ": mae=" << row[3] << " oa=" << row[4]
              << (row[5].empty() ? "" : " ars=" + row[5]) << "\n";
  }
  return 0;
}

int cmd_analyze(const CommonArgs& common, const std::string& result_path,
                const std::string& price_column, const std::string& price_alts,
                const std::string& time_columns_arg, const std::string& time_param,
                const std::string& cost_param, const std::string& cv_remove,
                double perturbation) {
  ensure_out_dir(common.out_dir);
  glam::ModelSpec spec = glam::load_spec_json(common.spec_path);
  glam::Dataset ds = glam::load_dataset_csv(common.data_path, spec);
  glam::EstimationResult result = glam::load_estimation_result(result_path, ds);
  glam::CompiledDesign design = glam::compile_design(spec, ds.columns);
  auto model = glam::glam_predictor(result, ds);
  fs::path out(common.out_dir);
  const auto J = spec.alternatives.size();
  json report = json::object();

  std::vector<std::string> targets =
      price_alts.empty() ? spec.alternatives : split_list(price_alts, ',');
  if (!price_column.empty()) {
    glam::CsvTable table;
    table.header = {"target_alternative", "direct"};
    for (const auto& alt : spec.alternatives) table.header.push_back("cross_" + alt);
    table.header.push_back("excluded_zero_price");
    for (const auto& target : targets) {
      int js = spec.alternative_index(target);
      if (js < 0) throw glam::ValidationError("unknown alternative " + target);
      auto col = glam::price_elasticity(model, ds, price_column, js, perturbation);
      std::vector<std::string> row = {target, glam::format_double(col.values[js])};
      for (std::size_t j = 0; j < J; ++j) {
        row.push_back(static_cast<int>(j) == js ? ""
                                                : glam::format_double(
                                                      col.values[static_cast<Eigen::Index>(j)]));
      }
      row.push_back(std::to_string(col.excluded_zero_price));
      table.rows.push_back(std::move(row));
      json e;
      e["direct"] = col.values[js];
      json cross = json::object();
      for (std::size_t j = 0; j < J; ++j) {
        if (static_cast<int>(j) != js) {
          cross[spec.alternatives[j]] = col.values[static_cast<Eigen::Index>(j)];
        }
      }
      e["cross"] = cross;
      e["excluded_zero_price"] = col.excluded_zero_price;
      report["elasticity"][target] = std::move(e);
    }
    glam::write_csv((out / "elasticity.csv").string(), table);
  }

  if (!time_columns_arg.empty()) {
    std::vector<std::string> time_columns(J);
    if (time_columns_arg.find('=') == std::string::npos) {
      std::fill(time_columns.begin(), time_columns.end(), time_columns_arg);
    } else {
      for (const auto& pair : split_list(time_columns_arg, ',')) {
        auto eq = pair.find('=');
        if (eq == std::string::npos) {
          throw glam::ValidationError("bad --time-columns entry: " + pair);
        }
        int j = spec.alternative_index(pair.substr(0, eq));
        if (j < 0) throw glam::ValidationError("unknown alternative in --time-columns: " + pair);
        time_columns[static_cast<std::size_t>(j)] = pair.substr(eq + 1);
      }
      for (std::size_t j = 0; j < J; ++j) {
        if (time_columns[j].empty()) {
          throw glam::ValidationError("--time-columns misses alternative " +
                                      spec.alternatives[j]);
        }
      }
    }
    auto D = glam::diversion_ratios(model, ds, time_columns, perturbation);
    glam::CsvTable table;
    table.header = {"from_alternative"};
    for (const auto& alt : spec.alternatives) table.header.push_back("to_" + alt);
    for (std::size_t js = 0; js < J; ++js) {
      std::vector<std::string> row = {spec.alternatives[js]};
      for (std::size_t j = 0; j < J; ++j) {
        row.push_back(glam::format_double(
            D.values(static_cast<Eigen::Index>(js), static_cast<Eigen::Index>(j))));
      }
      table.rows.push_back(std::move(row));
      json drow = json::object();
      for (std::size_t j = 0; j < J; ++j) {
        drow[spec.alternatives[j]] =
            D.values(static_cast<Eigen::Index>(js), static_cast<Eigen::Index>(j));
      }
      report["diversion"][spec.alternatives[js]] = std::move(drow);
    }
    glam::write_csv((out / "diversion.csv").string(), table);
  }

  if (!time_param.empty() && !cost_param.empty()) {
    int tp = spec.parameter_index(time_param);
    int cp = spec.parameter_index(cost_param);
    if (tp < 0 || cp < 0) throw glam::ValidationError("unknown time/cost parameter");
    std::map<std::string, std::pair<double, int>> by_segment;
    std::vector<std::string> segment_order;
    int undefined = 0;
    for (std::size_t t = 0; t < ds.observations.size(); ++t) {
      const auto& ap = result.agents[t];
      if (ap.theta.size() == 0) continue;
      auto vot = glam::value_of_time(ap.theta, tp, cp);
      if (!vot) {
        ++undefined;
        continue;
      }
      const auto& seg = ds.observations[t].segment;
      auto [it, inserted] = by_segment.try_emplace(seg, std::pair<double, int>{0.0, 0});
      if (inserted) segment_order.push_back(seg);
      it->second.first += *vot;
      it->second.second += 1;
    }
    glam::CsvTable table;
    table.header = {"segment", "mean_vot", "agents", "undefined_cost_zero"};
    for (const auto& seg : segment_order) {
      const auto& [sum, count] = by_segment[seg];
      table.rows.push_back({seg, glam::format_double(sum / count), std::to_string(count),
                            std::to_string(undefined)});
      report["vot_by_segment"][seg] = sum / count;
    }
    glam::write_csv((out / "vot_by_segment.csv").string(), table);
  }

  if (!cv_remove.empty()) {
    if (cost_param.empty()) {
      throw glam::ValidationError("--cv-remove needs --cost-parameter");
    }
    int removed = spec.alternative_index(cv_remove);
    if (removed < 0) throw glam::ValidationError("unknown alternative " + cv_remove);
    int cp = spec.parameter_index(cost_param);
    std::vector<std::pair<double, double>> samples;  // (cv, demand weight)
    int skipped = 0;
    for (std::size_t t = 0; t < ds.observations.size(); ++t) {
      const auto& ap = result.agents[t];
      if (ap.theta.size() == 0) {
        ++skipped;
        continue;
      }
      auto cv = glam::compensating_variation(ap.theta, ds.observations[t], design, removed, cp);
      if (!cv) {
        ++skipped;
        continue;
      }
      samples.emplace_back(*cv, ds.observations[t].demand);
    }
    std::sort(samples.begin(), samples.end());
    double total = 0.0;
    for (const auto& [cv, w] : samples) total += w;
    glam::CsvTable table;
    table.header = {"cv", "cumulative_fraction"};
    double acc = 0.0;
    for (const auto& [cv, w] : samples) {
      acc += w;
      table.rows.push_back({glam::format_double(cv), glam::format_double(acc / total)});
    }
    glam::write_csv((out / "cv_cdf.csv").string(), table);
    report["cv"] = {{"removed", cv_remove},
                    {"samples", samples.size()},
                    {"skipped", skipped}};
    if (skipped > 0) {
      std::cerr << "cv: skipped " << skipped
                << " agents (no parameters or nonnegative cost coefficient)\n";
    }
  }
  write_json_file((out / "analysis.json").string(), report);
  std::cout << "analysis artifacts written to " << common.out_dir << "\n";
  return 0;
}

int cmd_benchmark(const CommonArgs& common, const std::string& kind_name,
                  const std::string& dimensions, const InstrumentArgs& iv_args,
                  bool force_rho_zero) {
  ensure_out_dir(common.out_dir);
  glam::Dataset ds = load_inputs(common);
  glam::BenchmarkKind kind = glam::benchmark_kind_from_string(kind_name);
  glam::GroupingScheme groups;
  if (!dimensions.empty()) groups = parse_dimensions(dimensions);
  auto iv = build_instruments(ds, iv_args);
  glam::BenchmarkOptions options;
  options.force_rho_zero = force_rho_zero;
  glam::BenchmarkFit fit =
      glam::estimate_benchmark(ds, kind, groups, iv ? &*iv : nullptr, options);

  fs::path out(common.out_dir);
  std::string stem = "benchmark_" + kind_name;
  write_json_file((out / (stem + ".json")).string(), glam::benchmark_fit_to_json(fit));

  glam::CsvTable table;
  table.header = {"coefficient", "estimate", "standard_error"};
  for (std::size_t i = 0; i < fit.coefficient_names.size(); ++i) {
    std::string se;
    for (std::size_t c = 0; c < fit.fit.column_names.size(); ++c) {
      if (fit.fit.column_names[c] == fit.coefficient_names[i]) {
        se = glam::format_double(fit.fit.standard_errors[static_cast<Eigen::Index>(c)]);
      }
    }
    table.rows.push_back({fit.coefficient_names[i],
                          glam::format_double(fit.coefficients[static_cast<Eigen::Index>(i)]),
                          se});
  }
  glam::write_csv((out / (stem + ".csv")).string(), table);
  std::cout << kind_name << ": " << fit.fit.n_obs << " rows, r^2=" << fit.fit.r_squared
            << ", excluded zero-share rows=" << fit.excluded_zero_share_rows << "\n";
  return 0;
}

int cmd_optimize_discount(const CommonArgs& common, const std::string& result_path,
                          glam::DiscountOptions options, bool use_heuristic) {
  ensure_out_dir(common.out_dir);
  glam::ModelSpec spec = glam::load_spec_json(common.spec_path);
  glam::Dataset ds = glam::load_dataset_csv(common.data_path, spec);
  glam::EstimationResult result = glam::load_estimation_result(result_path, ds);
  std::vector<glam::Vector> thetas;
  for (std::size_t t = 0; t < ds.observations.size(); ++t) {
    if (result.agents[t].theta.size() == 0) {
      throw glam::ValidationError("agent " + ds.observations[t].agent_id +
                                  " has no estimated parameters; estimate or transfer first");
    }
    thetas.push_back(result.agents[t].theta);
  }
  options.threads = common.threads;
  glam::DiscountInstance inst = glam::precompute_discount_shares(thetas, ds, options);
  glam::DiscountSolution sol = (use_heuristic || inst.regions.size() > 64)
                                   ? glam::solve_bp_heuristic(inst)
                                   : glam::solve_bp_exact(inst);

  double base_ridership = 0.0, base_revenue = 0.0, after_revenue = 0.0;
  for (std::size_t r = 0; r < inst.regions.size(); ++r) {
    bool selected = std::find(sol.selected_regions.begin(), sol.selected_regions.end(),
                              inst.regions[r]) != sol.selected_regions.end();
    for (int t : inst.agents_by_region[r]) {
      base_ridership += inst.share_without[t] * inst.demand[t];
      base_revenue += inst.fare[t] * inst.share_without[t] * inst.demand[t];
      double fare = selected ? (1.0 - inst.discount_rate) * inst.fare[t] : inst.fare[t];
      double share = selected ? inst.share_with[t] : inst.share_without[t];
      after_revenue += fare * share * inst.demand[t];
    }
  }

  fs::path out(common.out_dir);
  write_json_file((out / "discount_instance.json").string(),
                  glam::discount_instance_to_json(inst));
  write_json_file((out / "discount_solution.json").string(),
                  glam::discount_solution_to_json(sol));
  glam::CsvTable table;
  table.header = {"total_ridership", "total_revenue", "change_of_ridership",
                  "change_of_revenue", "selected_regions"};
  std::string selected;
  for (const auto& region : sol.selected_regions) {
    if (!selected.empty()) selected += '|';
    selected += region;
  }
  table.rows.push_back({glam::format_double(sol.objective_ridership),
                        glam::format_double(after_revenue),
                        glam::format_double(sol.ridership_gain),
                        glam::format_double(after_revenue - base_revenue), selected});
  glam::write_csv((out / "discount_summary.csv").string(), table);
  std::cout << "selected " << sol.selected_regions.size() << " regions; ridership "
            << base_ridership << " -> " << sol.objective_ridership << " (+"
            << sol.ridership_gain << " trips/day), revenue change "
            << after_revenue - base_revenue << "/day\n";
  return 0;
}

// Pre-scan for --config and return flag defaults from the JSON file.
json load_run_config(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    std::string path;
    if (arg == "--config" && i + 1 < argc) {
      path = argv[i + 1];
    } else if (arg.rfind("--config=", 0) == 0) {
      path = arg.substr(9);
    }
    if (!path.empty()) return glam::read_json_file(path);
  }
  return json::object();
}

template <typename T>
void from_config(const json& cfg, const std::string& key, T& target) {
  if (cfg.contains(key)) target = cfg.at(key).get<T>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Market-level k-modal mixed logit estimation and analysis"};
  app.require_subcommand(1);

  json run_cfg;
  try {
    run_cfg = load_run_config(argc, argv);
  } catch (const glam::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::string config_path;
  app.add_option("--config", config_path, "JSON run config; explicit flags win");

  CommonArgs common;
  common.out_dir = default_out_dir();
  from_config(run_cfg, "data", common.data_path);
  from_config(run_cfg, "spec", common.spec_path);
  from_config(run_cfg, "out", common.out_dir);
  from_config(run_cfg, "threads", common.threads);

  auto add_common = [&common, &config_path](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run config; explicit flags win");
    auto* data = cmd->add_option("--data", common.data_path, "markets CSV");
    auto* spec = cmd->add_option("--spec", common.spec_path, "model spec JSON");
    cmd->add_option("--out", common.out_dir, "output directory");
    cmd->add_option("--threads", common.threads, "worker threads (0 = all cores)");
    if (common.data_path.empty()) data->required();
    if (common.spec_path.empty()) spec->required();
  };

  auto* validate = app.add_subcommand("validate", "check a dataset against a spec");
  add_common(validate);

  auto* estimate = app.add_subcommand("estimate", "fit agent-level parameters");
  glam::EstimatorConfig ecfg;
  from_config(run_cfg, "clusters", ecfg.clusters);
  from_config(run_cfg, "tol", ecfg.tol);
  from_config(run_cfg, "seed", ecfg.seed);
  from_config(run_cfg, "max_iterations", ecfg.max_iterations);
  from_config(run_cfg, "convergence_threshold", ecfg.convergence_threshold);
  from_config(run_cfg, "max_tol_doublings", ecfg.max_tol_doublings);
  from_config(run_cfg, "bootstrap_resamples", ecfg.bootstrap_resamples);
  InstrumentArgs iv_args;
  from_config(run_cfg, "iv_columns", iv_args.columns);
  from_config(run_cfg, "iv_dimensions", iv_args.dimensions);
  from_config(run_cfg, "iv_attr_columns", iv_args.attr_columns);
  add_common(estimate);
  estimate->add_option("--clusters", ecfg.clusters, "number of taste clusters M");
  estimate->add_option("--tol", ecfg.tol, "log-share-ratio tolerance band");
  estimate->add_option("--seed", ecfg.seed, "random seed");
  estimate->add_option("--max-iterations", ecfg.max_iterations, "iteration cap");
  estimate->add_option("--convergence-threshold", ecfg.convergence_threshold,
                       "relative prior change to stop at");
  estimate->add_option("--max-tol-doublings", ecfg.max_tol_doublings,
                       "tolerance doublings before marking an agent infeasible");
  estimate->add_option("--bootstrap", ecfg.bootstrap_resamples,
                       "bootstrap resamples for cluster-mean standard errors");
  estimate->add_option("--iv-columns", iv_args.columns,
                       "comma-separated instrument columns for the control function");
  estimate->add_option("--iv-dimensions", iv_args.dimensions,
                       "differentiation-instrument dimensions, e.g. auto:a|b,c|d;wait:a|c");
  estimate->add_option("--iv-attr-columns", iv_args.attr_columns,
                       "columns averaged into differentiation instruments");

  auto* evaluate = app.add_subcommand("evaluate", "accuracy metrics, with KNN transfer");
  std::string result_path, test_path;
  from_config(run_cfg, "result", result_path);
  from_config(run_cfg, "test_data", test_path);
  int knn_min = 1, knn_max = 5;
  from_config(run_cfg, "knn_min", knn_min);
  from_config(run_cfg, "knn_max", knn_max);
  std::string benchmark_fits;
  from_config(run_cfg, "benchmark_fits", benchmark_fits);
  add_common(evaluate);
  evaluate->add_option("--result", result_path, "estimation result JSON")
      ->required(result_path.empty());
  evaluate->add_option("--test-data", test_path, "held-out markets CSV");
  evaluate->add_option("--knn-min", knn_min, "smallest K for the transfer sweep");
  evaluate->add_option("--knn-max", knn_max, "largest K for the transfer sweep");
  evaluate->add_option("--benchmark-fits", benchmark_fits,
                       "comma-separated benchmark fit JSON files to score");

  auto* analyze = app.add_subcommand("analyze", "elasticities, diversion, VOT, CV");
  std::string price_column, price_alts, time_columns, time_param, cost_param, cv_remove;
  double perturbation = 0.01;
  from_config(run_cfg, "price_column", price_column);
  from_config(run_cfg, "price_alternatives", price_alts);
  from_config(run_cfg, "time_columns", time_columns);
  from_config(run_cfg, "time_parameter", time_param);
  from_config(run_cfg, "cost_parameter", cost_param);
  from_config(run_cfg, "cv_remove", cv_remove);
  from_config(run_cfg, "perturbation", perturbation);
  add_common(analyze);
  analyze->add_option("--result", result_path, "estimation result JSON")
      ->required(result_path.empty());
  analyze->add_option("--price-column", price_column, "price column for elasticities");
  analyze->add_option("--price-alternatives", price_alts,
                      "comma-separated alternatives to perturb (default: all)");
  analyze->add_option("--time-columns", time_columns,
                      "time column (one name, or alt=col pairs) for diversion");
  analyze->add_option("--time-parameter", time_param, "time parameter for VOT");
  analyze->add_option("--cost-parameter", cost_param, "cost parameter for VOT and CV");
  analyze->add_option("--cv-remove", cv_remove, "alternative removed for the CV CDF");
  analyze->add_option("--perturbation", perturbation, "arc perturbation fraction");

  auto* benchmark = app.add_subcommand("benchmark", "fit MNL/NL/IPDL by inverted-share 2SLS");
  std::string kind = "mnl", dimensions;
  bool force_rho_zero = false;
  from_config(run_cfg, "kind", kind);
  from_config(run_cfg, "dimensions", dimensions);
  add_common(benchmark);
  benchmark->add_option("--kind", kind, "mnl, nl, or ipdl");
  benchmark->add_option("--dimensions", dimensions, "grouping dimensions (see --iv-dimensions)");
  benchmark->add_option("--iv-columns", iv_args.columns, "explicit instrument columns");
  benchmark->add_option("--iv-dimensions", iv_args.dimensions,
                        "differentiation-instrument dimensions");
  benchmark->add_option("--iv-attr-columns", iv_args.attr_columns,
                        "columns averaged into differentiation instruments");
  benchmark->add_flag("--force-rho-zero", force_rho_zero, "pin grouping coefficients at zero");

  auto* discount =
      app.add_subcommand("optimize-discount", "pick regions for a fare discount under a budget");
  glam::DiscountOptions dopt;
  bool heuristic = false;
  from_config(run_cfg, "transit_alternative", dopt.transit_alternative);
  from_config(run_cfg, "fare_column", dopt.fare_column);
  from_config(run_cfg, "discount_rate", dopt.discount_rate);
  from_config(run_cfg, "max_regions", dopt.max_regions);
  from_config(run_cfg, "budget", dopt.budget);
  from_config(run_cfg, "demand_weighted_budget", dopt.demand_weighted_budget);
  add_common(discount);
  discount->add_option("--result", result_path, "estimation result JSON")
      ->required(result_path.empty());
  discount->add_option("--transit-alternative", dopt.transit_alternative,
                       "alternative receiving the discount")
      ->required(dopt.transit_alternative.empty());
  discount->add_option("--fare-column", dopt.fare_column, "fare attribute column")
      ->required(dopt.fare_column.empty());
  discount->add_option("--discount-rate", dopt.discount_rate, "fare discount fraction");
  discount->add_option("--max-regions", dopt.max_regions, "cap on selected regions (O)");
  discount->add_option("--budget", dopt.budget, "revenue-loss budget per day (B)");
  discount->add_flag("--demand-weighted-budget", dopt.demand_weighted_budget,
                     "weight the budget charge by current transit ridership");
  discount->add_flag("--heuristic", heuristic, "force the greedy solver");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(validate)) {
      glam::Dataset ds = load_inputs(common);
      std::cout << "ok: " << ds.observations.size() << " agents, "
                << ds.spec.alternatives.size() << " alternatives, " << ds.columns.size()
                << " attribute columns\n";
      return 0;
    }
    if (app.got_subcommand(estimate)) {
      ecfg.threads = common.threads;
      return cmd_estimate(common, ecfg, iv_args);
    }
    if (app.got_subcommand(evaluate)) {
      return cmd_evaluate(common, result_path, test_path, knn_min, knn_max,
                          benchmark_fits.empty() ? std::vector<std::string>{}
                                                 : split_list(benchmark_fits, ','));
    }
    if (app.got_subcommand(analyze)) {
      return cmd_analyze(common, result_path, price_column, price_alts, time_columns, time_param,
                         cost_param, cv_remove, perturbation);
    }
    if (app.got_subcommand(benchmark)) {
      return cmd_benchmark(common, kind, dimensions, iv_args, force_rho_zero);
    }
    if (app.got_subcommand(discount)) {
      return cmd_optimize_discount(common, result_path, dopt, heuristic);
    }
  } catch (const glam::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const glam::EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return 3;
  } catch (const glam::OptimizationError& e) {
    std::cerr << "optimization error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
