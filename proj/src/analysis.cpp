#include "glam/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

namespace glam {

Vector predict_shares(const Vector& theta, const MarketObservation& obs,
                      const CompiledDesign& design) {
  Matrix X = design.rows(obs);
  Vector v = X * theta;
  if (!v.allFinite()) {
    throw EstimationError("predict_shares: non-finite utility for agent " + obs.agent_id);
  }
  // Softmax with max-shift for overflow safety.
  double shift = v.maxCoeff();
  Vector e = (v.array() - shift).exp();
  return e / e.sum();
}

SharePredictor glam_predictor(const EstimationResult& result, const Dataset& ds) {
  auto design = std::make_shared<CompiledDesign>(compile_design(ds.spec, ds.columns));
  auto table = std::make_shared<std::map<std::string, Vector>>();
  for (std::size_t t = 0; t < ds.observations.size(); ++t) {
    const auto& ap = result.agents.at(t);
    if (ap.theta.size() > 0) (*table)[ds.observations[t].agent_id] = ap.theta;
  }
  return [design, table](const MarketObservation& obs) {
    auto it = table->find(obs.agent_id);
    if (it == table->end()) {
      throw EstimationError("no estimated parameters for agent " + obs.agent_id);
    }
    return predict_shares(it->second, obs, *design);
  };
}

SharePredictor theta_table_predictor(const std::vector<std::string>& agent_ids,
                                     const std::vector<Vector>& thetas,
                                     const CompiledDesign& design) {
  if (agent_ids.size() != thetas.size()) {
    throw ValidationError("theta table: id/theta length mismatch");
  }
  auto d = std::make_shared<CompiledDesign>(design);
  auto table = std::make_shared<std::map<std::string, Vector>>();
  for (std::size_t i = 0; i < agent_ids.size(); ++i) (*table)[agent_ids[i]] = thetas[i];
  return [d, table](const MarketObservation& obs) {
    auto it = table->find(obs.agent_id);
    if (it == table->end()) {
      throw EstimationError("no parameters for agent " + obs.agent_id);
    }
    return predict_shares(it->second, obs, *d);
  };
}

PredictionReport accuracy_metrics(const std::vector<Vector>& predicted,
                                  const std::vector<Vector>& observed, int k_dof) {
  if (predicted.size() != observed.size() || predicted.empty()) {
    throw ValidationError("accuracy_metrics: misaligned or empty inputs");
  }
  const auto T = predicted.size();
  const auto J = predicted.front().size();
  PredictionReport report;
  report.n_agents = static_cast<int>(T);
  report.k_dof = k_dof;
  report.per_alternative_mae = Vector::Zero(J);

  double abs_err = 0.0;
  double oa = 0.0;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  const double uniform = 1.0 / static_cast<double>(J);
  for (std::size_t t = 0; t < T; ++t) {
    if (predicted[t].size() != J || observed[t].size() != J) {
      throw ValidationError("accuracy_metrics: ragged share vectors");
    }
    double min_sum = 0.0;
    for (Eigen::Index j = 0; j < J; ++j) {
      double d = predicted[t][j] - observed[t][j];
      abs_err += std::abs(d);
      report.per_alternative_mae[j] += std::abs(d);
      min_sum += std::min(predicted[t][j], observed[t][j]);
      ss_res += d * d;
      double d0 = observed[t][j] - uniform;
      ss_tot += d0 * d0;
    }
    oa += min_sum;
  }
  report.mae = abs_err / static_cast<double>(T * J);
  report.per_alternative_mae /= static_cast<double>(T);
  report.overall_accuracy = oa / static_cast<double>(T);
  const auto n = static_cast<double>(T);
  if (static_cast<int>(T) > k_dof && T > 1 && ss_tot > 0.0) {
    report.adjusted_r_square =
        1.0 - (ss_res / (n - k_dof)) / (ss_tot / (n - 1.0));
  }
  return report;
}

ElasticityColumn price_elasticity(const SharePredictor& model, const Dataset& ds,
                                  const std::string& target_column, int target_alternative,
                                  double perturbation) {
  if (!(perturbation > 0.0)) throw ValidationError("elasticity: perturbation must be > 0");
  int col = ds.column_index(target_column);
  if (col < 0) throw ValidationError("elasticity: column " + target_column + " not in dataset");
  const auto J = static_cast<Eigen::Index>(ds.spec.alternatives.size());
  ElasticityColumn out;
  out.values = Vector::Zero(J);
  out.excluded_per_alternative.assign(J, 0);
  Vector counts = Vector::Zero(J);

  for (const auto& obs : ds.observations) {
    double price = obs.attributes(target_alternative, col);
    if (price == 0.0) {
      out.excluded_zero_price += 1;
      continue;
    }
    Vector base = model(obs);
    MarketObservation bumped = obs;
    bumped.attributes(target_alternative, col) = price * (1.0 + perturbation);
    Vector shifted = model(bumped);
    out.agents_used += 1;
    for (Eigen::Index j = 0; j < J; ++j) {
      if (base[j] == 0.0) {
        out.excluded_per_alternative[j] += 1;
        continue;
      }
      out.values[j] += ((shifted[j] - base[j]) / base[j]) / perturbation;
      counts[j] += 1.0;
    }
  }
  if (out.agents_used == 0) {
    throw EstimationError("elasticity: all agents excluded (zero price for target)");
  }
  for (Eigen::Index j = 0; j < J; ++j) {
    out.values[j] = counts[j] > 0 ? out.values[j] / counts[j] : 0.0;
  }
  return out;
}

DiversionMatrix diversion_ratios(const SharePredictor& model, const Dataset& ds,
                                 const std::vector<std::string>& time_columns,
                                 double perturbation) {
  if (!(perturbation > 0.0)) throw ValidationError("diversion: perturbation must be > 0");
  const auto J = static_cast<Eigen::Index>(ds.spec.alternatives.size());
  if (time_columns.size() != static_cast<std::size_t>(J)) {
    throw ValidationError("diversion: need one time column per alternative");
  }
  std::vector<int> cols;
  for (const auto& name : time_columns) {
    int c = ds.column_index(name);
    if (c < 0) throw ValidationError("diversion: column " + name + " not in dataset");
    cols.push_back(c);
  }
  DiversionMatrix out;
  out.values = Matrix::Zero(J, J);
  out.excluded.assign(J, std::vector<int>(J, 0));

  for (Eigen::Index js = 0; js < J; ++js) {
    Vector sums = Vector::Zero(J);
    double used = 0.0;
    int excluded_row = 0;
    for (const auto& obs : ds.observations) {
      Vector base = model(obs);
      MarketObservation bumped = obs;
      bumped.attributes(js, cols[js]) *= (1.0 + perturbation);
      Vector shifted = model(bumped);
      double denom = shifted[js] - base[js];
      if (denom == 0.0) {
        excluded_row += 1;
        continue;
      }
      for (Eigen::Index j = 0; j < J; ++j) {
        if (j == js) continue;
        sums[j] += -(shifted[j] - base[j]) / denom;
      }
      used += 1.0;
    }
    if (used == 0.0) {
      throw EstimationError("diversion: every agent excluded for alternative " +
                            ds.spec.alternatives[js]);
    }
    for (Eigen::Index j = 0; j < J; ++j) {
      out.values(js, j) = j == js ? -1.0 : sums[j] / used;
      if (j != js) out.excluded[js][j] = excluded_row;
    }
  }
  return out;
}

std::optional<double> value_of_time(const Vector& theta, int time_param, int cost_param) {
  double cost = theta[cost_param];
  if (cost == 0.0) return std::nullopt;
  return theta[time_param] / cost;
}

std::optional<double> compensating_variation(const Vector& theta, const MarketObservation& obs,
                                             const CompiledDesign& design, int removed_alternative,
                                             int cost_param) {
  double cost_coeff = theta[cost_param];
  if (!(cost_coeff < 0.0)) return std::nullopt;
  Matrix X = design.rows(obs);
  Vector v = X * theta;
  if (!v.allFinite()) {
    throw EstimationError("compensating_variation: non-finite utility for agent " + obs.agent_id);
  }
  const auto J = v.size();
  if (J < 2) throw ValidationError("compensating_variation: need at least two alternatives");
  auto logsum = [&v](int skip) {
    double shift = -kInf;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (j != skip) shift = std::max(shift, v[j]);
    }
    double acc = 0.0;
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (j != skip) acc += std::exp(v[j] - shift);
    }
    return shift + std::log(acc);
  };
  return (logsum(removed_alternative) - logsum(-1)) / cost_coeff;
}

std::vector<Vector> knn_transfer(const EstimationResult& trained, const Dataset& train_ds,
                                 const std::vector<MarketObservation>& new_agents, int k) {
  if (k < 1) throw ValidationError("knn: k must be >= 1");
  // Candidates are training agents with a feasible theta, grouped by segment.
  struct Candidate {
    std::array<double, 4> xy;
    const Vector* theta;
    const std::string* agent_id;
  };
  std::map<std::string, std::vector<Candidate>> by_segment;
  for (std::size_t t = 0; t < train_ds.observations.size(); ++t) {
    const auto& ap = trained.agents.at(t);
    if (ap.theta.size() == 0 || ap.status == QPStatus::infeasible) continue;
    const auto& obs = train_ds.observations[t];
    by_segment[obs.segment].push_back(
        {{obs.origin[0], obs.origin[1], obs.destination[0], obs.destination[1]},
         &ap.theta,
         &obs.agent_id});
  }

  std::vector<Vector> out;
  out.reserve(new_agents.size());
  for (const auto& agent : new_agents) {
    auto it = by_segment.find(agent.segment);
    if (it == by_segment.end()) {
      throw EstimationError("knn: segment '" + agent.segment + "' unseen in training");
    }
    const auto& cands = it->second;
    if (static_cast<int>(cands.size()) < k) {
      throw EstimationError("knn: segment '" + agent.segment + "' has only " +
                            std::to_string(cands.size()) + " trained agents, need " +
                            std::to_string(k));
    }
    std::array<double, 4> q{agent.origin[0], agent.origin[1], agent.destination[0],
                            agent.destination[1]};
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
      double d = 0.0;
      for (int c = 0; c < 4; ++c) {
        double diff = cands[i].xy[c] - q[c];
        d += diff * diff;
      }
      dist.emplace_back(d, i);
    }
    // Distance ties break by agent_id so the result does not depend on
    // training-set order.
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end(),
                      [&cands](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first < b.first;
                        return *cands[a.second].agent_id < *cands[b.second].agent_id;
                      });
    Vector mean = Vector::Zero(cands.front().theta->size());
    for (int i = 0; i < k; ++i) mean += *cands[dist[i].second].theta;
    out.push_back(mean / static_cast<double>(k));
  }
  return out;
}

}  // namespace glam
