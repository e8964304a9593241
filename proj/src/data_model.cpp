#include "glam/data_model.hpp"

#include "glam/csv.hpp"
#include "glam/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace glam {

namespace {

constexpr double kShareSumTol = 1e-9;

const std::vector<std::string>& fixed_columns() {
  static const std::vector<std::string> cols = {
      "agent_id", "segment",       "region_id",     "origin_x", "origin_y",
      "destination_x", "destination_y", "alternative", "share",   "demand"};
  return cols;
}

}  // namespace

int ModelSpec::parameter_index(const std::string& name) const {
  for (std::size_t i = 0; i < parameter_names.size(); ++i) {
    if (parameter_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int ModelSpec::alternative_index(const std::string& name) const {
  for (std::size_t i = 0; i < alternatives.size(); ++i) {
    if (alternatives[i] == name) return static_cast<int>(i);
  }
  return -1;
}

double ModelSpec::column_scale(const std::string& column) const {
  auto it = column_scales.find(column);
  return it == column_scales.end() ? 1.0 : it->second;
}

std::vector<std::string> ModelSpec::design_columns() const {
  std::vector<std::string> cols;
  for (const auto& alt : design) {
    for (const auto& [param, column] : alt) {
      if (column == kConstantColumn) continue;
      if (std::find(cols.begin(), cols.end(), column) == cols.end()) cols.push_back(column);
    }
  }
  return cols;
}

std::optional<std::string> ModelSpec::control_column() const {
  if (!control_parameter) return std::nullopt;
  for (const auto& alt : design) {
    auto it = alt.find(*control_parameter);
    if (it != alt.end() && it->second != kConstantColumn) return it->second;
  }
  return std::nullopt;
}

bool ModelSpec::has_constant(int j) const {
  for (const auto& [param, column] : design[j]) {
    if (column == kConstantColumn) return true;
  }
  return false;
}

void ModelSpec::validate() const {
  if (parameter_names.empty()) throw ValidationError("spec: no parameters");
  if (alternatives.empty()) throw ValidationError("spec: no alternatives");
  if (bounds.size() != parameter_names.size()) {
    throw ValidationError("spec: bounds length does not match parameter count");
  }
  if (design.size() != alternatives.size()) {
    throw ValidationError("spec: design must have one entry per alternative");
  }
  std::set<std::string> seen;
  for (const auto& p : parameter_names) {
    if (!seen.insert(p).second) throw ValidationError("spec: duplicate parameter " + p);
  }
  seen.clear();
  for (const auto& a : alternatives) {
    if (!seen.insert(a).second) throw ValidationError("spec: duplicate alternative " + a);
  }
  for (std::size_t k = 0; k < bounds.size(); ++k) {
    if (bounds[k].lower > bounds[k].upper) {
      throw ValidationError("spec: lower bound exceeds upper bound for parameter " +
                            parameter_names[k]);
    }
  }
  std::set<std::string> used;
  for (std::size_t j = 0; j < design.size(); ++j) {
    for (const auto& [param, column] : design[j]) {
      if (parameter_index(param) < 0) {
        throw ValidationError("spec: design of " + alternatives[j] +
                              " references unknown parameter " + param);
      }
      used.insert(param);
    }
  }
  for (const auto& p : parameter_names) {
    if (!used.count(p)) {
      throw ValidationError("spec: parameter " + p + " appears in no alternative's design");
    }
  }
  bool any_without_constant = false;
  for (std::size_t j = 0; j < design.size(); ++j) {
    if (!has_constant(static_cast<int>(j))) any_without_constant = true;
  }
  if (!any_without_constant) {
    throw ValidationError(
        "spec: every alternative carries a constant; at least one must have none "
        "(identification)");
  }
  if (endogenous_column.has_value() != control_parameter.has_value()) {
    throw ValidationError(
        "spec: endogenous_column and control_parameter must be set together");
  }
  if (control_parameter) {
    if (parameter_index(*control_parameter) < 0) {
      throw ValidationError("spec: control_parameter " + *control_parameter + " is unknown");
    }
    std::optional<std::string> col;
    for (const auto& alt : design) {
      auto it = alt.find(*control_parameter);
      if (it == alt.end()) continue;
      if (it->second == kConstantColumn) {
        throw ValidationError("spec: control_parameter must be fed by a column, not a constant");
      }
      if (col && *col != it->second) {
        throw ValidationError("spec: control_parameter maps to more than one column");
      }
      col = it->second;
    }
    if (!col) {
      throw ValidationError("spec: control_parameter appears in no alternative's design");
    }
    if (*col == *endogenous_column) {
      throw ValidationError("spec: control column must differ from the endogenous column");
    }
    bool endog_used = false;
    for (const auto& alt : design) {
      for (const auto& [param, column] : alt) {
        if (column == *endogenous_column) endog_used = true;
      }
    }
    if (!endog_used) {
      throw ValidationError("spec: endogenous_column " + *endogenous_column +
                            " feeds no parameter");
    }
  }
  if (reference_alternative) {
    int j = alternative_index(*reference_alternative);
    if (j < 0) {
      throw ValidationError("spec: reference_alternative " + *reference_alternative +
                            " is not an alternative");
    }
    if (has_constant(j)) {
      throw ValidationError("spec: reference_alternative " + *reference_alternative +
                            " must carry no alternative-specific constant");
    }
  }
}

int Dataset::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void Dataset::validate() const {
  spec.validate();
  for (const auto& col : spec.design_columns()) {
    if (column_index(col) < 0) {
      // The control column is computed by the first stage and may be absent.
      auto control = spec.control_column();
      if (control && *control == col) continue;
      throw ValidationError("dataset: design column " + col + " is missing");
    }
  }
  const auto n_alts = static_cast<Eigen::Index>(spec.alternatives.size());
  std::set<std::string> ids;
  for (const auto& obs : observations) {
    if (!ids.insert(obs.agent_id).second) {
      throw ValidationError("dataset: duplicate agent_id " + obs.agent_id);
    }
    if (obs.shares.size() != n_alts) {
      throw ValidationError("dataset: agent " + obs.agent_id + " has " +
                            std::to_string(obs.shares.size()) + " shares, expected " +
                            std::to_string(n_alts));
    }
    if (obs.attributes.rows() != n_alts ||
        obs.attributes.cols() != static_cast<Eigen::Index>(columns.size())) {
      throw ValidationError("dataset: agent " + obs.agent_id + " attribute matrix shape mismatch");
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < obs.shares.size(); ++j) {
      double s = obs.shares[j];
      if (!(s >= 0.0 && s <= 1.0)) {
        throw ValidationError("dataset: agent " + obs.agent_id + " share for " +
                              spec.alternatives[j] + " outside [0,1]");
      }
      sum += s;
    }
    if (std::abs(sum - 1.0) > kShareSumTol) {
      throw ValidationError("dataset: agent " + obs.agent_id + " shares sum to " +
                            format_double(sum) + ", expected 1");
    }
    if (!obs.attributes.allFinite()) {
      throw ValidationError("dataset: agent " + obs.agent_id + " has non-finite attributes");
    }
    if (!(obs.demand >= 0.0)) {
      throw ValidationError("dataset: agent " + obs.agent_id + " has negative demand");
    }
  }
}

Matrix CompiledDesign::rows(const MarketObservation& obs) const {
  Matrix X = Matrix::Zero(n_alternatives, n_params);
  for (int j = 0; j < n_alternatives; ++j) {
    for (const auto& [param, col] : terms[j]) {
      X(j, param) += col < 0 ? 1.0 : obs.attributes(j, col) * scales[col];
    }
  }
  return X;
}

CompiledDesign compile_design(const ModelSpec& spec, const std::vector<std::string>& columns) {
  CompiledDesign cd;
  cd.n_params = static_cast<int>(spec.parameter_names.size());
  cd.n_alternatives = static_cast<int>(spec.alternatives.size());
  cd.bounds = spec.bounds;
  cd.scales.resize(columns.size(), 1.0);
  for (std::size_t c = 0; c < columns.size(); ++c) cd.scales[c] = spec.column_scale(columns[c]);
  cd.terms.resize(spec.alternatives.size());
  auto find_col = [&columns](const std::string& name) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  for (std::size_t j = 0; j < spec.design.size(); ++j) {
    for (const auto& [param, column] : spec.design[j]) {
      int p = spec.parameter_index(param);
      int c = -1;
      if (column != kConstantColumn) {
        c = find_col(column);
        if (c < 0) throw ValidationError("design column " + column + " not found in dataset");
      }
      cd.terms[j].emplace_back(p, c);
    }
  }
  return cd;
}

Dataset load_dataset_csv(const std::string& path, const ModelSpec& spec) {
  spec.validate();
  CsvTable table = read_csv(path);
  if (table.rows.empty()) throw ValidationError(path + ": no observations");

  std::vector<int> fixed_idx;
  for (const auto& name : fixed_columns()) {
    int idx = table.column(name);
    if (idx < 0) throw ValidationError(path + ": missing required column " + name);
    fixed_idx.push_back(idx);
  }
  Dataset ds;
  ds.spec = spec;
  std::vector<int> attr_idx;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    const auto& name = table.header[i];
    if (std::find(fixed_columns().begin(), fixed_columns().end(), name) == fixed_columns().end()) {
      ds.columns.push_back(name);
      attr_idx.push_back(static_cast<int>(i));
    }
  }

  const int n_alts = static_cast<int>(spec.alternatives.size());
  const int n_cols = static_cast<int>(ds.columns.size());

  // Group rows by agent in first-appearance order.
  std::vector<std::string> agent_order;
  std::map<std::string, std::vector<int>> agent_rows;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string& id = table.rows[r][fixed_idx[0]];
    auto [it, inserted] = agent_rows.try_emplace(id);
    if (inserted) agent_order.push_back(id);
    it->second.push_back(static_cast<int>(r));
  }

  for (const auto& id : agent_order) {
    const auto& rows = agent_rows[id];
    MarketObservation obs;
    obs.agent_id = id;
    obs.attributes = Matrix::Zero(n_alts, n_cols);
    obs.shares = Vector::Zero(n_alts);
    std::vector<bool> seen(n_alts, false);
    bool first_row = true;
    for (int r : rows) {
      const auto& row = table.rows[r];
      const std::string& alt_name = row[fixed_idx[7]];
      int j = spec.alternative_index(alt_name);
      if (j < 0) {
        throw ValidationError("agent " + id + ": unknown alternative '" + alt_name + "'");
      }
      if (seen[j]) {
        throw ValidationError("agent " + id + ": duplicate row for alternative " + alt_name);
      }
      seen[j] = true;
      auto ctx = [&](const std::string& col) { return "agent " + id + ", column " + col; };
      if (first_row) {
        obs.segment = row[fixed_idx[1]];
        obs.region_id = row[fixed_idx[2]];
        obs.origin = {parse_double(row[fixed_idx[3]], ctx("origin_x")),
                      parse_double(row[fixed_idx[4]], ctx("origin_y"))};
        obs.destination = {parse_double(row[fixed_idx[5]], ctx("destination_x")),
                           parse_double(row[fixed_idx[6]], ctx("destination_y"))};
        obs.demand = parse_double(row[fixed_idx[9]], ctx("demand"));
        first_row = false;
      } else if (row[fixed_idx[1]] != obs.segment) {
        throw ValidationError("agent " + id + ": inconsistent segment across rows");
      }
      obs.shares[j] = parse_double(row[fixed_idx[8]], ctx("share"));
      for (int c = 0; c < n_cols; ++c) {
        obs.attributes(j, c) = parse_double(row[attr_idx[c]], ctx(ds.columns[c]));
      }
    }
    for (int j = 0; j < n_alts; ++j) {
      if (!seen[j]) {
        throw ValidationError("agent " + id + ": missing alternative " + spec.alternatives[j]);
      }
    }
    ds.observations.push_back(std::move(obs));
  }
  ds.validate();
  return ds;
}

void write_dataset_csv(const Dataset& dataset, const std::string& path) {
  CsvTable table;
  table.header = fixed_columns();
  for (const auto& col : dataset.columns) table.header.push_back(col);
  for (const auto& obs : dataset.observations) {
    for (std::size_t j = 0; j < dataset.spec.alternatives.size(); ++j) {
      std::vector<std::string> row = {
          obs.agent_id,
          obs.segment,
          obs.region_id,
          format_double(obs.origin[0]),
          format_double(obs.origin[1]),
          format_double(obs.destination[0]),
          format_double(obs.destination[1]),
          dataset.spec.alternatives[j],
          format_double(obs.shares[static_cast<Eigen::Index>(j)]),
          format_double(obs.demand)};
      for (std::size_t c = 0; c < dataset.columns.size(); ++c) {
        row.push_back(format_double(obs.attributes(j, c)));
      }
      table.rows.push_back(std::move(row));
    }
  }
  write_csv(path, table);
}

Dataset aggregate_trips(
    const std::vector<TripRecord>& trips, const ModelSpec& spec,
    const std::vector<std::string>& columns,
    const std::map<std::string, std::map<std::string, double>>* fallback_attributes) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  ds.columns = columns;
  const int n_alts = static_cast<int>(spec.alternatives.size());
  const int n_cols = static_cast<int>(columns.size());

  struct Group {
    std::vector<int> trip_idx;
  };
  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  auto key_of = [](const TripRecord& t) {
    return t.segment + ":" + t.origin_zone + ":" + t.destination_zone;
  };
  for (std::size_t i = 0; i < trips.size(); ++i) {
    std::string key = key_of(trips[i]);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.trip_idx.push_back(static_cast<int>(i));
  }

  auto col_index = [&columns](const std::string& name) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return static_cast<int>(i);
    }
    return -1;
  };

  for (const auto& key : order) {
    const auto& group = groups[key];
    MarketObservation obs;
    obs.agent_id = key;
    const TripRecord& first = trips[group.trip_idx.front()];
    obs.segment = first.segment;
    obs.region_id = first.region_id;
    obs.attributes = Matrix::Zero(n_alts, n_cols);
    obs.shares = Vector::Zero(n_alts);
    obs.demand = static_cast<double>(group.trip_idx.size());

    Matrix sums = Matrix::Zero(n_alts, n_cols);
    Matrix counts = Matrix::Zero(n_alts, n_cols);
    std::array<double, 2> o{0, 0}, d{0, 0};
    for (int i : group.trip_idx) {
      const TripRecord& trip = trips[i];
      int chosen = spec.alternative_index(trip.chosen);
      if (chosen < 0) {
        throw ValidationError("trip in group " + key + " chose unknown alternative " +
                              trip.chosen);
      }
      obs.shares[chosen] += 1.0;
      o[0] += trip.origin[0];
      o[1] += trip.origin[1];
      d[0] += trip.destination[0];
      d[1] += trip.destination[1];
      for (const auto& [alt, values] : trip.attributes) {
        int j = spec.alternative_index(alt);
        if (j < 0) continue;
        for (const auto& [col, value] : values) {
          int c = col_index(col);
          if (c < 0) continue;
          sums(j, c) += value;
          counts(j, c) += 1.0;
        }
      }
    }
    double n = obs.demand;
    obs.shares /= n;
    obs.origin = {o[0] / n, o[1] / n};
    obs.destination = {d[0] / n, d[1] / n};
    for (int j = 0; j < n_alts; ++j) {
      for (int c = 0; c < n_cols; ++c) {
        if (counts(j, c) > 0) {
          obs.attributes(j, c) = sums(j, c) / counts(j, c);
        } else {
          const auto& alt_name = spec.alternatives[j];
          const std::map<std::string, double>* fb = nullptr;
          if (fallback_attributes) {
            auto it = fallback_attributes->find(alt_name);
            if (it != fallback_attributes->end()) fb = &it->second;
          }
          auto vit = fb ? fb->find(columns[c]) : std::map<std::string, double>::const_iterator{};
          if (fb && vit != fb->end()) {
            obs.attributes(j, c) = vit->second;
          } else {
            throw ValidationError("group " + key + ": unobserved alternative attributes for " +
                                  alt_name + "/" + columns[c]);
          }
        }
      }
    }
    ds.observations.push_back(std::move(obs));
  }
  ds.validate();
  return ds;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction,
                                             std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("split fraction must lie in (0,1)");
  }
  if (ds.observations.size() < 2) {
    throw ValidationError("split requires at least 2 observations");
  }
  // Segments in first-appearance order so the partition is a deterministic
  // function of (dataset order, seed).
  std::vector<std::string> segment_order;
  std::map<std::string, std::vector<std::size_t>> by_segment;
  for (std::size_t i = 0; i < ds.observations.size(); ++i) {
    const auto& seg = ds.observations[i].segment;
    auto [it, inserted] = by_segment.try_emplace(seg);
    if (inserted) segment_order.push_back(seg);
    it->second.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<bool> in_train(ds.observations.size(), false);
  for (const auto& seg : segment_order) {
    auto& idx = by_segment[seg];
    shuffle(idx, rng);
    auto n_train = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    n_train = std::min(n_train, idx.size());
    for (std::size_t i = 0; i < n_train; ++i) in_train[idx[i]] = true;
  }
  Dataset train, test;
  train.spec = test.spec = ds.spec;
  train.columns = test.columns = ds.columns;
  for (std::size_t i = 0; i < ds.observations.size(); ++i) {
    auto obs = ds.observations[i];
    obs.split_tag = in_train[i] ? "train" : "test";
    (in_train[i] ? train : test).observations.push_back(std::move(obs));
  }
  return {std::move(train), std::move(test)};
}

}  // namespace glam
