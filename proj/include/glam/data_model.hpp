#pragma once

#include "glam/types.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace glam {

/// Design-map token meaning "this parameter is fed by a constant 1"
/// (alternative-specific constants) instead of an attribute column.
inline constexpr const char* kConstantColumn = "1";

/// Parameter vocabulary, per-alternative design wiring and estimation bounds.
///
/// `design[j]` maps a parameter name to the attribute column feeding it in
/// alternative j's systematic utility, or to kConstantColumn for an ASC slot.
/// Parameters shared across alternatives (e.g. one cost coefficient) simply
/// appear in several alternatives' maps.
struct ModelSpec {
  std::vector<std::string> parameter_names;
  std::vector<Bounds> bounds;  // aligned with parameter_names
  std::vector<std::string> alternatives;
  std::vector<std::map<std::string, std::string>> design;  // aligned with alternatives
  std::map<std::string, double> column_scales;  // unit conversion applied at model time
  std::optional<std::string> endogenous_column;
  std::optional<std::string> control_parameter;
  std::optional<std::string> reference_alternative;

  int parameter_index(const std::string& name) const;    // -1 if absent
  int alternative_index(const std::string& name) const;  // -1 if absent
  double column_scale(const std::string& column) const;

  /// Attribute columns referenced by the design, in first-use order
  /// (constants excluded).
  std::vector<std::string> design_columns() const;

  /// The column receiving first-stage residuals, when endogeneity is declared.
  std::optional<std::string> control_column() const;

  /// True if alternative j has a parameter fed by a constant.
  bool has_constant(int j) const;

  void validate() const;  // throws ValidationError
};

/// One agent/market: per-alternative attributes, observed shares and weight.
/// Attribute values are stored in their source units; models apply
/// ModelSpec::column_scales when building design rows.
struct MarketObservation {
  std::string agent_id;
  std::string segment;
  std::string region_id;
  std::array<double, 2> origin{0.0, 0.0};
  std::array<double, 2> destination{0.0, 0.0};
  Matrix attributes;  // |J| x columns, aligned with Dataset::columns
  Vector shares;      // |J|
  double demand = 0.0;
  std::optional<std::string> split_tag;
};

struct Dataset {
  ModelSpec spec;
  std::vector<std::string> columns;
  std::vector<MarketObservation> observations;

  int column_index(const std::string& name) const;  // -1 if absent
  void validate() const;                             // throws ValidationError
};

/// Design wiring resolved against a concrete column registry, for fast
/// construction of per-agent design rows X_jt.
struct CompiledDesign {
  int n_params = 0;
  int n_alternatives = 0;
  // per alternative: (parameter index, column index); column -1 is a constant 1
  std::vector<std::vector<std::pair<int, int>>> terms;
  std::vector<double> scales;   // per column index
  std::vector<Bounds> bounds;   // per parameter, copied from the spec

  /// |J| x K_p matrix of design rows for one observation.
  Matrix rows(const MarketObservation& obs) const;

  /// Scaled (model-unit) value of one attribute cell.
  double value(const MarketObservation& obs, int alternative, int column) const {
    return obs.attributes(alternative, column) * scales[column];
  }
};

CompiledDesign compile_design(const ModelSpec& spec, const std::vector<std::string>& columns);

// ---------------------------------------------------------------------------
// CSV ingestion (long format: one row per agent x alternative)
// ---------------------------------------------------------------------------

/// Fixed (non-attribute) columns of the markets CSV schema, in order:
/// agent_id, segment, region_id, origin_x, origin_y, destination_x,
/// destination_y, alternative, share, demand. Remaining columns are
/// attributes.
Dataset load_dataset_csv(const std::string& path, const ModelSpec& spec);

void write_dataset_csv(const Dataset& dataset, const std::string& path);

// ---------------------------------------------------------------------------
// Trip aggregation
// ---------------------------------------------------------------------------

/// One individual trip; attributes may be observed for any subset of
/// alternatives (at minimum the chosen one, typically).
struct TripRecord {
  std::string segment;
  std::string region_id;
  std::string origin_zone;
  std::string destination_zone;
  std::array<double, 2> origin{0.0, 0.0};
  std::array<double, 2> destination{0.0, 0.0};
  std::string chosen;
  // alternative -> column -> observed value
  std::map<std::string, std::map<std::string, double>> attributes;
};

/// Aggregates trips into one MarketObservation per (segment, origin zone,
/// destination zone) group: within-group attribute means per alternative,
/// chosen-alternative frequencies as shares, trip count as demand.
/// `fallback_attributes` supplies values for alternatives never observed in a
/// group; without a fallback such a group is an error.
Dataset aggregate_trips(
    const std::vector<TripRecord>& trips, const ModelSpec& spec,
    const std::vector<std::string>& columns,
    const std::map<std::string, std::map<std::string, double>>* fallback_attributes = nullptr);

/// Deterministic, segment-stratified partition into (train, test).
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction,
                                             std::uint64_t seed);

}  // namespace glam
