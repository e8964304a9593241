#include "glam/csv.hpp"
#include "glam/data_model.hpp"

#include "../support/test_helpers.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace glam;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "glam_data_model_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kIllustrativeCsv =
    "agent_id,segment,region_id,origin_x,origin_y,destination_x,destination_y,"
    "alternative,share,demand,time,cost\n"
    "agent1,all,r0,0,0,1,1,taxi,0.8,100,10,10\n"
    "agent1,all,r0,0,0,1,1,transit,0.2,100,30,3\n"
    "agent2,all,r0,0,0,1,1,taxi,0.7,100,20,15\n"
    "agent2,all,r0,0,0,1,1,transit,0.3,100,40,3\n"
    "agent3,all,r0,0,0,1,1,taxi,0.6,100,40,25\n"
    "agent3,all,r0,0,0,1,1,transit,0.4,100,60,3\n"
    "agent4,all,r0,0,0,1,1,taxi,0.2,100,10,10\n"
    "agent4,all,r0,0,0,1,1,transit,0.8,100,30,3\n"
    "agent5,all,r0,0,0,1,1,taxi,0.3,100,20,15\n"
    "agent5,all,r0,0,0,1,1,transit,0.7,100,40,3\n"
    "agent6,all,r0,0,0,1,1,taxi,0.4,100,40,25\n"
    "agent6,all,r0,0,0,1,1,transit,0.6,100,60,3\n"
    "agent7,all,r0,0,0,1,1,taxi,0.1,100,10,3\n"
    "agent7,all,r0,0,0,1,1,transit,0.9,100,30,10\n"
    "agent8,all,r0,0,0,1,1,taxi,0.9,100,60,25\n"
    "agent8,all,r0,0,0,1,1,transit,0.1,100,10,3\n";

}  // namespace

TEST_CASE("spec validation catches structural mistakes") {
  ModelSpec spec = testing::make_two_mode_spec();
  CHECK_NOTHROW(spec.validate());

  SUBCASE("bounds must be ordered") {
    spec.bounds[0] = {1.0, -1.0};
    CHECK_THROWS_AS(spec.validate(), ValidationError);
  }
  SUBCASE("at least one alternative without a constant") {
    spec.design[0]["asc_taxi"] = kConstantColumn;
    spec.parameter_names.push_back("asc_taxi");
    spec.bounds.push_back({});
    spec.reference_alternative.reset();
    CHECK_THROWS_WITH_AS(spec.validate(), doctest::Contains("identification"), ValidationError);
  }
  SUBCASE("control parameter and endogenous column come together") {
    spec.endogenous_column = "cost";
    CHECK_THROWS_AS(spec.validate(), ValidationError);
  }
  SUBCASE("unknown parameter in design") {
    spec.design[0]["typo"] = "time";
    CHECK_THROWS_AS(spec.validate(), ValidationError);
  }
}

TEST_CASE("load_dataset_csv ingests the two-mode sample") {
  auto path = temp_file("sample.csv");
  write_file(path, kIllustrativeCsv);
  Dataset ds = load_dataset_csv(path.string(), testing::make_two_mode_spec());
  REQUIRE(ds.observations.size() == 8);
  CHECK(ds.observations[0].agent_id == "agent1");
  CHECK(ds.observations[0].shares[0] == doctest::Approx(0.8));
  CHECK(ds.observations[0].shares[1] == doctest::Approx(0.2));
  CHECK(ds.observations[0].attributes(0, 0) == 10.0);
  CHECK(ds.observations[0].attributes(1, 1) == 3.0);
  CHECK(ds.observations[7].shares[0] == doctest::Approx(0.9));
}

TEST_CASE("load_dataset_csv error paths") {
  SUBCASE("empty file") {
    auto path = temp_file("empty.csv");
    write_file(path, "");
    CHECK_THROWS_WITH_AS(load_dataset_csv(path.string(), testing::make_two_mode_spec()),
                         doctest::Contains("empty"), ValidationError);
  }
  SUBCASE("header only") {
    auto path = temp_file("header_only.csv");
    write_file(path,
               "agent_id,segment,region_id,origin_x,origin_y,destination_x,destination_y,"
               "alternative,share,demand,time,cost\n");
    CHECK_THROWS_WITH_AS(load_dataset_csv(path.string(), testing::make_two_mode_spec()),
                         doctest::Contains("no observations"), ValidationError);
  }
  SUBCASE("shares off the simplex name the agent") {
    auto path = temp_file("bad_sum.csv");
    write_file(path,
               "agent_id,segment,region_id,origin_x,origin_y,destination_x,destination_y,"
               "alternative,share,demand,time,cost\n"
               "agentX,all,r0,0,0,1,1,taxi,0.8,100,10,10\n"
               "agentX,all,r0,0,0,1,1,transit,0.15,100,30,3\n");
    CHECK_THROWS_WITH_AS(load_dataset_csv(path.string(), testing::make_two_mode_spec()),
                         doctest::Contains("agentX"), ValidationError);
  }
  SUBCASE("missing alternative") {
    auto path = temp_file("missing_alt.csv");
    write_file(path,
               "agent_id,segment,region_id,origin_x,origin_y,destination_x,destination_y,"
               "alternative,share,demand,time,cost\n"
               "agentY,all,r0,0,0,1,1,taxi,1.0,100,10,10\n");
    CHECK_THROWS_WITH_AS(load_dataset_csv(path.string(), testing::make_two_mode_spec()),
                         doctest::Contains("transit"), ValidationError);
  }
  SUBCASE("duplicate agent-alternative row") {
    auto path = temp_file("dup.csv");
    write_file(path,
               "agent_id,segment,region_id,origin_x,origin_y,destination_x,destination_y,"
               "alternative,share,demand,time,cost\n"
               "agentZ,all,r0,0,0,1,1,taxi,0.5,100,10,10\n"
               "agentZ,all,r0,0,0,1,1,taxi,0.5,100,10,10\n");
    CHECK_THROWS_WITH_AS(load_dataset_csv(path.string(), testing::make_two_mode_spec()),
                         doctest::Contains("duplicate"), ValidationError);
  }
  SUBCASE("non-numeric attribute names agent and column") {
    auto path = temp_file("nan.csv");
    write_file(path,
               "agent_id,segment,region_id,origin_x,origin_y,destination_x,destination_y,"
               "alternative,share,demand,time,cost\n"
               "agentN,all,r0,0,0,1,1,taxi,0.5,100,abc,10\n"
               "agentN,all,r0,0,0,1,1,transit,0.5,100,30,3\n");
    CHECK_THROWS_WITH_AS(load_dataset_csv(path.string(), testing::make_two_mode_spec()),
                         doctest::Contains("agentN, column time"), ValidationError);
  }
}

TEST_CASE("csv round trip is exact at full precision") {
  Dataset ds = testing::make_illustrative_dataset();
  // Perturb with awkward values that stress the shortest-round-trip printer.
  ds.observations[0].attributes(0, 0) = 0.1 + 0.2;
  ds.observations[1].demand = 1.0 / 3.0;
  auto path = temp_file("round_trip.csv");
  write_dataset_csv(ds, path.string());
  Dataset back = load_dataset_csv(path.string(), ds.spec);
  REQUIRE(back.observations.size() == ds.observations.size());
  for (std::size_t i = 0; i < ds.observations.size(); ++i) {
    const auto& a = ds.observations[i];
    const auto& b = back.observations[i];
    CHECK(a.agent_id == b.agent_id);
    CHECK(a.segment == b.segment);
    CHECK(a.demand == b.demand);  // bitwise
    CHECK((a.attributes - b.attributes).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.shares - b.shares).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("aggregate_trips reproduces the worked example") {
  // Five trips: four by taxi around 10 min / $10, one by transit.
  std::vector<TripRecord> trips;
  const double taxi_times[4] = {12, 11, 9, 8};
  const double taxi_costs[4] = {11, 11, 9, 9};
  for (int i = 0; i < 4; ++i) {
    TripRecord t;
    t.segment = "all";
    t.region_id = "r0";
    t.origin_zone = "o1";
    t.destination_zone = "d1";
    t.chosen = "taxi";
    t.attributes["taxi"] = {{"time", taxi_times[i]}, {"cost", taxi_costs[i]}};
    t.attributes["transit"] = {{"time", 30.0}, {"cost", 3.0}};
    trips.push_back(std::move(t));
  }
  TripRecord transit_trip;
  transit_trip.segment = "all";
  transit_trip.region_id = "r0";
  transit_trip.origin_zone = "o1";
  transit_trip.destination_zone = "d1";
  transit_trip.chosen = "transit";
  transit_trip.attributes["transit"] = {{"time", 30.0}, {"cost", 3.0}};
  transit_trip.attributes["taxi"] = {{"time", 10.0}, {"cost", 10.0}};
  trips.push_back(std::move(transit_trip));

  Dataset ds = aggregate_trips(trips, testing::make_two_mode_spec(), {"time", "cost"});
  REQUIRE(ds.observations.size() == 1);
  const auto& obs = ds.observations[0];
  CHECK(obs.attributes(0, 0) == doctest::Approx(10.0));  // mean taxi time
  CHECK(obs.attributes(0, 1) == doctest::Approx(10.0));  // mean taxi cost
  CHECK(obs.shares[0] == doctest::Approx(0.8));
  CHECK(obs.shares[1] == doctest::Approx(0.2));
  CHECK(obs.demand == 5.0);
}

TEST_CASE("aggregate_trips: single-trip group has share one") {
  TripRecord t;
  t.segment = "s";
  t.region_id = "r";
  t.origin_zone = "o";
  t.destination_zone = "d";
  t.chosen = "transit";
  t.attributes["taxi"] = {{"time", 5.0}, {"cost", 7.0}};
  t.attributes["transit"] = {{"time", 12.0}, {"cost", 2.0}};
  Dataset ds = aggregate_trips({t}, testing::make_two_mode_spec(), {"time", "cost"});
  CHECK(ds.observations[0].shares[1] == 1.0);
  CHECK(ds.observations[0].shares[0] == 0.0);
}

TEST_CASE("aggregate_trips means match an independent average") {
  std::mt19937_64 rng(11);
  std::vector<TripRecord> trips;
  double sum_taxi_time = 0.0, sum_transit_time = 0.0;
  for (int i = 0; i < 40; ++i) {
    TripRecord t;
    t.segment = "s";
    t.region_id = "r";
    t.origin_zone = "o";
    t.destination_zone = "d";
    t.chosen = i % 2 == 0 ? "taxi" : "transit";
    double taxi_time = 10.0 + uniform01(rng);
    double transit_time = 30.0 + uniform01(rng);
    sum_taxi_time += taxi_time;
    sum_transit_time += transit_time;
    t.attributes["taxi"] = {{"time", taxi_time}, {"cost", 10.0}};
    t.attributes["transit"] = {{"time", transit_time}, {"cost", 3.0}};
    trips.push_back(std::move(t));
  }
  Dataset ds = aggregate_trips(trips, testing::make_two_mode_spec(), {"time", "cost"});
  const auto& obs = ds.observations[0];
  CHECK(obs.shares[0] == doctest::Approx(0.5));
  CHECK(obs.attributes(0, 0) == doctest::Approx(sum_taxi_time / 40.0));
  CHECK(obs.attributes(1, 0) == doctest::Approx(sum_transit_time / 40.0));
}

TEST_CASE("aggregate_trips requires attributes for unobserved alternatives") {
  TripRecord t;
  t.segment = "s";
  t.region_id = "r";
  t.origin_zone = "o";
  t.destination_zone = "d";
  t.chosen = "taxi";
  t.attributes["taxi"] = {{"time", 5.0}, {"cost", 7.0}};
  CHECK_THROWS_WITH_AS(
      aggregate_trips({t}, testing::make_two_mode_spec(), {"time", "cost"}),
      doctest::Contains("unobserved alternative attributes"), ValidationError);
  std::map<std::string, std::map<std::string, double>> fallback = {
      {"transit", {{"time", 30.0}, {"cost", 3.0}}}};
  Dataset ds = aggregate_trips({t}, testing::make_two_mode_spec(), {"time", "cost"}, &fallback);
  CHECK(ds.observations[0].attributes(1, 0) == 30.0);
}

TEST_CASE("train_test_split is deterministic, stratified and exhaustive") {
  auto [ds, labels] = testing::forward_simulate(
      {Vector(Vector::Zero(2))},
      [] {
        testing::SyntheticOptions opt;
        opt.n_agents = 10;
        opt.segments = {"a", "b"};
        return opt;
      }());
  (void)labels;
  auto [train1, test1] = train_test_split(ds, 0.8, 42);
  auto [train2, test2] = train_test_split(ds, 0.8, 42);
  CHECK(train1.observations.size() == 8);
  CHECK(test1.observations.size() == 2);
  REQUIRE(train1.observations.size() == train2.observations.size());
  for (std::size_t i = 0; i < train1.observations.size(); ++i) {
    CHECK(train1.observations[i].agent_id == train2.observations[i].agent_id);
  }
  // Partition: every agent lands exactly once.
  std::set<std::string> seen;
  for (const auto& o : train1.observations) seen.insert(o.agent_id);
  for (const auto& o : test1.observations) seen.insert(o.agent_id);
  CHECK(seen.size() == 10);
  // Stratified: each 5-agent segment splits 4/1.
  int seg_a = 0;
  for (const auto& o : train1.observations) {
    if (o.segment == "a") ++seg_a;
  }
  CHECK(seg_a == 4);

  auto [train3, test3] = train_test_split(ds, 0.8, 43);
  CHECK(train3.observations.size() == 8);
  bool differs = false;
  for (std::size_t i = 0; i < train1.observations.size(); ++i) {
    if (train1.observations[i].agent_id != train3.observations[i].agent_id) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("train_test_split rejects tiny datasets and bad fractions") {
  Dataset ds = testing::make_illustrative_dataset();
  ds.observations.resize(1);
  CHECK_THROWS_AS(train_test_split(ds, 0.8, 1), ValidationError);
  Dataset ds2 = testing::make_illustrative_dataset();
  CHECK_THROWS_AS(train_test_split(ds2, 1.0, 1), ValidationError);
}
