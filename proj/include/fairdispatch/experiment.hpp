#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairdispatch/baselines.hpp"
#include "fairdispatch/dispatch.hpp"
#include "fairdispatch/forecast.hpp"
#include "fairdispatch/graph.hpp"
#include "fairdispatch/trips.hpp"
#include "fairdispatch/types.hpp"

namespace fairdispatch {

enum class DemandPattern { kConstant, kDiurnal, kHotspotShift };

/// Desk-scale synthetic stand-in for a real trip slice: a seeded strongly
/// connected directed graph plus a request timeline from a configurable
/// demand process.
struct SynthSpec {
  int num_nodes = 30;
  double edge_density = 0.15;
  double min_distance = 1.0;
  double max_distance = 5.0;
  DemandPattern pattern = DemandPattern::kDiurnal;
  double base_rate = 6.0;   // expected requests per step
  double amplitude = 0.8;   // diurnal swing, fraction of base rate
  int hot_pairs = 40;       // concentrated OD pairs carrying most demand
  double hot_share = 0.8;
  int steps_per_day = 24;
  int total_days = 10;
  std::uint64_t seed = 1;
};

struct SynthCity {
  CityGraph graph;
  Timeline timeline;
};

SynthCity generate_synthetic_city(const SynthSpec& spec);

/// The canned 3-driver, 3-timestep instance where the stepwise-fair plan is
/// perfectly fair after the second step but strictly dominated in final
/// variance by the plan that optimises the whole horizon.
struct Fig1Scenario {
  CityGraph graph;
  Timeline timeline;
  std::vector<DriverState> drivers;
  EnvConfig env;
  double lambda = 1.0;
};

Fig1Scenario fig1_scenario();

/// Flat key=value experiment configuration; every key can be overridden by
/// a --key=value command-line flag. Unknown keys are fatal.
struct ExperimentConfig {
  // data source
  std::string source = "synth";  // synth | file
  SynthSpec synth;
  std::string trips_file;
  std::string graph_file;     // pre-built alternative to trips_file
  std::string requests_file;  // used together with graph_file
  BoundingBox bbox;
  double merge_radius = 0.01;
  double batch_seconds = 3600.0;
  std::string time_filter;  // "HH:MM-HH:MM", empty = no filter
  double sample_rate = 1.0;
  // horizon
  int steps_per_hour = 1;
  int delta_days = 6;
  std::optional<int> delta_steps;  // overrides delta_days when set
  // drivers
  int num_drivers = 20;
  int capacity = 4;
  std::string driver_nodes;  // explicit comma list; empty = seeded uniform
  // policies and learning
  std::string policy = "momaql";  // comma list accepted
  Hyperparams hp;
  double speed = 2.0;
  int ttl = 5;
  // forecaster
  ForecastConfig forecast;
  std::string train_before;  // timestamp split for file sources
  // run
  std::string qtables_file;  // evaluate from a checkpoint instead of training
  std::uint64_t seed = 1;
  std::string seeds;  // comma list; empty = single `seed`
  std::string out_dir = "results";
  std::string horizon_days;  // comma list of day horizons; empty = 1..total

  static ExperimentConfig from_keys(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_keys() const;
  std::string canonical_text() const;  // sorted key=value lines
  std::vector<std::uint64_t> seed_list() const;
  std::vector<std::string> policy_list() const;
};

std::map<std::string, std::string> parse_config_file(const std::string& path);

/// One evaluated (policy, seed) arm.
struct ArmResult {
  std::string policy;
  std::uint64_t seed = 0;
  EpisodeResult eval;
  std::vector<HorizonPoint> horizon;     // per configured day horizon
  std::vector<double> training_curve;    // empty for baselines
  double forecast_mse = 0.0;             // pooled train MSE, 0 when unused
};

struct ExperimentResult {
  std::vector<ArmResult> arms;
  int episode_steps = 0;
  int steps_per_day = 24;
  std::string config_hash;
};

/// Executes ingest -> forecast -> train -> evaluate for each configured
/// policy and seed; writes metrics rows, horizon series, training curves,
/// and a manifest into out_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Ingested data plus the derived horizon split and training streams.
/// `train_with_pred` carries the real historical-and-current prefix followed
/// by forecast-sampled future requests; `train_without_pred` carries the
/// prefix only.
struct PreparedExperiment {
  CityGraph graph;
  Timeline timeline;
  Timeline train_with_pred;
  Timeline train_without_pred;
  int delta = 0;
  int total_steps = 0;
  int steps_per_day = 24;
  std::int64_t t_start = 0;
  std::optional<Forecaster> forecaster;
  ParseReport parse_report;
  TimelineReport timeline_report;
};

PreparedExperiment prepare_experiment(const ExperimentConfig& config,
                                      bool with_forecast);

std::vector<DriverState> make_drivers(const ExperimentConfig& config,
                                      const CityGraph& graph,
                                      std::uint64_t seed);

/// The ingest stage on its own: builds the graph and request timeline from
/// the configured source (used by the `ingest` and `synth` subcommands).
struct IngestResult {
  CityGraph graph;
  Timeline timeline;
  ParseReport parse_report;
  TimelineReport timeline_report;
  std::int64_t t_start = 0;  // epoch seconds of timeline step 0 (file sources)
};

IngestResult ingest_data(const ExperimentConfig& config);

inline constexpr const char* kVersion = "0.1.0";

}  // namespace fairdispatch
