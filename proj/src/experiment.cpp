#include "fairdispatch/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fairdispatch/metrics.hpp"
#include "fairdispatch/util.hpp"

namespace fairdispatch {

namespace {

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = item.find_last_not_of(" \t");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

[[noreturn]] void config_error(const std::string& key, const std::string& why) {
  throw std::invalid_argument("config key '" + key + "': " + why);
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) config_error(key, "bad number '" + value + "'");
    return v;
  } catch (const std::invalid_argument&) {
    config_error(key, "bad number '" + value + "'");
  } catch (const std::out_of_range&) {
    config_error(key, "number out of range '" + value + "'");
  }
}

int to_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    int v = std::stoi(value, &pos);
    if (pos != value.size()) config_error(key, "bad integer '" + value + "'");
    return v;
  } catch (const std::invalid_argument&) {
    config_error(key, "bad integer '" + value + "'");
  } catch (const std::out_of_range&) {
    config_error(key, "integer out of range '" + value + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    std::uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) config_error(key, "bad integer '" + value + "'");
    return v;
  } catch (const std::invalid_argument&) {
    config_error(key, "bad integer '" + value + "'");
  } catch (const std::out_of_range&) {
    config_error(key, "integer out of range '" + value + "'");
  }
}

std::string fmt(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", value);
  return buf;
}

DemandPattern parse_pattern(const std::string& value) {
  if (value == "constant") return DemandPattern::kConstant;
  if (value == "diurnal") return DemandPattern::kDiurnal;
  if (value == "hotspot_shift") return DemandPattern::kHotspotShift;
  config_error("synth_pattern", "expected constant|diurnal|hotspot_shift");
}

std::string pattern_name(DemandPattern p) {
  switch (p) {
    case DemandPattern::kConstant: return "constant";
    case DemandPattern::kDiurnal: return "diurnal";
    case DemandPattern::kHotspotShift: return "hotspot_shift";
  }
  return "constant";
}

// "HH:MM-HH:MM" -> [start, end) seconds of day.
std::pair<int, int> parse_time_filter(const std::string& text) {
  auto bad = [&] { config_error("time_filter", "expected HH:MM-HH:MM"); };
  if (text.size() != 11 || text[5] != '-') bad();
  auto hhmm = [&](const std::string& s) {
    if (s.size() != 5 || s[2] != ':') bad();
    const int h = to_int("time_filter", s.substr(0, 2));
    const int m = to_int("time_filter", s.substr(3, 2));
    if (h > 24 || m > 59) bad();
    return h * 3600 + m * 60;
  };
  return {hhmm(text.substr(0, 5)), hhmm(text.substr(6, 5))};
}

}  // namespace

SynthCity generate_synthetic_city(const SynthSpec& spec) {
  if (spec.num_nodes < 2)
    throw std::invalid_argument("synth: need at least 2 nodes");
  if (spec.edge_density < 0.0 || spec.edge_density > 1.0)
    throw std::invalid_argument("synth: edge_density outside [0, 1]");
  if (spec.min_distance < 0.0 || spec.max_distance < spec.min_distance)
    throw std::invalid_argument("synth: bad distance range");
  if (spec.amplitude < 0.0 || spec.amplitude > 1.0)
    throw std::invalid_argument("synth: amplitude outside [0, 1]");
  if (spec.steps_per_day < 1 || spec.total_days < 1)
    throw std::invalid_argument("synth: bad horizon");

  Rng rng = make_rng(mix_seed(spec.seed, 0x535954));
  const int n = spec.num_nodes;

  // Cycle backbone over a random permutation keeps the graph strongly
  // connected; extra arcs are sprinkled by density.
  std::vector<NodeId> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rand_index(rng, i)]);

  std::set<std::pair<NodeId, NodeId>> present;
  std::vector<Edge> edges;
  auto add_edge = [&](NodeId a, NodeId b) {
    if (a == b || present.count({a, b})) return;
    present.insert({a, b});
    edges.push_back({a, b, rand_range(rng, spec.min_distance, spec.max_distance)});
  };
  for (int i = 0; i < n; ++i) add_edge(perm[i], perm[(i + 1) % n]);
  for (NodeId a = 0; a < n; ++a)
    for (NodeId b = 0; b < n; ++b)
      if (a != b && rand_unit(rng) < spec.edge_density) add_edge(a, b);

  auto sample_pairs = [&](int count) {
    std::set<std::pair<NodeId, NodeId>> picked;
    while (static_cast<int>(picked.size()) < std::min<long>(count, static_cast<long>(n) * (n - 1))) {
      const NodeId s = static_cast<NodeId>(rand_index(rng, n));
      NodeId d = static_cast<NodeId>(rand_index(rng, n - 1));
      if (d >= s) ++d;
      picked.insert({s, d});
    }
    return std::vector<std::pair<NodeId, NodeId>>(picked.begin(), picked.end());
  };
  const auto hot_a = sample_pairs(spec.hot_pairs);
  const auto hot_b = sample_pairs(spec.hot_pairs);

  const int steps = spec.steps_per_day * spec.total_days;
  SynthCity city{CityGraph(n, std::move(edges)), Timeline(steps)};
  int next_id = 0;
  for (int t = 0; t < steps; ++t) {
    double rate = spec.base_rate;
    if (spec.pattern != DemandPattern::kConstant) {
      const double day_frac =
          static_cast<double>(t % spec.steps_per_day) / spec.steps_per_day;
      rate = spec.base_rate *
             (1.0 + spec.amplitude * std::sin(2.0 * M_PI * day_frac));
    }
    // Hotspot shift keeps the diurnal swing but moves the hot OD set to a
    // fresh draw halfway through the timeline (demand-pattern drift).
    const auto& hot = (spec.pattern == DemandPattern::kHotspotShift &&
                       t >= steps / 2)
                          ? hot_b
                          : hot_a;
    const int count = rand_poisson(rng, rate);
    for (int k = 0; k < count; ++k) {
      NodeId s, d;
      if (!hot.empty() && rand_unit(rng) < spec.hot_share) {
        const auto& p = hot[rand_index(rng, hot.size())];
        s = p.first;
        d = p.second;
      } else {
        s = static_cast<NodeId>(rand_index(rng, n));
        d = static_cast<NodeId>(rand_index(rng, n - 1));
        if (d >= s) ++d;
      }
      city.timeline[t].push_back({next_id++, t, s, d});
    }
  }
  return city;
}

Fig1Scenario fig1_scenario() {
  // Hub-and-leaf city: all requests start at the hub and return legs are
  // free, so a request's utility equals its hub->leaf distance no matter
  // which driver serves it. Values: one 3 at step 0, two 3s at step 1, then
  // a 6 and a 3 at step 2. The stepwise-fair plan lands on (3,3,3) after
  // step 1 and ends at (9,6,3); scheduling the whole horizon ends at (6,6,6).
  Fig1Scenario s;
  std::vector<Edge> edges{
      {0, 1, 3.0}, {1, 0, 0.0}, {0, 2, 6.0}, {2, 0, 0.0}};
  s.graph = CityGraph(3, std::move(edges));
  s.timeline.resize(3);
  s.timeline[0] = {{0, 0, 0, 1}};
  s.timeline[1] = {{1, 1, 0, 1}, {2, 1, 0, 1}};
  s.timeline[2] = {{3, 2, 0, 2}, {4, 2, 0, 1}};
  for (int v = 0; v < 3; ++v) s.drivers.push_back({v, 4, 0, 0, 0.0, {}});
  s.env.speed = 6.0;
  s.env.request_ttl = 5;
  s.lambda = 1.0;
  return s;
}

ExperimentConfig ExperimentConfig::from_keys(
    const std::map<std::string, std::string>& kv) {
  ExperimentConfig c;
  int total_days = c.synth.total_days;
  for (const auto& [key, value] : kv) {
    if (key == "source") {
      if (value != "synth" && value != "file")
        config_error(key, "expected synth|file");
      c.source = value;
    } else if (key == "synth_nodes") c.synth.num_nodes = to_int(key, value);
    else if (key == "synth_edge_density") c.synth.edge_density = to_double(key, value);
    else if (key == "synth_min_distance") c.synth.min_distance = to_double(key, value);
    else if (key == "synth_max_distance") c.synth.max_distance = to_double(key, value);
    else if (key == "synth_pattern") c.synth.pattern = parse_pattern(value);
    else if (key == "synth_base_rate") c.synth.base_rate = to_double(key, value);
    else if (key == "synth_amplitude") c.synth.amplitude = to_double(key, value);
    else if (key == "synth_hot_pairs") c.synth.hot_pairs = to_int(key, value);
    else if (key == "synth_hot_share") c.synth.hot_share = to_double(key, value);
    else if (key == "synth_seed") c.synth.seed = to_u64(key, value);
    else if (key == "total_days") total_days = to_int(key, value);
    else if (key == "steps_per_hour") c.steps_per_hour = to_int(key, value);
    else if (key == "trips_file") c.trips_file = value;
    else if (key == "graph_file") c.graph_file = value;
    else if (key == "requests_file") c.requests_file = value;
    else if (key == "bbox") {
      const auto parts = split_list(value);
      if (parts.size() != 4) config_error(key, "expected min_lon,min_lat,max_lon,max_lat");
      c.bbox = {to_double(key, parts[0]), to_double(key, parts[1]),
                to_double(key, parts[2]), to_double(key, parts[3])};
    } else if (key == "merge_radius") c.merge_radius = to_double(key, value);
    else if (key == "batch_seconds") c.batch_seconds = to_double(key, value);
    else if (key == "time_filter") {
      if (!value.empty()) parse_time_filter(value);
      c.time_filter = value;
    } else if (key == "sample_rate") c.sample_rate = to_double(key, value);
    else if (key == "delta_days") c.delta_days = to_int(key, value);
    else if (key == "delta_steps") c.delta_steps = to_int(key, value);
    else if (key == "drivers") c.num_drivers = to_int(key, value);
    else if (key == "capacity") c.capacity = to_int(key, value);
    else if (key == "driver_nodes") c.driver_nodes = value;
    else if (key == "policy") c.policy = value;
    else if (key == "lambda") c.hp.lambda = to_double(key, value);
    else if (key == "omega") c.hp.omega = to_double(key, value);
    else if (key == "gamma") c.hp.gamma = to_double(key, value);
    else if (key == "alpha") c.hp.alpha = to_double(key, value);
    else if (key == "epsilon_start") c.hp.epsilon_start = to_double(key, value);
    else if (key == "epsilon_floor") c.hp.epsilon_floor = to_double(key, value);
    else if (key == "episodes") c.hp.episodes = to_int(key, value);
    else if (key == "speed") c.speed = to_double(key, value);
    else if (key == "ttl") c.ttl = to_int(key, value);
    else if (key == "lag") c.forecast.lag = to_int(key, value);
    else if (key == "hidden") c.forecast.hidden_width = to_int(key, value);
    else if (key == "epochs") c.forecast.epochs = to_int(key, value);
    else if (key == "lr") c.forecast.learning_rate = to_double(key, value);
    else if (key == "min_demand") c.forecast.min_mean_demand = to_double(key, value);
    else if (key == "train_before") {
      if (!value.empty() && !parse_timestamp(value))
        config_error(key, "expected YYYY-MM-DD HH:MM:SS");
      c.train_before = value;
    } else if (key == "qtables_file") c.qtables_file = value;
    else if (key == "seed") c.seed = to_u64(key, value);
    else if (key == "seeds") c.seeds = value;
    else if (key == "out_dir") c.out_dir = value;
    else if (key == "horizon_days") c.horizon_days = value;
    else config_error(key, "unknown config key");
  }
  c.synth.total_days = total_days;
  if (c.steps_per_hour < 1) config_error("steps_per_hour", "must be >= 1");
  c.synth.steps_per_day = 24 * c.steps_per_hour;
  c.forecast.steps_per_hour = c.steps_per_hour;
  c.forecast.seed = c.synth.seed;
  for (const std::string& p : c.policy_list()) parse_policy(p);
  c.hp.validate();
  return c;
}

std::map<std::string, std::string> ExperimentConfig::to_keys() const {
  std::map<std::string, std::string> kv;
  kv["source"] = source;
  kv["synth_nodes"] = std::to_string(synth.num_nodes);
  kv["synth_edge_density"] = fmt(synth.edge_density);
  kv["synth_min_distance"] = fmt(synth.min_distance);
  kv["synth_max_distance"] = fmt(synth.max_distance);
  kv["synth_pattern"] = pattern_name(synth.pattern);
  kv["synth_base_rate"] = fmt(synth.base_rate);
  kv["synth_amplitude"] = fmt(synth.amplitude);
  kv["synth_hot_pairs"] = std::to_string(synth.hot_pairs);
  kv["synth_hot_share"] = fmt(synth.hot_share);
  kv["synth_seed"] = std::to_string(synth.seed);
  kv["total_days"] = std::to_string(synth.total_days);
  kv["steps_per_hour"] = std::to_string(steps_per_hour);
  kv["trips_file"] = trips_file;
  kv["graph_file"] = graph_file;
  kv["requests_file"] = requests_file;
  kv["bbox"] = fmt(bbox.min_lon) + "," + fmt(bbox.min_lat) + "," +
               fmt(bbox.max_lon) + "," + fmt(bbox.max_lat);
  kv["merge_radius"] = fmt(merge_radius);
  kv["batch_seconds"] = fmt(batch_seconds);
  kv["time_filter"] = time_filter;
  kv["sample_rate"] = fmt(sample_rate);
  kv["delta_days"] = std::to_string(delta_days);
  if (delta_steps) kv["delta_steps"] = std::to_string(*delta_steps);
  kv["drivers"] = std::to_string(num_drivers);
  kv["capacity"] = std::to_string(capacity);
  kv["driver_nodes"] = driver_nodes;
  kv["policy"] = policy;
  kv["lambda"] = fmt(hp.lambda);
  kv["omega"] = fmt(hp.omega);
  kv["gamma"] = fmt(hp.gamma);
  kv["alpha"] = fmt(hp.alpha);
  kv["epsilon_start"] = fmt(hp.epsilon_start);
  kv["epsilon_floor"] = fmt(hp.epsilon_floor);
  kv["episodes"] = std::to_string(hp.episodes);
  kv["speed"] = fmt(speed);
  kv["ttl"] = std::to_string(ttl);
  kv["lag"] = std::to_string(forecast.lag);
  kv["hidden"] = std::to_string(forecast.hidden_width);
  kv["epochs"] = std::to_string(forecast.epochs);
  kv["lr"] = fmt(forecast.learning_rate);
  kv["min_demand"] = fmt(forecast.min_mean_demand);
  kv["train_before"] = train_before;
  kv["qtables_file"] = qtables_file;
  kv["seed"] = std::to_string(seed);
  kv["seeds"] = seeds;
  kv["out_dir"] = out_dir;
  kv["horizon_days"] = horizon_days;
  return kv;
}

std::string ExperimentConfig::canonical_text() const {
  std::string text;
  for (const auto& [key, value] : to_keys()) {
    if (key == "out_dir") continue;  // where results land, not what they are
    text += key + "=" + value + "\n";
  }
  return text;
}

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
  std::vector<std::uint64_t> out;
  if (seeds.empty()) return {seed};
  for (const std::string& s : split_list(seeds)) out.push_back(to_u64("seeds", s));
  if (out.empty()) config_error("seeds", "empty list");
  return out;
}

std::vector<std::string> ExperimentConfig::policy_list() const {
  auto list = split_list(policy);
  if (list.empty()) config_error("policy", "empty list");
  return list;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot read " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key=value, got: " + line);
    auto strip = [](std::string s) {
      const auto x = s.find_first_not_of(" \t\r");
      if (x == std::string::npos) return std::string();
      const auto y = s.find_last_not_of(" \t\r");
      return s.substr(x, y - x + 1);
    };
    kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
  }
  return kv;
}

IngestResult ingest_data(const ExperimentConfig& config) {
  if (config.source == "synth") {
    SynthCity city = generate_synthetic_city(config.synth);
    return {std::move(city.graph), std::move(city.timeline), {}, {}};
  }
  if (!config.graph_file.empty()) {
    if (config.requests_file.empty())
      config_error("requests_file", "required together with graph_file");
    CityGraph graph = CityGraph::load(config.graph_file);
    Timeline timeline = load_timeline(config.requests_file);
    if (config.sample_rate < 1.0)
      timeline = sample_timeline(timeline, config.sample_rate, config.seed);
    return {std::move(graph), std::move(timeline), {}, {}};
  }
  if (config.trips_file.empty())
    config_error("trips_file", "required when source=file");
  if (!std::filesystem::exists(config.trips_file))
    config_error("trips_file", "cannot read " + config.trips_file);

  ParsedTrips parsed = parse_trip_records(config.trips_file, config.bbox);
  std::vector<RawTrip> trips = std::move(parsed.trips);
  if (!config.time_filter.empty()) {
    const auto [begin_s, end_s] = parse_time_filter(config.time_filter);
    trips = filter_time_of_day(trips, begin_s, end_s);
  }
  if (trips.empty())
    throw std::invalid_argument("ingest: no trips left after filtering");
  BuiltGraph built = build_graph(trips, config.merge_radius);
  BuiltTimeline bt =
      build_request_timeline(trips, built.node_map, config.batch_seconds);
  // Conservation: every surviving trip is either a request or a counted drop.
  if (bt.report.requests + bt.report.dropped_same_node !=
      static_cast<int>(trips.size()))
    throw std::logic_error("ingest: request conservation violated");
  Timeline timeline = std::move(bt.timeline);
  if (config.sample_rate < 1.0)
    timeline = sample_timeline(timeline, config.sample_rate, config.seed);
  return {std::move(built.graph), std::move(timeline), parsed.report,
          bt.report, bt.t_start};
}

std::vector<DriverState> make_drivers(const ExperimentConfig& config,
                                      const CityGraph& graph,
                                      std::uint64_t seed) {
  std::vector<NodeId> nodes;
  if (!config.driver_nodes.empty()) {
    for (const std::string& s : split_list(config.driver_nodes))
      nodes.push_back(to_int("driver_nodes", s));
  } else {
    Rng rng = make_rng(mix_seed(seed, 0x447256));
    for (int i = 0; i < config.num_drivers; ++i)
      nodes.push_back(static_cast<NodeId>(rand_index(rng, graph.num_nodes())));
  }
  if (nodes.empty()) config_error("drivers", "no drivers configured");
  std::vector<DriverState> drivers;
  for (size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] < 0 || nodes[i] >= graph.num_nodes())
      config_error("driver_nodes", "node out of range");
    drivers.push_back({static_cast<int>(i), config.capacity, 0, nodes[i], 0.0,
                       {}});
  }
  return drivers;
}

namespace {

std::string format_metrics_row(const ArmResult& arm) {
  const EpisodeMetrics& m = arm.eval.metrics;
  std::string nf = m.normalized_fairness ? fmt(*m.normalized_fairness) : "nan";
  return arm.policy + "," + std::to_string(arm.seed) + "," +
         fmt(m.total_utility) + "," + fmt(m.fairness) + "," + nf + "," +
         fmt(m.min_utility) + "," + fmt(m.mean_utility) + "," +
         fmt(m.max_utility);
}

}  // namespace

PreparedExperiment prepare_experiment(const ExperimentConfig& config,
                                      bool with_forecast) {
  IngestResult data = ingest_data(config);
  PreparedExperiment prep;
  prep.t_start = data.t_start;
  prep.parse_report = data.parse_report;
  prep.timeline_report = data.timeline_report;
  prep.graph = std::move(data.graph);
  prep.timeline = std::move(data.timeline);
  prep.total_steps = static_cast<int>(prep.timeline.size());
  prep.steps_per_day = 24 * config.steps_per_hour;

  int delta = config.delta_steps.value_or(config.delta_days * prep.steps_per_day);
  if (!config.train_before.empty()) {
    // Timestamp split: steps strictly before the timestamp are historical.
    if (config.source != "file" || config.trips_file.empty())
      config_error("train_before", "needs source=file with trips_file");
    const auto ts = parse_timestamp(config.train_before);
    delta = static_cast<int>(std::floor(
        static_cast<double>(*ts - prep.t_start) / config.batch_seconds));
  }
  if (delta < 0 || delta + 1 > prep.total_steps)
    config_error("delta_days",
                 "timeline spans " + std::to_string(prep.total_steps) +
                     " steps, cannot split at " + std::to_string(delta));
  prep.delta = delta;
  const int future_steps = prep.total_steps - delta - 1;
  split_horizon(prep.timeline, delta, future_steps);  // validates the split

  // Forecast-sampled future requests, shared across seeds and policies.
  Timeline predicted_buckets(prep.total_steps);
  if (with_forecast && future_steps > 0) {
    if (delta % config.steps_per_hour != 0)
      config_error("delta_days", "historical window must align to whole hours");
    const int hist_hours = delta / config.steps_per_hour;
    if (hist_hours <= config.forecast.lag)
      config_error("lag", "historical window must exceed the lag");
    const auto series = build_demand_series(prep.timeline, 0, hist_hours,
                                            config.steps_per_hour);
    prep.forecaster = train_forecaster(series, config.forecast);
    const int future_hours =
        (future_steps + config.steps_per_hour - 1) / config.steps_per_hour;
    const auto forecasts = forecast_all(*prep.forecaster, series, future_hours);
    const auto sampled = sample_future_requests(
        forecasts, delta + 1, config.steps_per_hour,
        mix_seed(config.seed, 0x505244), 1'000'000);
    for (const Request& r : sampled)
      if (r.t < prep.total_steps) predicted_buckets[r.t].push_back(r);
  }

  // Training streams: the real historical-and-current prefix, then either
  // forecast-sampled futures or nothing.
  prep.train_with_pred.resize(prep.total_steps);
  prep.train_without_pred.resize(prep.total_steps);
  for (int t = 0; t <= delta; ++t) {
    prep.train_with_pred[t] = prep.timeline[t];
    prep.train_without_pred[t] = prep.timeline[t];
  }
  for (int t = delta + 1; t < prep.total_steps; ++t)
    prep.train_with_pred[t] = std::move(predicted_buckets[t]);
  return prep;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const auto policies = config.policy_list();
  bool any_prediction = false;
  for (const auto& name : policies) {
    const PolicyKind kind = parse_policy(name);
    if (kind == PolicyKind::kMomaql || kind == PolicyKind::kMomaqlNoFair)
      any_prediction = true;
  }
  PreparedExperiment prep = prepare_experiment(config, any_prediction);
  const CityGraph& graph = prep.graph;
  const Timeline& timeline = prep.timeline;
  const int total_steps = prep.total_steps;
  const int steps_per_day = prep.steps_per_day;
  const double pooled_forecast_mse =
      prep.forecaster ? prep.forecaster->pooled_train_mse : 0.0;

  std::vector<int> horizon_day_list;
  if (config.horizon_days.empty()) {
    for (int h = 1; h <= total_steps / steps_per_day; ++h)
      horizon_day_list.push_back(h);
  } else {
    for (const std::string& s : split_list(config.horizon_days))
      horizon_day_list.push_back(to_int("horizon_days", s));
  }
  std::vector<int> horizon_steps;
  for (int h : horizon_day_list) horizon_steps.push_back(h * steps_per_day);

  EnvConfig env_cfg{config.speed, config.ttl};
  ExperimentResult result;
  result.episode_steps = total_steps;
  result.steps_per_day = steps_per_day;
  result.config_hash = [&] {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(config.canonical_text())));
    return std::string(buf);
  }();

  for (const std::uint64_t seed : config.seed_list()) {
    const auto drivers = make_drivers(config, graph, seed);
    for (const auto& name : policies) {
      const PolicyKind kind = parse_policy(name);
      ArmResult arm;
      arm.policy = name;
      arm.seed = seed;
      if (kind == PolicyKind::kGreedy || kind == PolicyKind::kMatching) {
        arm.eval = run_baseline_episode(graph, drivers, env_cfg, timeline,
                                        kind, config.hp.lambda, config.hp.omega);
      } else {
        PolicySpec spec{kind, config.hp};
        if (kind == PolicyKind::kMomaqlNoPred)
          spec = ablation_no_prediction(config.hp);
        if (kind == PolicyKind::kMomaqlNoFair)
          spec = ablation_no_fairness(config.hp);
        const Timeline& stream = spec.uses_prediction()
                                     ? prep.train_with_pred
                                     : prep.train_without_pred;
        TrainResult trained = train(graph, drivers, env_cfg, {stream}, spec.hp,
                                    mix_seed(seed, 0x54524e));
        arm.training_curve = std::move(trained.episode_returns);
        arm.eval = run_episode(graph, drivers, env_cfg, timeline,
                               trained.tables, spec.hp, 0.0,
                               EpisodeMode::kEval, mix_seed(seed, 0x45564c));
        if (spec.uses_prediction()) arm.forecast_mse = pooled_forecast_mse;
      }
      verify_episode(arm.eval, graph, static_cast<int>(drivers.size()));
      arm.horizon = horizon_stability(arm.eval.log,
                                      static_cast<int>(drivers.size()),
                                      total_steps, horizon_steps);
      result.arms.push_back(std::move(arm));
    }
  }

  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  {
    std::ofstream out(fs::path(config.out_dir) / "metrics.csv");
    out << "method,seed,total_utility,fairness,normalized_fairness,min,mean,max\n";
    for (const ArmResult& arm : result.arms) out << format_metrics_row(arm) << "\n";
  }
  {
    std::ofstream out(fs::path(config.out_dir) / "horizon.csv");
    out << "method,seed,horizon_days,fairness\n";
    for (const ArmResult& arm : result.arms)
      for (size_t i = 0; i < arm.horizon.size(); ++i)
        out << arm.policy << "," << arm.seed << "," << horizon_day_list[i]
            << "," << fmt(arm.horizon[i].fairness) << "\n";
  }
  {
    std::ofstream out(fs::path(config.out_dir) / "curves.csv");
    out << "method,seed,episode,scalarised_return\n";
    for (const ArmResult& arm : result.arms)
      for (size_t e = 0; e < arm.training_curve.size(); ++e)
        out << arm.policy << "," << arm.seed << "," << e << ","
            << fmt(arm.training_curve[e]) << "\n";
  }
  {
    std::ofstream out(fs::path(config.out_dir) / "manifest.txt");
    out << "fairdispatch " << kVersion << "\n";
    out << "config_hash=" << result.config_hash << "\n";
    out << "episode_steps=" << total_steps << "\n";
    out << "---\n" << config.canonical_text();
  }
  return result;
}

}  // namespace fairdispatch
