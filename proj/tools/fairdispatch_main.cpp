// Command-line experiment runner. Subcommands: synth, ingest, forecast,
// train, eval, table, horizon, ablation. Every configuration key can be set
// in a key=value config file (--config FILE) and overridden by --key=value
// flags. Exit codes: 0 success, 1 configuration error, 2 runtime failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fairdispatch/experiment.hpp"
#include "fairdispatch/util.hpp"

namespace fd = fairdispatch;
namespace fs = std::filesystem;

namespace {

void usage() {
  std::cout <<
      "usage: fairdispatch <subcommand> [--config FILE] [--key=value ...]\n"
      "\n"
      "subcommands:\n"
      "  synth     generate a synthetic city: graph.txt + requests.txt\n"
      "  ingest    parse trip records into graph.txt + requests.txt\n"
      "  forecast  train the per-OD demand forecaster, write forecaster.txt\n"
      "  train     train a dispatcher policy, write qtables + curve\n"
      "  eval      evaluate the configured policies, write metrics.csv\n"
      "  table     compare all five policies (metrics.csv)\n"
      "  horizon   fairness vs. time-horizon series (horizon.csv)\n"
      "  ablation  full method vs. no-prediction vs. no-fairness\n"
      "\n"
      "common keys: source, trips_file, bbox, merge_radius, batch_seconds,\n"
      "  time_filter, sample_rate, synth_*, total_days, steps_per_hour,\n"
      "  delta_days, drivers, capacity, policy, lambda, omega, gamma, alpha,\n"
      "  epsilon_start, epsilon_floor, episodes, speed, ttl, lag, hidden,\n"
      "  epochs, lr, min_demand, train_before, seed, seeds, out_dir\n";
}

std::string normalize_key(std::string key) {
  for (char& c : key)
    if (c == '-') c = '_';
  return key;
}

// --config is applied immediately; later flags override earlier values.
std::map<std::string, std::string> parse_flags(int argc, char** argv) {
  std::map<std::string, std::string> kv;
  for (int i = 2; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--", 0) != 0)
      throw std::invalid_argument("expected --key=value, got: " + arg);
    arg = arg.substr(2);
    std::string key, value;
    const auto eq = arg.find('=');
    if (eq != std::string::npos) {
      key = arg.substr(0, eq);
      value = arg.substr(eq + 1);
    } else {
      if (i + 1 >= argc)
        throw std::invalid_argument("flag --" + arg + " needs a value");
      key = arg;
      value = argv[++i];
    }
    key = normalize_key(key);
    if (key == "config") {
      for (const auto& [k, v] : fd::parse_config_file(value)) kv[k] = v;
    } else {
      kv[key] = value;
    }
  }
  return kv;
}

void write_city(const fd::CityGraph& graph, const fd::Timeline& timeline,
                const std::string& out_dir) {
  fs::create_directories(out_dir);
  graph.save((fs::path(out_dir) / "graph.txt").string());
  fd::save_timeline(timeline, (fs::path(out_dir) / "requests.txt").string());
}

int count_requests(const fd::Timeline& timeline) {
  int n = 0;
  for (const auto& bucket : timeline) n += static_cast<int>(bucket.size());
  return n;
}

int cmd_synth(const fd::ExperimentConfig& config) {
  fd::ExperimentConfig c = config;
  c.source = "synth";
  const auto data = fd::ingest_data(c);
  write_city(data.graph, data.timeline, c.out_dir);
  std::cout << "nodes=" << data.graph.num_nodes()
            << " edges=" << data.graph.edges().size()
            << " steps=" << data.timeline.size()
            << " requests=" << count_requests(data.timeline) << "\n"
            << "wrote " << c.out_dir << "/graph.txt and requests.txt\n";
  return 0;
}

int cmd_ingest(const fd::ExperimentConfig& config) {
  fd::ExperimentConfig c = config;
  c.source = "file";
  const auto data = fd::ingest_data(c);
  write_city(data.graph, data.timeline, c.out_dir);
  std::cout << "parsed=" << data.parse_report.parsed
            << " dropped_bbox=" << data.parse_report.dropped_bbox
            << " dropped_malformed=" << data.parse_report.dropped_malformed
            << " dropped_same_node=" << data.timeline_report.dropped_same_node
            << "\n"
            << "nodes=" << data.graph.num_nodes()
            << " edges=" << data.graph.edges().size()
            << " steps=" << data.timeline.size()
            << " requests=" << count_requests(data.timeline) << "\n"
            << "wrote " << c.out_dir << "/graph.txt and requests.txt\n";
  return 0;
}

int cmd_forecast(const fd::ExperimentConfig& config) {
  const auto prep = fd::prepare_experiment(config, true);
  if (!prep.forecaster)
    throw std::invalid_argument("forecast: no future window to predict");
  fs::create_directories(config.out_dir);
  const auto path = (fs::path(config.out_dir) / "forecaster.txt").string();
  fd::save_forecaster(*prep.forecaster, path);

  // Held-out check: predicted vs. actual hourly counts over the future
  // window, pooled across the modeled pairs.
  const int hist_hours = prep.delta / config.steps_per_hour;
  const int future_steps = prep.total_steps - prep.delta - 1;
  const int future_hours =
      (future_steps + config.steps_per_hour - 1) / config.steps_per_hour;
  const auto history = fd::build_demand_series(prep.timeline, 0, hist_hours,
                                               config.steps_per_hour);
  const auto actual = fd::build_demand_series(
      prep.timeline, prep.delta + 1, future_hours, config.steps_per_hour);
  const auto predictions =
      fd::forecast_all(*prep.forecaster, history, future_hours);
  double pooled = 0.0;
  int pooled_n = 0;
  for (const auto& [od, predicted] : predictions) {
    const std::vector<double> zeros(future_hours, 0.0);
    const auto it = actual.find(od);
    pooled += fd::mse(predicted, it == actual.end() ? zeros : it->second) *
              future_hours;
    pooled_n += future_hours;
  }
  std::cout << "models=" << prep.forecaster->models.size()
            << " train_mse=" << prep.forecaster->pooled_train_mse
            << " future_mse=" << (pooled_n ? pooled / pooled_n : 0.0) << "\n"
            << "wrote " << path << "\n";
  return 0;
}

int cmd_train(const fd::ExperimentConfig& config) {
  for (const std::string& name : config.policy_list()) {
    const fd::PolicyKind kind = fd::parse_policy(name);
    fd::PolicySpec spec{kind, config.hp};
    if (kind == fd::PolicyKind::kMomaqlNoPred)
      spec = fd::ablation_no_prediction(config.hp);
    else if (kind == fd::PolicyKind::kMomaqlNoFair)
      spec = fd::ablation_no_fairness(config.hp);
    else if (kind != fd::PolicyKind::kMomaql)
      throw std::invalid_argument("train: policy " + name + " has no tables");

    const auto prep = fd::prepare_experiment(config, spec.uses_prediction());
    fs::create_directories(config.out_dir);
    for (const std::uint64_t seed : config.seed_list()) {
      const auto drivers = fd::make_drivers(config, prep.graph, seed);
      const fd::Timeline& stream = spec.uses_prediction()
                                       ? prep.train_with_pred
                                       : prep.train_without_pred;
      const auto trained =
          fd::train(prep.graph, drivers, {config.speed, config.ttl}, {stream},
                    spec.hp, fd::mix_seed(seed, 0x54524e));
      const std::string base = name + "_seed" + std::to_string(seed);
      const auto qpath =
          (fs::path(config.out_dir) / ("qtables_" + base + ".txt")).string();
      trained.tables.save(qpath, prep.graph.num_nodes());
      std::ofstream curve(fs::path(config.out_dir) / ("curve_" + base + ".csv"));
      curve << "episode,scalarised_return\n";
      for (size_t e = 0; e < trained.episode_returns.size(); ++e)
        curve << e << "," << trained.episode_returns[e] << "\n";
      std::cout << "trained " << name << " seed=" << seed << " episodes="
                << trained.episode_returns.size() << " final_return="
                << (trained.episode_returns.empty()
                        ? 0.0
                        : trained.episode_returns.back())
                << " -> " << qpath << "\n";
    }
  }
  return 0;
}

int cmd_eval(const fd::ExperimentConfig& config) {
  if (!config.qtables_file.empty()) {
    const auto names = config.policy_list();
    if (names.size() != 1 ||
        !fd::PolicySpec{fd::parse_policy(names[0]), {}}.trains())
      throw std::invalid_argument("eval: qtables_file needs one trainable policy");
    const auto prep = fd::prepare_experiment(config, false);
    fd::QTables tables = fd::QTables::load(config.qtables_file);
    const auto drivers = fd::make_drivers(config, prep.graph, config.seed);
    fd::Hyperparams hp = config.hp;
    if (fd::parse_policy(names[0]) == fd::PolicyKind::kMomaqlNoFair)
      hp.lambda = 0.0;
    const auto result = fd::run_episode(
        prep.graph, drivers, {config.speed, config.ttl}, prep.timeline, tables,
        hp, 0.0, fd::EpisodeMode::kEval, fd::mix_seed(config.seed, 0x45564c));
    fd::verify_episode(result, prep.graph, static_cast<int>(drivers.size()));
    const auto& m = result.metrics;
    std::printf(
        "method,seed,total_utility,fairness,normalized_fairness,min,mean,max\n");
    std::printf("%s,%llu,%.10g,%.10g,%s,%.10g,%.10g,%.10g\n", names[0].c_str(),
                static_cast<unsigned long long>(config.seed), m.total_utility,
                m.fairness,
                m.normalized_fairness
                    ? std::to_string(*m.normalized_fairness).c_str()
                    : "nan",
                m.min_utility, m.mean_utility, m.max_utility);
    return 0;
  }
  fd::run_experiment(config);
  std::cout << std::ifstream(fs::path(config.out_dir) / "metrics.csv").rdbuf();
  return 0;
}

int cmd_table(const fd::ExperimentConfig& config) {
  fd::ExperimentConfig c = config;
  c.policy = "greedy,matching,momaql,momaql_no_pred,momaql_no_fair";
  fd::run_experiment(c);
  std::cout << std::ifstream(fs::path(c.out_dir) / "metrics.csv").rdbuf();
  return 0;
}

int cmd_horizon(const fd::ExperimentConfig& config) {
  fd::run_experiment(config);
  std::cout << std::ifstream(fs::path(config.out_dir) / "horizon.csv").rdbuf();
  return 0;
}

int cmd_ablation(const fd::ExperimentConfig& config) {
  fd::ExperimentConfig c = config;
  c.policy = "momaql,momaql_no_pred,momaql_no_fair";
  const auto result = fd::run_experiment(c);
  std::ofstream out(fs::path(c.out_dir) / "ablation.csv");
  out << "method,seed,total_utility,fairness\n";
  std::cout << "method,seed,total_utility,fairness\n";
  for (const auto& arm : result.arms) {
    char row[160];
    std::snprintf(row, sizeof(row), "%s,%llu,%.10g,%.10g\n", arm.policy.c_str(),
                  static_cast<unsigned long long>(arm.seed),
                  arm.eval.metrics.total_utility, arm.eval.metrics.fairness);
    out << row;
    std::cout << row;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    usage();
    return 1;
  }
  const std::string command = argv[1];
  if (command == "help" || command == "--help" || command == "-h") {
    usage();
    return 0;
  }
  fd::ExperimentConfig config;
  try {
    config = fd::ExperimentConfig::from_keys(parse_flags(argc, argv));
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }
  try {
    if (command == "synth") return cmd_synth(config);
    if (command == "ingest") return cmd_ingest(config);
    if (command == "forecast") return cmd_forecast(config);
    if (command == "train") return cmd_train(config);
    if (command == "eval") return cmd_eval(config);
    if (command == "table") return cmd_table(config);
    if (command == "horizon") return cmd_horizon(config);
    if (command == "ablation") return cmd_ablation(config);
    std::cerr << "unknown subcommand: " << command << "\n";
    usage();
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
