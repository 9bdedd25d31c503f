#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>

#include "fairdispatch/baselines.hpp"
#include "fairdispatch/dispatch.hpp"
#include "fairdispatch/experiment.hpp"
#include "fairdispatch/forecast.hpp"
#include "fairdispatch/graph.hpp"
#include "fairdispatch/metrics.hpp"
#include "fairdispatch/trips.hpp"

namespace py = pybind11;
using namespace fairdispatch;

namespace {

Timeline timeline_from_lists(
    const std::vector<std::vector<std::tuple<int, int, int, int>>>& buckets) {
  Timeline timeline(buckets.size());
  for (size_t t = 0; t < buckets.size(); ++t)
    for (const auto& [id, step, origin, dest] : buckets[t])
      timeline[t].push_back({id, step, origin, dest});
  return timeline;
}

}  // namespace

PYBIND11_MODULE(_fairdispatch, m) {
  m.doc() = "Ride-hailing dispatch simulator with a long-term fairness "
            "objective: city graph, demand forecasting, learned and baseline "
            "dispatch policies, and evaluation metrics.";
  m.attr("__version__") = kVersion;
  m.attr("IN_TRANSIT") = kInTransit;

  py::class_<Request>(m, "Request")
      .def(py::init<>())
      .def(py::init([](int id, int t, NodeId origin, NodeId dest) {
             return Request{id, t, origin, dest};
           }),
           py::arg("id"), py::arg("t"), py::arg("origin"), py::arg("dest"))
      .def_readwrite("id", &Request::id)
      .def_readwrite("t", &Request::t)
      .def_readwrite("origin", &Request::origin)
      .def_readwrite("dest", &Request::dest)
      .def("__repr__", [](const Request& r) {
        return "Request(id=" + std::to_string(r.id) + ", t=" +
               std::to_string(r.t) + ", " + std::to_string(r.origin) + "->" +
               std::to_string(r.dest) + ")";
      });

  py::class_<Edge>(m, "Edge")
      .def(py::init([](NodeId from, NodeId to, double distance) {
             return Edge{from, to, distance};
           }),
           py::arg("from_node"), py::arg("to_node"), py::arg("distance"))
      .def_readwrite("from_node", &Edge::from)
      .def_readwrite("to_node", &Edge::to)
      .def_readwrite("distance", &Edge::distance);

  py::class_<CityGraph>(m, "CityGraph")
      .def(py::init<>())
      .def(py::init<int, std::vector<Edge>>(), py::arg("num_nodes"),
           py::arg("edges"))
      .def_property_readonly("num_nodes", &CityGraph::num_nodes)
      .def("shortest_distance", &CityGraph::shortest_distance, py::arg("from_node"),
           py::arg("to_node"))
      .def("trip_utility", &CityGraph::trip_utility, py::arg("driver_node"),
           py::arg("request"))
      .def("save", &CityGraph::save, py::arg("path"))
      .def_static("load", &CityGraph::load, py::arg("path"));

  py::class_<DriverState>(m, "DriverState")
      .def(py::init([](int id, NodeId node, int capacity) {
             return DriverState{id, capacity, 0, node, 0.0, {}};
           }),
           py::arg("id"), py::arg("node"), py::arg("capacity") = 4)
      .def_readwrite("id", &DriverState::id)
      .def_readwrite("capacity", &DriverState::capacity)
      .def_readwrite("onboard", &DriverState::onboard)
      .def_readwrite("node", &DriverState::node)
      .def_readwrite("total_utility", &DriverState::total_utility);

  py::class_<EpisodeMetrics>(m, "EpisodeMetrics")
      .def_readonly("total_utility", &EpisodeMetrics::total_utility)
      .def_readonly("fairness", &EpisodeMetrics::fairness)
      .def_readonly("normalized_fairness", &EpisodeMetrics::normalized_fairness)
      .def_readonly("min_utility", &EpisodeMetrics::min_utility)
      .def_readonly("mean_utility", &EpisodeMetrics::mean_utility)
      .def_readonly("max_utility", &EpisodeMetrics::max_utility);

  py::class_<AssignmentRecord>(m, "AssignmentRecord")
      .def_readonly("request_id", &AssignmentRecord::request_id)
      .def_readonly("driver_id", &AssignmentRecord::driver_id)
      .def_readonly("step", &AssignmentRecord::step)
      .def_readonly("origin", &AssignmentRecord::origin)
      .def_readonly("dest", &AssignmentRecord::dest)
      .def_readonly("driver_node", &AssignmentRecord::driver_node)
      .def_readonly("utility", &AssignmentRecord::utility);

  py::class_<EpisodeResult>(m, "EpisodeResult")
      .def_readonly("driver_utilities", &EpisodeResult::driver_utilities)
      .def_readonly("metrics", &EpisodeResult::metrics)
      .def_readonly("log", &EpisodeResult::log)
      .def_readonly("scalarised_return", &EpisodeResult::scalarised_return)
      .def_readonly("steps", &EpisodeResult::steps)
      .def_readonly("expired_requests", &EpisodeResult::expired_requests);

  m.def("total_utility", &total_utility, py::arg("per_driver"));
  m.def("fairness_variance", &fairness_variance, py::arg("per_driver"));
  m.def("normalized_fairness", &normalized_fairness, py::arg("per_driver"));
  m.def("scalarise", &scalarise, py::arg("per_driver_rewards"),
        py::arg("lambda_"), py::arg("omega"));
  m.def("horizon_stability",
        [](const std::vector<AssignmentRecord>& log, int num_drivers,
           int episode_steps, const std::vector<int>& horizons) {
          std::vector<std::pair<int, double>> out;
          for (const auto& p :
               horizon_stability(log, num_drivers, episode_steps, horizons))
            out.emplace_back(p.horizon_steps, p.fairness);
          return out;
        },
        py::arg("log"), py::arg("num_drivers"), py::arg("episode_steps"),
        py::arg("horizon_steps"));

  py::class_<Hyperparams>(m, "Hyperparams")
      .def(py::init<>())
      .def_readwrite("lambda_", &Hyperparams::lambda)
      .def_readwrite("omega", &Hyperparams::omega)
      .def_readwrite("gamma", &Hyperparams::gamma)
      .def_readwrite("alpha", &Hyperparams::alpha)
      .def_readwrite("epsilon_start", &Hyperparams::epsilon_start)
      .def_readwrite("epsilon_floor", &Hyperparams::epsilon_floor)
      .def_readwrite("episodes", &Hyperparams::episodes);

  py::class_<QTables>(m, "QTables")
      .def(py::init<int>(), py::arg("num_drivers"))
      .def_property_readonly("num_drivers", &QTables::num_drivers)
      .def("entry_count", &QTables::entry_count)
      .def("save", &QTables::save, py::arg("path"), py::arg("num_nodes"))
      .def_static("load", &QTables::load, py::arg("path"));

  m.def(
      "train_dispatcher",
      [](const CityGraph& graph, const std::vector<DriverState>& drivers,
         double speed, int ttl,
         const std::vector<std::vector<std::tuple<int, int, int, int>>>& stream,
         const Hyperparams& hp, std::uint64_t seed) {
        auto result = train(graph, drivers, {speed, ttl},
                            {timeline_from_lists(stream)}, hp, seed);
        return py::make_tuple(std::move(result.tables),
                              std::move(result.episode_returns));
      },
      py::arg("graph"), py::arg("drivers"), py::arg("speed"), py::arg("ttl"),
      py::arg("stream"), py::arg("hyperparams"), py::arg("seed"),
      "Trains the centralised multi-agent dispatcher; returns (tables, "
      "per-episode scalarised returns).");

  m.def(
      "evaluate_dispatcher",
      [](const CityGraph& graph, const std::vector<DriverState>& drivers,
         double speed, int ttl,
         const std::vector<std::vector<std::tuple<int, int, int, int>>>& stream,
         QTables& tables, const Hyperparams& hp, std::uint64_t seed) {
        auto result =
            run_episode(graph, drivers, {speed, ttl},
                        timeline_from_lists(stream), tables, hp, 0.0,
                        EpisodeMode::kEval, seed);
        verify_episode(result, graph, static_cast<int>(drivers.size()));
        return result;
      },
      py::arg("graph"), py::arg("drivers"), py::arg("speed"), py::arg("ttl"),
      py::arg("stream"), py::arg("tables"), py::arg("hyperparams"),
      py::arg("seed"),
      "Greedy (epsilon = 0) evaluation episode under the learned tables.");

  m.def(
      "run_baseline",
      [](const CityGraph& graph, const std::vector<DriverState>& drivers,
         double speed, int ttl,
         const std::vector<std::vector<std::tuple<int, int, int, int>>>& stream,
         const std::string& policy, double lambda, double omega) {
        return run_baseline_episode(graph, drivers, {speed, ttl},
                                    timeline_from_lists(stream),
                                    parse_policy(policy), lambda, omega);
      },
      py::arg("graph"), py::arg("drivers"), py::arg("speed"), py::arg("ttl"),
      py::arg("stream"), py::arg("policy"), py::arg("lambda_"),
      py::arg("omega"), "Runs a greedy or matching baseline episode.");

  py::class_<BatchAssignmentProblem::DriverInfo>(m, "BatchDriver")
      .def(py::init([](int id, NodeId node, double cumulative_utility) {
             return BatchAssignmentProblem::DriverInfo{id, node,
                                                       cumulative_utility};
           }),
           py::arg("id"), py::arg("node"), py::arg("cumulative_utility") = 0.0);

  py::class_<BatchAssignmentProblem>(m, "BatchAssignmentProblem")
      .def(py::init([](std::vector<BatchAssignmentProblem::DriverInfo> drivers,
                       std::vector<Request> requests, double lambda) {
             return BatchAssignmentProblem{std::move(drivers),
                                           std::move(requests), lambda};
           }),
           py::arg("drivers"), py::arg("requests"), py::arg("lambda_") = 1.0);

  m.def("greedy_assign",
        [](const BatchAssignmentProblem& problem, const CityGraph& graph,
           bool allow_reject) {
          return greedy_assign(problem, graph, allow_reject).pairs;
        },
        py::arg("problem"), py::arg("graph"), py::arg("allow_reject") = true);
  m.def("matching_assign",
        [](const BatchAssignmentProblem& problem, const CityGraph& graph,
           double lambda) {
          return matching_assign(problem, graph, lambda).pairs;
        },
        py::arg("problem"), py::arg("graph"), py::arg("lambda_"));
  m.def("max_weight_assignment", &max_weight_assignment, py::arg("weights"));

  m.def("make_features", &make_features, py::arg("counts"), py::arg("lag"));
  m.def(
      "train_mlp",
      [](const FeatureSet& features, int hidden_width, int epochs,
         double learning_rate, std::uint64_t seed) {
        MlpTrainConfig config;
        config.hidden_width = hidden_width;
        config.epochs = epochs;
        config.learning_rate = learning_rate;
        config.seed = seed;
        auto [model, report] = train_mlp(features, config);
        return py::make_tuple(std::move(model), report.epoch_mse);
      },
      py::arg("features"), py::arg("hidden_width") = 32,
      py::arg("epochs") = 200, py::arg("learning_rate") = 1e-3,
      py::arg("seed") = 0);
  py::class_<MlpModel>(m, "MlpModel")
      .def_readonly("input_width", &MlpModel::input_width)
      .def_readonly("hidden_width", &MlpModel::hidden_width)
      .def("forward", &MlpModel::forward, py::arg("window"));
  m.def("predict_counts", &predict_counts, py::arg("model"),
        py::arg("history"), py::arg("horizon_hours"));
  m.def("mse", &mse, py::arg("predicted"), py::arg("actual"));

  py::class_<SynthSpec>(m, "SynthSpec")
      .def(py::init<>())
      .def_readwrite("num_nodes", &SynthSpec::num_nodes)
      .def_readwrite("edge_density", &SynthSpec::edge_density)
      .def_readwrite("base_rate", &SynthSpec::base_rate)
      .def_readwrite("amplitude", &SynthSpec::amplitude)
      .def_readwrite("hot_pairs", &SynthSpec::hot_pairs)
      .def_readwrite("hot_share", &SynthSpec::hot_share)
      .def_readwrite("steps_per_day", &SynthSpec::steps_per_day)
      .def_readwrite("total_days", &SynthSpec::total_days)
      .def_readwrite("seed", &SynthSpec::seed);

  m.def(
      "generate_synthetic_city",
      [](const SynthSpec& spec) {
        auto city = generate_synthetic_city(spec);
        std::vector<std::vector<std::tuple<int, int, int, int>>> timeline;
        for (const auto& bucket : city.timeline) {
          timeline.emplace_back();
          for (const Request& r : bucket)
            timeline.back().emplace_back(r.id, r.t, r.origin, r.dest);
        }
        return py::make_tuple(std::move(city.graph), std::move(timeline));
      },
      py::arg("spec"),
      "Seeded strongly-connected random city plus a request timeline; "
      "returns (graph, timeline) with requests as (id, t, origin, dest).");

  m.def("fig1_scenario", [] {
    auto s = fig1_scenario();
    std::vector<std::vector<std::tuple<int, int, int, int>>> timeline;
    for (const auto& bucket : s.timeline) {
      timeline.emplace_back();
      for (const Request& r : bucket)
        timeline.back().emplace_back(r.id, r.t, r.origin, r.dest);
    }
    return py::make_tuple(std::move(s.graph), std::move(timeline), s.drivers,
                          s.env.speed, s.env.request_ttl, s.lambda);
  });

  m.def(
      "run_experiment",
      [](const std::map<std::string, std::string>& keys) {
        const auto config = ExperimentConfig::from_keys(keys);
        const auto result = run_experiment(config);
        py::list arms;
        for (const auto& arm : result.arms) {
          py::dict row;
          row["policy"] = arm.policy;
          row["seed"] = arm.seed;
          row["total_utility"] = arm.eval.metrics.total_utility;
          row["fairness"] = arm.eval.metrics.fairness;
          row["normalized_fairness"] = arm.eval.metrics.normalized_fairness;
          row["min"] = arm.eval.metrics.min_utility;
          row["mean"] = arm.eval.metrics.mean_utility;
          row["max"] = arm.eval.metrics.max_utility;
          py::list horizon;
          for (const auto& p : arm.horizon)
            horizon.append(py::make_tuple(p.horizon_steps, p.fairness));
          row["horizon"] = horizon;
          arms.append(row);
        }
        return arms;
      },
      py::arg("config"),
      "Runs the configured experiment (same keys as the CLI) and returns "
      "one metrics dict per (policy, seed) arm; files land in out_dir.");
}
