#include "fairdispatch/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fairdispatch/metrics.hpp"

namespace fairdispatch {

namespace {

std::vector<double> final_utilities(const BatchAssignmentProblem& problem,
                                    const CityGraph& graph,
                                    const BatchChoice& choice) {
  std::vector<double> utilities;
  utilities.reserve(problem.drivers.size());
  for (const auto& d : problem.drivers) utilities.push_back(d.cumulative_utility);
  for (const auto& [driver_id, request_id] : choice.pairs) {
    const auto d = std::find_if(problem.drivers.begin(), problem.drivers.end(),
                                [&](const auto& x) { return x.id == driver_id; });
    const auto r = std::find_if(problem.requests.begin(), problem.requests.end(),
                                [&](const Request& x) { return x.id == request_id; });
    if (d == problem.drivers.end() || r == problem.requests.end())
      throw std::invalid_argument("batch choice references unknown ids");
    auto u = graph.trip_utility(d->node, *r);
    if (!u) throw std::invalid_argument("batch choice uses infeasible pair");
    utilities[d - problem.drivers.begin()] += *u;
  }
  return utilities;
}

}  // namespace

double batch_objective(const BatchAssignmentProblem& problem,
                       const CityGraph& graph, const BatchChoice& choice) {
  if (problem.drivers.empty()) return 0.0;
  const auto utilities = final_utilities(problem, graph, choice);
  return total_utility(utilities) -
         problem.lambda * fairness_variance(utilities);
}

BatchChoice greedy_assign(const BatchAssignmentProblem& problem,
                          const CityGraph& graph, bool allow_reject) {
  BatchChoice choice;
  if (problem.drivers.empty() || problem.requests.empty()) return choice;

  std::vector<double> utilities;
  for (const auto& d : problem.drivers) utilities.push_back(d.cumulative_utility);
  std::vector<bool> taken(problem.drivers.size(), false);
  const double base_var_coeff = problem.lambda;

  for (const Request& r : problem.requests) {
    int best = -1;
    double best_delta = 0.0;
    const double var_before = fairness_variance(utilities);
    for (size_t v = 0; v < problem.drivers.size(); ++v) {
      if (taken[v]) continue;
      auto u = graph.trip_utility(problem.drivers[v].node, r);
      if (!u) continue;
      std::vector<double> with = utilities;
      with[v] += *u;
      const double delta =
          *u - base_var_coeff * (fairness_variance(with) - var_before);
      if (best < 0 || delta > best_delta) {
        best = static_cast<int>(v);
        best_delta = delta;
      }
    }
    if (best < 0) continue;  // no feasible driver this batch
    if (allow_reject && best_delta < 0.0) continue;
    auto u = graph.trip_utility(problem.drivers[best].node, r);
    utilities[best] += *u;
    taken[best] = true;
    choice.pairs.emplace_back(problem.drivers[best].id, r.id);
  }
  return choice;
}

std::vector<int> max_weight_assignment(
    const std::vector<std::vector<double>>& weights) {
  const int rows = static_cast<int>(weights.size());
  if (rows == 0) return {};
  const int cols = static_cast<int>(weights.front().size());
  if (cols < rows)
    throw std::invalid_argument("assignment: needs rows <= columns");

  // Hungarian algorithm with potentials on the cost matrix (negated
  // weights), 1-indexed over rows and columns.
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> row_potential(rows + 1, 0.0), col_potential(cols + 1, 0.0);
  std::vector<int> matched_row(cols + 1, 0);  // column -> row
  std::vector<int> path(cols + 1, 0);

  auto cost = [&](int row, int col) { return -weights[row - 1][col - 1]; };

  for (int row = 1; row <= rows; ++row) {
    matched_row[0] = row;
    int j0 = 0;
    std::vector<double> min_cost(cols + 1, kInf);
    std::vector<bool> used(cols + 1, false);
    do {
      used[j0] = true;
      const int i0 = matched_row[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double reduced =
            cost(i0, j) - row_potential[i0] - col_potential[j];
        if (reduced < min_cost[j]) {
          min_cost[j] = reduced;
          path[j] = j0;
        }
        if (min_cost[j] < delta) {
          delta = min_cost[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        if (used[j]) {
          row_potential[matched_row[j]] += delta;
          col_potential[j] -= delta;
        } else {
          min_cost[j] -= delta;
        }
      }
      j0 = j1;
    } while (matched_row[j0] != 0);
    do {
      const int j1 = path[j0];
      matched_row[j0] = matched_row[j1];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> column_of_row(rows, -1);
  for (int j = 1; j <= cols; ++j)
    if (matched_row[j] > 0) column_of_row[matched_row[j] - 1] = j - 1;
  return column_of_row;
}

namespace {

std::vector<std::vector<double>> matching_weights(
    const BatchAssignmentProblem& problem, const CityGraph& graph,
    double lambda) {
  const size_t n_drivers = problem.drivers.size();
  const size_t n_requests = problem.requests.size();
  std::vector<double> base;
  for (const auto& d : problem.drivers) base.push_back(d.cumulative_utility);
  const double var_before = fairness_variance(base);

  std::vector<std::vector<double>> w(
      n_drivers, std::vector<double>(n_requests + n_drivers, kMatchingExcluded));
  for (size_t v = 0; v < n_drivers; ++v) {
    for (size_t r = 0; r < n_requests; ++r) {
      auto u = graph.trip_utility(problem.drivers[v].node, problem.requests[r]);
      if (!u) continue;
      std::vector<double> with = base;
      with[v] += *u;
      w[v][r] = *u - lambda * (fairness_variance(with) - var_before);
    }
    for (size_t k = 0; k < n_drivers; ++k) w[v][n_requests + k] = 0.0;  // NoOp
  }
  return w;
}

}  // namespace

BatchChoice matching_assign(const BatchAssignmentProblem& problem,
                            const CityGraph& graph, double lambda) {
  BatchChoice choice;
  if (problem.drivers.empty() || problem.requests.empty()) return choice;
  const auto weights = matching_weights(problem, graph, lambda);
  const auto column_of_row = max_weight_assignment(weights);
  for (size_t v = 0; v < problem.drivers.size(); ++v) {
    const int col = column_of_row[v];
    if (col < 0 || col >= static_cast<int>(problem.requests.size())) continue;
    if (weights[v][col] <= kMatchingExcluded / 2) continue;
    choice.pairs.emplace_back(problem.drivers[v].id, problem.requests[col].id);
  }
  return choice;
}

double matching_weight_total(const BatchAssignmentProblem& problem,
                             const CityGraph& graph, double lambda,
                             const BatchChoice& choice) {
  const auto weights = matching_weights(problem, graph, lambda);
  double total = 0.0;
  for (const auto& [driver_id, request_id] : choice.pairs) {
    int v = -1, r = -1;
    for (size_t i = 0; i < problem.drivers.size(); ++i)
      if (problem.drivers[i].id == driver_id) v = static_cast<int>(i);
    for (size_t i = 0; i < problem.requests.size(); ++i)
      if (problem.requests[i].id == request_id) r = static_cast<int>(i);
    if (v < 0 || r < 0)
      throw std::invalid_argument("matching_weight_total: unknown ids");
    total += weights[v][r];
  }
  return total;
}

PolicyKind parse_policy(const std::string& name) {
  if (name == "greedy") return PolicyKind::kGreedy;
  if (name == "matching") return PolicyKind::kMatching;
  if (name == "momaql") return PolicyKind::kMomaql;
  if (name == "momaql_no_pred") return PolicyKind::kMomaqlNoPred;
  if (name == "momaql_no_fair") return PolicyKind::kMomaqlNoFair;
  throw std::invalid_argument("unknown policy name: " + name);
}

std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kGreedy: return "greedy";
    case PolicyKind::kMatching: return "matching";
    case PolicyKind::kMomaql: return "momaql";
    case PolicyKind::kMomaqlNoPred: return "momaql_no_pred";
    case PolicyKind::kMomaqlNoFair: return "momaql_no_fair";
  }
  throw std::logic_error("unhandled policy kind");
}

PolicySpec ablation_no_prediction(const Hyperparams& hp) {
  return {PolicyKind::kMomaqlNoPred, hp};
}

PolicySpec ablation_no_fairness(const Hyperparams& hp) {
  PolicySpec spec{PolicyKind::kMomaqlNoFair, hp};
  spec.hp.lambda = 0.0;
  return spec;
}

EpisodeResult run_baseline_episode(const CityGraph& graph,
                                   const std::vector<DriverState>& drivers,
                                   const EnvConfig& env_config,
                                   const Timeline& stream, PolicyKind kind,
                                   double lambda, double omega) {
  if (kind != PolicyKind::kGreedy && kind != PolicyKind::kMatching)
    throw std::invalid_argument("run_baseline_episode: not a baseline policy");
  DispatchEnv env(graph, drivers, env_config);
  for (const auto& bucket : stream) {
    env.begin_step(bucket);
    BatchAssignmentProblem problem;
    problem.lambda = lambda;
    for (size_t i = 0; i < env.drivers().size(); ++i)
      if (env.driver_available(static_cast<int>(i)))
        problem.drivers.push_back({static_cast<int>(i), env.drivers()[i].node,
                                   env.drivers()[i].total_utility});
    problem.requests = env.open_requests();
    const BatchChoice choice = kind == PolicyKind::kGreedy
                                   ? greedy_assign(problem, env.graph())
                                   : matching_assign(problem, env.graph(),
                                                     lambda);
    BatchAssignment batch;
    for (const auto& [driver_id, request_id] : choice.pairs)
      batch.push_back({driver_id, {request_id}});
    env.apply_assignment(batch);
  }
  EpisodeResult result;
  result.driver_utilities = env.driver_utilities();
  result.metrics = summarize_utilities(result.driver_utilities);
  result.log = env.log();
  result.scalarised_return =
      scalarise(result.driver_utilities, lambda, omega);
  result.steps = static_cast<int>(stream.size());
  result.expired_requests = env.expired_requests();
  return result;
}

}  // namespace fairdispatch
