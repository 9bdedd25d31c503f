#pragma once

#include <vector>

#include "fairdispatch/dispatch.hpp"
#include "fairdispatch/graph.hpp"
#include "fairdispatch/types.hpp"

namespace fairdispatch {

/// One batch of the balance objective: available drivers with their
/// cumulative utilities, the open requests, and the fairness weight.
struct BatchAssignmentProblem {
  struct DriverInfo {
    int id = 0;
    NodeId node = 0;
    double cumulative_utility = 0.0;
  };
  std::vector<DriverInfo> drivers;
  std::vector<Request> requests;
  double lambda = 1.0;
};

/// (driver id, request id) pairs; at most one request per driver per batch
/// and vice versa.
struct BatchChoice {
  std::vector<std::pair<int, int>> pairs;
};

/// Batch objective of a choice: total assigned utility minus lambda times
/// the population variance of the resulting cumulative utilities.
double batch_objective(const BatchAssignmentProblem& problem,
                       const CityGraph& graph, const BatchChoice& choice);

/// Requests in arrival order, each given to the driver with the best
/// marginal change of the balance objective given assignments so far (ties
/// to the lower driver id). With `allow_reject` a request stays unassigned
/// when every marginal change is negative.
BatchChoice greedy_assign(const BatchAssignmentProblem& problem,
                          const CityGraph& graph, bool allow_reject = true);

/// One-shot exact matching per batch: weight(v, r) = trip utility minus
/// lambda times the marginal variance change of giving r to v with the
/// other cumulative utilities held fixed. Unreachable pairs are excluded
/// and surplus drivers match a zero-weight NoOp column.
BatchChoice matching_assign(const BatchAssignmentProblem& problem,
                            const CityGraph& graph, double lambda);

/// Total matching weight of a choice under matching_assign's weights.
double matching_weight_total(const BatchAssignmentProblem& problem,
                             const CityGraph& graph, double lambda,
                             const BatchChoice& choice);

/// Maximum-weight assignment of rows to distinct columns (rows <= columns).
/// Weights below `kMatchingExcluded / 2` mark forbidden pairs. Returns the
/// matched column per row.
inline constexpr double kMatchingExcluded = -1e18;
std::vector<int> max_weight_assignment(
    const std::vector<std::vector<double>>& weights);

enum class PolicyKind {
  kGreedy,
  kMatching,
  kMomaql,
  kMomaqlNoPred,
  kMomaqlNoFair,
};

PolicyKind parse_policy(const std::string& name);
std::string policy_name(PolicyKind kind);

/// A dispatch policy resolved from a name: a baseline rule or a MOMAQL
/// variant with its hyperparameters and stream requirements.
struct PolicySpec {
  PolicyKind kind = PolicyKind::kGreedy;
  Hyperparams hp;

  bool trains() const {
    return kind == PolicyKind::kMomaql || kind == PolicyKind::kMomaqlNoPred ||
           kind == PolicyKind::kMomaqlNoFair;
  }
  bool uses_prediction() const {
    return kind == PolicyKind::kMomaql || kind == PolicyKind::kMomaqlNoFair;
  }
};

/// The full dispatcher with forecaster-derived requests removed from the
/// training streams.
PolicySpec ablation_no_prediction(const Hyperparams& hp);

/// The full dispatcher with the fairness weight forced to zero.
PolicySpec ablation_no_fairness(const Hyperparams& hp);

/// Runs one episode under a baseline rule (greedy or matching), using the
/// same environment dynamics as the learned dispatcher.
EpisodeResult run_baseline_episode(const CityGraph& graph,
                                   const std::vector<DriverState>& drivers,
                                   const EnvConfig& env_config,
                                   const Timeline& stream, PolicyKind kind,
                                   double lambda, double omega);

}  // namespace fairdispatch
