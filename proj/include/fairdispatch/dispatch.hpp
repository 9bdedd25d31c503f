#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "fairdispatch/graph.hpp"
#include "fairdispatch/metrics.hpp"
#include "fairdispatch/types.hpp"
#include "fairdispatch/util.hpp"

namespace fairdispatch {

/// A node the driver will pass through, with the timestep it arrives there
/// and the onboard-rider change (+1 pickup, -1 dropoff) applied on arrival.
struct Waypoint {
  NodeId node = 0;
  int arrive_step = 0;
  int onboard_delta = 0;
};

/// Per-driver state (c_v, m_v, g_v, o_v) plus route bookkeeping.
struct DriverState {
  int id = 0;
  int capacity = 1;            // c_v
  int onboard = 0;             // m_v
  NodeId node = 0;             // g_v; kInTransit while between nodes
  double total_utility = 0.0;  // o_v
  std::vector<Waypoint> route;
};

struct EnvConfig {
  double speed = 1.0;   // distance covered per timestep
  int request_ttl = 5;  // batches an unassigned request survives
};

/// One driver's requests for the current batch, by open-request id.
struct DriverAssignment {
  int driver = 0;
  std::vector<int> request_ids;
};

using BatchAssignment = std::vector<DriverAssignment>;

/// Adds each request's trip utility to the driver's cumulative utility and
/// returns the sum. The driver must be at a node and every request feasible
/// from it.
double instant_reward(DriverState& driver, const std::vector<Request>& actions,
                      const CityGraph& graph);

/// Scalarised objective: sum of per-driver cumulative returns minus
/// lambda * omega * population variance of those returns.
double scalarise(const std::vector<double>& per_driver_rewards, double lambda,
                 double omega);

/// The dispatch MDP environment: drivers moving on the graph, a pool of open
/// requests with TTL expiry, and an assignment log. A batch step is:
/// begin_step(arrivals) -> choose a BatchAssignment -> apply_assignment().
/// Exclusivity (a request assigned at most once) is enforced here.
class DispatchEnv {
 public:
  DispatchEnv(const CityGraph& graph, std::vector<DriverState> drivers,
              EnvConfig config);

  const CityGraph& graph() const { return *graph_; }
  const EnvConfig& config() const { return config_; }
  int step() const { return step_; }
  const std::vector<DriverState>& drivers() const { return drivers_; }
  const std::vector<Request>& open_requests() const { return open_; }
  const std::vector<AssignmentRecord>& log() const { return log_; }
  int expired_requests() const { return expired_; }

  /// Advances the clock one step: moves drivers along routes, expires stale
  /// open requests, then admits this step's arrivals.
  void begin_step(const std::vector<Request>& arrivals);

  bool driver_available(int driver_index) const;
  bool feasible(const DriverState& driver, const Request& r) const;

  /// Applies a joint batch assignment. Utilities are evaluated at each
  /// driver's current node (assignment time) and added to o_v; routes are
  /// extended with deadhead and trip legs. Throws on any exclusivity or
  /// feasibility violation.
  void apply_assignment(const BatchAssignment& assignment);

  std::vector<double> driver_utilities() const;

 private:
  const CityGraph* graph_;
  EnvConfig config_;
  std::vector<DriverState> drivers_;
  std::vector<Request> open_;
  std::vector<AssignmentRecord> log_;
  std::unordered_map<int, char> assigned_ids_;
  int step_ = -1;
  int expired_ = 0;
};

/// Learned-dispatcher hyperparameters: scalarisation weights plus the
/// Q-learning settings.
struct Hyperparams {
  double lambda = 1.0;    // fairness weight, [0, 1]
  double omega = 0.6;     // fairness scale, (0, 1]
  double gamma = 0.9;     // discount, [0, 1)
  double alpha = 0.1;     // learning rate
  double epsilon_start = 1.0;
  double epsilon_floor = 0.05;
  int episodes = 500;

  void validate() const;
};

inline constexpr std::uint64_t kNoOpAction = ~0ULL;

std::uint64_t make_action_key(NodeId origin, NodeId dest, int num_nodes);

/// Agent state key: (current node, coarse utility-rank bucket of the driver
/// among all drivers). Buckets are terciles of o_v, ties broken by id.
std::uint64_t make_state_key(NodeId node, int rank_bucket);
int utility_rank_bucket(const std::vector<DriverState>& drivers,
                        int driver_index);

/// Per-driver tabular action values; missing entries read as zero.
class QTables {
 public:
  QTables() = default;
  explicit QTables(int num_drivers) : table_(num_drivers) {}

  int num_drivers() const { return static_cast<int>(table_.size()); }
  double get(int driver, std::uint64_t state, std::uint64_t action) const;
  void set(int driver, std::uint64_t state, std::uint64_t action, double value);
  /// max over actions recorded for the state; never below the zero default.
  double max_value(int driver, std::uint64_t state) const;
  std::size_t entry_count() const;

  /// Versioned text checkpoint: `driver_id state_key action_key value` rows
  /// with readable keys (`node:bucket`, `origin>dest` or `noop`).
  void save(const std::string& path, int num_nodes) const;
  static QTables load(const std::string& path);

 private:
  using ActionValues = std::unordered_map<std::uint64_t, double>;
  std::vector<std::unordered_map<std::uint64_t, ActionValues>> table_;
};

/// One candidate action for a driver: an open request, or NoOp.
struct CandidateAction {
  std::uint64_t action_key = kNoOpAction;
  int request_id = -1;  // -1 for NoOp
};

/// All unassigned current-batch requests feasible for the driver, plus NoOp.
/// Empty when the driver is in transit.
std::vector<CandidateAction> candidate_actions(const DispatchEnv& env,
                                               int driver_index);

/// One driver's decision within a joint batch action.
struct Decision {
  int driver = 0;
  std::uint64_t state_key = 0;
  std::uint64_t action_key = kNoOpAction;
  int request_id = -1;
};

/// Epsilon-greedy joint action for the current batch. Conflicts between
/// drivers wanting the same request are resolved centrally: the higher
/// Q-value wins (ties to the lower driver id) and the loser is re-offered
/// its next-best action. Each request is assigned at most once.
std::vector<Decision> select_joint_assignment(const QTables& tables,
                                              const DispatchEnv& env,
                                              double epsilon, Rng& rng);

/// Standard tabular update with the scalarised step signal:
/// Q <- Q + alpha * (reward + gamma * max_a' Q(next, a') - Q).
/// Pass gamma = 0 for a terminal update. Throws if the update stops being
/// finite.
void q_update(QTables& tables, int driver, std::uint64_t state_key,
              std::uint64_t action_key, double reward_signal,
              std::uint64_t next_state_key, double gamma, double alpha);

enum class EpisodeMode { kTrain, kEval };

struct EpisodeResult {
  std::vector<double> driver_utilities;
  EpisodeMetrics metrics;
  std::vector<AssignmentRecord> log;
  double scalarised_return = 0.0;
  int steps = 0;
  int expired_requests = 0;
};

/// Steps through the stream batch by batch: gathers arrivals, selects the
/// joint assignment, applies it, and (train mode) runs the Q updates with
/// the per-step change in the scalarised objective shared equally across
/// that step's deciding drivers. Driver updates are completed at the
/// driver's next decision point with the discount raised to the elapsed
/// steps.
EpisodeResult run_episode(const CityGraph& graph,
                          const std::vector<DriverState>& initial_drivers,
                          const EnvConfig& env_config, const Timeline& stream,
                          QTables& tables, const Hyperparams& hp,
                          double epsilon, EpisodeMode mode, std::uint64_t seed);

struct TrainResult {
  QTables tables;
  std::vector<double> episode_returns;  // scalarised return per episode
};

/// Repeats run_episode over the training streams (cycled per episode) with
/// epsilon decaying linearly to the floor over the first 80% of episodes.
TrainResult train(const CityGraph& graph,
                  const std::vector<DriverState>& initial_drivers,
                  const EnvConfig& env_config,
                  const std::vector<Timeline>& streams, const Hyperparams& hp,
                  std::uint64_t seed);

/// Replays an episode log against the graph: recomputes each assignment's
/// utility from the recorded driver node, checks per-driver accounting and
/// request exclusivity. Throws std::logic_error on any violation.
void verify_episode(const EpisodeResult& result, const CityGraph& graph,
                    int num_drivers);

}  // namespace fairdispatch
