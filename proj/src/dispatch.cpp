#include "fairdispatch/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace fairdispatch {

double instant_reward(DriverState& driver, const std::vector<Request>& actions,
                      const CityGraph& graph) {
  if (driver.node == kInTransit)
    throw std::logic_error("instant_reward: driver is in transit");
  double reward = 0.0;
  for (const Request& r : actions) {
    auto u = graph.trip_utility(driver.node, r);
    if (!u)
      throw std::logic_error("instant_reward: infeasible request " +
                             std::to_string(r.id));
    reward += *u;
  }
  driver.total_utility += reward;
  return reward;
}

double scalarise(const std::vector<double>& per_driver_rewards, double lambda,
                 double omega) {
  double sum = total_utility(per_driver_rewards);
  return sum - lambda * omega * fairness_variance(per_driver_rewards);
}

DispatchEnv::DispatchEnv(const CityGraph& graph,
                         std::vector<DriverState> drivers, EnvConfig config)
    : graph_(&graph), config_(config), drivers_(std::move(drivers)) {
  if (config_.speed <= 0.0)
    throw std::invalid_argument("env: speed must be positive");
  if (config_.request_ttl < 1)
    throw std::invalid_argument("env: request_ttl must be >= 1");
  for (size_t i = 0; i < drivers_.size(); ++i) {
    drivers_[i].id = static_cast<int>(i);
    if (drivers_[i].node != kInTransit &&
        (drivers_[i].node < 0 || drivers_[i].node >= graph.num_nodes()))
      throw std::invalid_argument("env: driver at unknown node");
  }
}

namespace {

void advance_driver(DriverState& d, int step) {
  while (!d.route.empty() && d.route.front().arrive_step <= step) {
    d.node = d.route.front().node;
    d.onboard += d.route.front().onboard_delta;
    if (d.onboard < 0 || d.onboard > d.capacity)
      throw std::logic_error("env: onboard count out of [0, capacity]");
    d.route.erase(d.route.begin());
  }
  if (!d.route.empty()) d.node = kInTransit;
}

}  // namespace

void DispatchEnv::begin_step(const std::vector<Request>& arrivals) {
  ++step_;
  for (DriverState& d : drivers_) advance_driver(d, step_);
  std::vector<Request> still_open;
  still_open.reserve(open_.size());
  for (const Request& r : open_) {
    if (step_ - r.t >= config_.request_ttl)
      ++expired_;
    else
      still_open.push_back(r);
  }
  open_ = std::move(still_open);
  for (const Request& r : arrivals) {
    if (r.t != step_)
      throw std::logic_error("env: arrival timestep does not match the clock");
    if (assigned_ids_.count(r.id) || r.id < 0)
      throw std::logic_error("env: duplicate request id " + std::to_string(r.id));
    open_.push_back(r);
  }
}

bool DispatchEnv::driver_available(int driver_index) const {
  return drivers_.at(driver_index).node != kInTransit;
}

bool DispatchEnv::feasible(const DriverState& driver, const Request& r) const {
  if (driver.node == kInTransit) return false;
  return graph_->trip_utility(driver.node, r).has_value();
}

void DispatchEnv::apply_assignment(const BatchAssignment& assignment) {
  for (const DriverAssignment& da : assignment) {
    if (da.request_ids.empty()) continue;
    DriverState& d = drivers_.at(da.driver);
    if (d.node == kInTransit)
      throw std::logic_error("env: assignment to a driver in transit");

    std::vector<Request> actions;
    for (int rid : da.request_ids) {
      auto it = std::find_if(open_.begin(), open_.end(),
                             [rid](const Request& r) { return r.id == rid; });
      if (it == open_.end())
        throw std::logic_error("env: request " + std::to_string(rid) +
                               " is not open or already assigned");
      actions.push_back(*it);
      open_.erase(it);
      assigned_ids_.emplace(rid, 1);
    }

    const NodeId node_at_assignment = d.node;
    for (const Request& r : actions) {
      auto u = graph_->trip_utility(node_at_assignment, r);
      if (!u) throw std::logic_error("env: infeasible assignment");
      log_.push_back({r.id, d.id, step_, r.origin, r.dest, node_at_assignment,
                      *u});
    }
    instant_reward(d, actions, *graph_);

    // Requests queue sequentially along the route: deadhead to each pickup,
    // then the trip leg. Arrival steps come from cumulative distance at the
    // configured per-step speed.
    double cumulative = 0.0;
    NodeId cursor = d.node;
    for (const Request& r : actions) {
      cumulative += *graph_->shortest_distance(cursor, r.origin);
      d.route.push_back(
          {r.origin,
           step_ + static_cast<int>(std::ceil(cumulative / config_.speed)),
           +1});
      cumulative += *graph_->shortest_distance(r.origin, r.dest);
      d.route.push_back(
          {r.dest,
           step_ + static_cast<int>(std::ceil(cumulative / config_.speed)),
           -1});
      cursor = r.dest;
    }
    advance_driver(d, step_);
  }
}

std::vector<double> DispatchEnv::driver_utilities() const {
  std::vector<double> out;
  out.reserve(drivers_.size());
  for (const DriverState& d : drivers_) out.push_back(d.total_utility);
  return out;
}

void Hyperparams::validate() const {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("hyperparams: lambda outside [0, 1]");
  if (omega <= 0.0 || omega > 1.0)
    throw std::invalid_argument("hyperparams: omega outside (0, 1]");
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::invalid_argument("hyperparams: gamma outside [0, 1)");
  if (alpha <= 0.0 || alpha > 1.0)
    throw std::invalid_argument("hyperparams: alpha outside (0, 1]");
  if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_floor < 0.0 ||
      epsilon_floor > epsilon_start)
    throw std::invalid_argument("hyperparams: bad epsilon schedule");
  if (episodes < 0)
    throw std::invalid_argument("hyperparams: negative episode count");
}

std::uint64_t make_action_key(NodeId origin, NodeId dest, int num_nodes) {
  return static_cast<std::uint64_t>(origin) *
             static_cast<std::uint64_t>(num_nodes) +
         static_cast<std::uint64_t>(dest);
}

std::uint64_t make_state_key(NodeId node, int rank_bucket) {
  return static_cast<std::uint64_t>(node) * 3ULL +
         static_cast<std::uint64_t>(rank_bucket);
}

int utility_rank_bucket(const std::vector<DriverState>& drivers,
                        int driver_index) {
  const int n = static_cast<int>(drivers.size());
  const DriverState& me = drivers.at(driver_index);
  int rank = 0;
  for (const DriverState& other : drivers) {
    if (other.id == me.id) continue;
    if (other.total_utility < me.total_utility ||
        (other.total_utility == me.total_utility && other.id < me.id))
      ++rank;
  }
  return rank * 3 / n;
}

double QTables::get(int driver, std::uint64_t state,
                    std::uint64_t action) const {
  const auto& states = table_.at(driver);
  auto s = states.find(state);
  if (s == states.end()) return 0.0;
  auto a = s->second.find(action);
  return a == s->second.end() ? 0.0 : a->second;
}

void QTables::set(int driver, std::uint64_t state, std::uint64_t action,
                  double value) {
  table_.at(driver)[state][action] = value;
}

double QTables::max_value(int driver, std::uint64_t state) const {
  const auto& states = table_.at(driver);
  auto s = states.find(state);
  double best = 0.0;  // unrecorded actions (NoOp at least) read as zero
  if (s != states.end())
    for (const auto& [action, value] : s->second) best = std::max(best, value);
  return best;
}

std::size_t QTables::entry_count() const {
  std::size_t n = 0;
  for (const auto& states : table_)
    for (const auto& [state, actions] : states) n += actions.size();
  return n;
}

void QTables::save(const std::string& path, int num_nodes) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("qtables: cannot write " + path);
  out.precision(17);
  out << "fairdispatch-qtables v1 " << table_.size() << " " << num_nodes
      << "\n";
  for (size_t driver = 0; driver < table_.size(); ++driver) {
    std::map<std::uint64_t, std::map<std::uint64_t, double>> sorted;
    for (const auto& [state, actions] : table_[driver])
      for (const auto& [action, value] : actions) sorted[state][action] = value;
    for (const auto& [state, actions] : sorted) {
      for (const auto& [action, value] : actions) {
        out << driver << " " << state / 3 << ":" << state % 3 << " ";
        if (action == kNoOpAction)
          out << "noop";
        else
          out << action / num_nodes << ">" << action % num_nodes;
        out << " " << value << "\n";
      }
    }
  }
}

QTables QTables::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("qtables: cannot read " + path);
  std::string magic, version;
  int num_drivers = 0, num_nodes = 0;
  in >> magic >> version >> num_drivers >> num_nodes;
  if (magic != "fairdispatch-qtables" || version != "v1")
    throw std::runtime_error("qtables: unsupported checkpoint header");
  QTables tables(num_drivers);
  int driver = 0;
  std::string state_text, action_text;
  double value = 0.0;
  while (in >> driver >> state_text >> action_text >> value) {
    const auto colon = state_text.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("qtables: malformed state key " + state_text);
    const std::uint64_t state =
        make_state_key(std::stoi(state_text.substr(0, colon)),
                       std::stoi(state_text.substr(colon + 1)));
    std::uint64_t action = kNoOpAction;
    if (action_text != "noop") {
      const auto gt = action_text.find('>');
      if (gt == std::string::npos)
        throw std::runtime_error("qtables: malformed action key " + action_text);
      action = make_action_key(std::stoi(action_text.substr(0, gt)),
                               std::stoi(action_text.substr(gt + 1)), num_nodes);
    }
    tables.set(driver, state, action, value);
  }
  return tables;
}

std::vector<CandidateAction> candidate_actions(const DispatchEnv& env,
                                               int driver_index) {
  std::vector<CandidateAction> out;
  const DriverState& d = env.drivers().at(driver_index);
  if (d.node == kInTransit) return out;
  const int num_nodes = env.graph().num_nodes();
  for (const Request& r : env.open_requests())
    if (env.feasible(d, r))
      out.push_back({make_action_key(r.origin, r.dest, num_nodes), r.id});
  out.push_back({kNoOpAction, -1});
  return out;
}

std::vector<Decision> select_joint_assignment(const QTables& tables,
                                              const DispatchEnv& env,
                                              double epsilon, Rng& rng) {
  struct Slot {
    int driver = 0;
    std::uint64_t state = 0;
    std::vector<CandidateAction> prefs;
    size_t next = 0;
  };
  std::vector<Slot> slots;
  std::vector<int> slot_of_driver(env.drivers().size(), -1);

  for (size_t i = 0; i < env.drivers().size(); ++i) {
    if (!env.driver_available(static_cast<int>(i))) continue;
    Slot slot;
    slot.driver = static_cast<int>(i);
    slot.state = make_state_key(env.drivers()[i].node,
                                utility_rank_bucket(env.drivers(),
                                                    static_cast<int>(i)));
    slot.prefs = candidate_actions(env, static_cast<int>(i));
    const bool explore = rand_unit(rng) < epsilon;
    if (explore) {
      for (size_t k = slot.prefs.size(); k > 1; --k)
        std::swap(slot.prefs[k - 1], slot.prefs[rand_index(rng, k)]);
    } else {
      const int driver = slot.driver;
      const std::uint64_t state = slot.state;
      std::sort(slot.prefs.begin(), slot.prefs.end(),
                [&](const CandidateAction& a, const CandidateAction& b) {
                  const double qa = tables.get(driver, state, a.action_key);
                  const double qb = tables.get(driver, state, b.action_key);
                  if (qa != qb) return qa > qb;
                  const bool na = a.action_key == kNoOpAction;
                  const bool nb = b.action_key == kNoOpAction;
                  if (na != nb) return nb;  // real actions before NoOp on ties
                  if (a.action_key != b.action_key)
                    return a.action_key < b.action_key;
                  return a.request_id < b.request_id;
                });
    }
    slot_of_driver[i] = static_cast<int>(slots.size());
    slots.push_back(std::move(slot));
  }

  std::map<int, int> holder_of_request;  // request id -> driver
  std::vector<std::optional<CandidateAction>> chosen(slots.size());
  std::deque<int> pending;
  for (size_t s = 0; s < slots.size(); ++s) pending.push_back(static_cast<int>(s));

  auto q_of = [&](int slot_index, std::uint64_t action) {
    return tables.get(slots[slot_index].driver, slots[slot_index].state, action);
  };

  while (!pending.empty()) {
    const int s = pending.front();
    pending.pop_front();
    Slot& slot = slots[s];
    while (true) {
      if (slot.next >= slot.prefs.size()) {  // exhausted; NoOp fallback
        chosen[s] = CandidateAction{kNoOpAction, -1};
        break;
      }
      const CandidateAction& cand = slot.prefs[slot.next];
      if (cand.action_key == kNoOpAction) {
        chosen[s] = cand;
        break;
      }
      auto held = holder_of_request.find(cand.request_id);
      if (held == holder_of_request.end()) {
        holder_of_request[cand.request_id] = slot.driver;
        chosen[s] = cand;
        break;
      }
      const int rival_slot = slot_of_driver[held->second];
      const double mine = q_of(s, cand.action_key);
      const double theirs = q_of(rival_slot, cand.action_key);
      if (mine > theirs || (mine == theirs && slot.driver < held->second)) {
        // Take the request over; the loser re-offers its next-best action.
        holder_of_request[cand.request_id] = slot.driver;
        chosen[s] = cand;
        chosen[rival_slot].reset();
        slots[rival_slot].next++;
        pending.push_back(rival_slot);
        break;
      }
      slot.next++;
    }
  }

  std::vector<Decision> decisions;
  decisions.reserve(slots.size());
  for (size_t s = 0; s < slots.size(); ++s) {
    const CandidateAction& cand = *chosen[s];
    decisions.push_back(
        {slots[s].driver, slots[s].state, cand.action_key, cand.request_id});
  }
  return decisions;
}

void q_update(QTables& tables, int driver, std::uint64_t state_key,
              std::uint64_t action_key, double reward_signal,
              std::uint64_t next_state_key, double gamma, double alpha) {
  const double current = tables.get(driver, state_key, action_key);
  const double target =
      reward_signal + gamma * tables.max_value(driver, next_state_key);
  const double updated = current + alpha * (target - current);
  if (!std::isfinite(updated))
    throw std::runtime_error("q_update: non-finite value for driver " +
                             std::to_string(driver));
  tables.set(driver, state_key, action_key, updated);
}

EpisodeResult run_episode(const CityGraph& graph,
                          const std::vector<DriverState>& initial_drivers,
                          const EnvConfig& env_config, const Timeline& stream,
                          QTables& tables, const Hyperparams& hp,
                          double epsilon, EpisodeMode mode,
                          std::uint64_t seed) {
  hp.validate();
  if (tables.num_drivers() != static_cast<int>(initial_drivers.size()))
    throw std::invalid_argument("run_episode: table/driver count mismatch");

  DispatchEnv env(graph, initial_drivers, env_config);
  Rng rng = make_rng(mix_seed(seed, 0x455049));
  const bool learning = mode == EpisodeMode::kTrain;
  const double eps = learning ? epsilon : 0.0;

  struct PendingUpdate {
    std::uint64_t state = 0;
    std::uint64_t action = 0;
    double reward = 0.0;
    int step = 0;
  };
  std::vector<std::optional<PendingUpdate>> pending(initial_drivers.size());

  double sr_prev = scalarise(env.driver_utilities(), hp.lambda, hp.omega);
  for (size_t t = 0; t < stream.size(); ++t) {
    env.begin_step(stream[t]);
    const auto decisions = select_joint_assignment(tables, env, eps, rng);

    if (learning) {
      // Complete each driver's previous update at this decision point with
      // the discount raised to the steps elapsed in between.
      for (const Decision& d : decisions) {
        if (auto& p = pending[d.driver]) {
          q_update(tables, d.driver, p->state, p->action, p->reward,
                   d.state_key, std::pow(hp.gamma, env.step() - p->step),
                   hp.alpha);
          p.reset();
        }
      }
    }

    BatchAssignment batch;
    for (const Decision& d : decisions)
      if (d.request_id >= 0) batch.push_back({d.driver, {d.request_id}});
    env.apply_assignment(batch);

    const double sr_now = scalarise(env.driver_utilities(), hp.lambda, hp.omega);
    if (learning && !decisions.empty()) {
      // The step's change in the scalarised objective is split equally
      // across the drivers that acted; NoOp deciders carry a zero reward and
      // learn the value of waiting through the bootstrap alone.
      int actors = 0;
      for (const Decision& d : decisions) actors += d.request_id >= 0;
      const double share =
          actors > 0 ? (sr_now - sr_prev) / static_cast<double>(actors) : 0.0;
      for (const Decision& d : decisions)
        pending[d.driver] = PendingUpdate{
            d.state_key, d.action_key, d.request_id >= 0 ? share : 0.0,
            env.step()};
    }
    sr_prev = sr_now;
  }
  if (learning) {
    for (size_t i = 0; i < pending.size(); ++i)
      if (auto& p = pending[i]) {
        q_update(tables, static_cast<int>(i), p->state, p->action, p->reward,
                 p->state, 0.0, hp.alpha);
        p.reset();
      }
  }

  EpisodeResult result;
  result.driver_utilities = env.driver_utilities();
  result.metrics = summarize_utilities(result.driver_utilities);
  result.log = env.log();
  result.scalarised_return = sr_prev;
  result.steps = static_cast<int>(stream.size());
  result.expired_requests = env.expired_requests();
  return result;
}

TrainResult train(const CityGraph& graph,
                  const std::vector<DriverState>& initial_drivers,
                  const EnvConfig& env_config,
                  const std::vector<Timeline>& streams, const Hyperparams& hp,
                  std::uint64_t seed) {
  hp.validate();
  if (streams.empty())
    throw std::invalid_argument("train: need at least one training stream");
  TrainResult result;
  result.tables = QTables(static_cast<int>(initial_drivers.size()));
  const double decay_span = 0.8 * static_cast<double>(hp.episodes);
  for (int e = 0; e < hp.episodes; ++e) {
    const double frac =
        decay_span > 0.0
            ? std::min(1.0, static_cast<double>(e) / decay_span)
            : 1.0;
    const double eps =
        hp.epsilon_start + (hp.epsilon_floor - hp.epsilon_start) * frac;
    const EpisodeResult ep = run_episode(
        graph, initial_drivers, env_config, streams[e % streams.size()],
        result.tables, hp, eps, EpisodeMode::kTrain, mix_seed(seed, e));
    result.episode_returns.push_back(ep.scalarised_return);
  }
  return result;
}

void verify_episode(const EpisodeResult& result, const CityGraph& graph,
                    int num_drivers) {
  std::map<int, int> seen;  // request id -> count
  std::vector<double> replayed(num_drivers, 0.0);
  for (const AssignmentRecord& rec : result.log) {
    if (++seen[rec.request_id] > 1)
      throw std::logic_error("verify: request " +
                             std::to_string(rec.request_id) +
                             " assigned more than once");
    Request r{rec.request_id, rec.step, rec.origin, rec.dest};
    auto u = graph.trip_utility(rec.driver_node, r);
    if (!u || std::abs(*u - rec.utility) > 1e-9)
      throw std::logic_error("verify: utility replay mismatch for request " +
                             std::to_string(rec.request_id));
    replayed.at(rec.driver_id) += rec.utility;
  }
  if (static_cast<int>(result.driver_utilities.size()) != num_drivers)
    throw std::logic_error("verify: driver count mismatch");
  double replay_total = 0.0, reported_total = 0.0;
  for (int v = 0; v < num_drivers; ++v) {
    if (std::abs(replayed[v] - result.driver_utilities[v]) > 1e-9)
      throw std::logic_error("verify: accounting mismatch for driver " +
                             std::to_string(v));
    replay_total += replayed[v];
    reported_total += result.driver_utilities[v];
  }
  if (std::abs(replay_total - reported_total) > 1e-9)
    throw std::logic_error("verify: total utility mismatch");
}

}  // namespace fairdispatch
