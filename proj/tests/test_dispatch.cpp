#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fairdispatch/dispatch.hpp"
#include "fairdispatch/util.hpp"
#include "oracles.hpp"

using namespace fairdispatch;

namespace {

// 0 -> 1 (2), 1 -> 2 (3), with cheap return arcs 1 -> 0 (1), 2 -> 1 (1).
CityGraph small_city() {
  return CityGraph(3, {{0, 1, 2.0}, {1, 2, 3.0}, {1, 0, 1.0}, {2, 1, 1.0}});
}

std::vector<DriverState> two_drivers(NodeId a, NodeId b) {
  return {{0, 4, 0, a, 0.0, {}}, {1, 4, 0, b, 0.0, {}}};
}

}  // namespace

TEST_CASE("instant_reward sums utilities and accumulates o_v") {
  CityGraph g = small_city();
  DriverState d{0, 4, 0, 0, 0.0, {}};
  CHECK(instant_reward(d, {}, g) == 0.0);
  CHECK(d.total_utility == 0.0);

  // Driver exactly at the origin: utility is the bare trip distance.
  CHECK(instant_reward(d, {{0, 0, 0, 1}}, g) == doctest::Approx(2.0));
  CHECK(d.total_utility == doctest::Approx(2.0));

  // Two requests on the line, both deadheads from the same node.
  DriverState e{1, 4, 0, 0, 0.0, {}};
  const double r =
      instant_reward(e, {{1, 0, 0, 1}, {2, 0, 1, 2}}, g);  // 2 + (3 - 2)
  CHECK(r == doctest::Approx(3.0));
  CHECK(e.total_utility == doctest::Approx(3.0));
}

TEST_CASE("scalarise") {
  CHECK(scalarise({3, 4, 5}, 0.0, 0.6) == doctest::Approx(12.0));
  CHECK(scalarise({10, 10}, 1.0, 0.6) == doctest::Approx(20.0));
  CHECK(scalarise({0, 10}, 1.0, 1.0) == doctest::Approx(10.0 - 25.0));

  Rng rng = make_rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rand_index(rng, 6));
    std::vector<double> rewards(n);
    for (double& x : rewards) x = rand_range(rng, -20, 20);
    const double lambda = rand_unit(rng);
    const double omega = 0.1 + 0.9 * rand_unit(rng);

    std::vector<double> permuted = rewards;
    for (size_t i = permuted.size(); i > 1; --i)
      std::swap(permuted[i - 1], permuted[rand_index(rng, i)]);
    CHECK(scalarise(permuted, lambda, omega) ==
          doctest::Approx(scalarise(rewards, lambda, omega)).epsilon(1e-12));

    // Adding c to everyone raises the value by n*c exactly.
    const double c = rand_range(rng, -5, 5);
    std::vector<double> shifted = rewards;
    for (double& x : shifted) x += c;
    CHECK(scalarise(shifted, lambda, omega) ==
          doctest::Approx(scalarise(rewards, lambda, omega) + n * c)
              .epsilon(1e-9));

    // Nonincreasing in lambda whenever the variance is positive.
    const double lo = scalarise(rewards, 0.2, omega);
    const double hi = scalarise(rewards, 0.9, omega);
    if (fairness_variance(rewards) > 0)
      CHECK(hi <= lo + 1e-12);
    else
      CHECK(hi == doctest::Approx(lo));
  }
}

TEST_CASE("candidate actions") {
  CityGraph g = small_city();
  DispatchEnv env(g, two_drivers(0, 2), {2.0, 5});
  env.begin_step({{0, 0, 0, 1}, {1, 0, 1, 2}});

  // Driver 0 at node 0 reaches both requests: 2 + NoOp.
  auto c0 = candidate_actions(env, 0);
  CHECK(c0.size() == 3);
  CHECK(c0.back().action_key == kNoOpAction);

  // A disconnected node sees only the reachable request.
  CityGraph gap(3, {{0, 1, 2.0}, {1, 2, 3.0}});
  DispatchEnv env2(gap, two_drivers(1, 2), {2.0, 5});
  env2.begin_step({{0, 0, 0, 1}, {1, 0, 1, 2}});
  CHECK(candidate_actions(env2, 0).size() == 2);  // (1->2) + NoOp only

  // In-transit drivers are not assignable.
  DispatchEnv env3(g, two_drivers(0, 1), {0.5, 5});
  env3.begin_step({{0, 0, 0, 1}});
  env3.apply_assignment({{0, {0}}});
  env3.begin_step({});
  CHECK(env3.drivers()[0].node == kInTransit);
  CHECK(candidate_actions(env3, 0).empty());
}

TEST_CASE("select_joint_assignment resolves conflicts by Q value") {
  CityGraph g = small_city();
  Rng rng = make_rng(1);

  SUBCASE("single driver takes the single request greedily") {
    QTables tables(1);
    DispatchEnv env(g, {{0, 4, 0, 0, 0.0, {}}}, {2.0, 5});
    env.begin_step({{0, 0, 0, 1}});
    const auto decisions = select_joint_assignment(tables, env, 0.0, rng);
    REQUIRE(decisions.size() == 1);
    CHECK(decisions[0].request_id == 0);
  }

  SUBCASE("higher Q wins, loser takes its next best") {
    QTables tables(2);
    DispatchEnv env(g, two_drivers(0, 0), {2.0, 5});
    env.begin_step({{0, 0, 0, 1}});
    const auto key = make_action_key(0, 1, 3);
    const auto s0 = make_state_key(0, utility_rank_bucket(env.drivers(), 0));
    const auto s1 = make_state_key(0, utility_rank_bucket(env.drivers(), 1));
    tables.set(0, s0, key, 3.0);
    tables.set(1, s1, key, 5.0);
    const auto decisions = select_joint_assignment(tables, env, 0.0, rng);
    REQUIRE(decisions.size() == 2);
    CHECK(decisions[0].driver == 0);
    CHECK(decisions[0].request_id == -1);  // NoOp after losing the fight
    CHECK(decisions[1].driver == 1);
    CHECK(decisions[1].request_id == 0);
  }

  SUBCASE("equal Q goes to the lower driver id") {
    QTables tables(2);
    DispatchEnv env(g, two_drivers(0, 0), {2.0, 5});
    env.begin_step({{0, 0, 0, 1}});
    const auto decisions = select_joint_assignment(tables, env, 0.0, rng);
    CHECK(decisions[0].request_id == 0);
    CHECK(decisions[1].request_id == -1);
  }

  SUBCASE("full exploration is reproducible under the same seed") {
    QTables tables(2);
    auto run_once = [&](std::uint64_t seed) {
      DispatchEnv env(g, two_drivers(0, 1), {2.0, 5});
      env.begin_step({{0, 0, 0, 1}, {1, 0, 1, 2}});
      Rng r = make_rng(seed);
      return select_joint_assignment(tables, env, 1.0, r);
    };
    const auto a = run_once(42), b = run_once(42);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].driver == b[i].driver);
      CHECK(a[i].request_id == b[i].request_id);
      CHECK(a[i].action_key == b[i].action_key);
    }
  }
}

TEST_CASE("q_update arithmetic") {
  QTables t(1);
  q_update(t, 0, 7, 3, 10.0, 9, 0.9, 0.5);
  CHECK(t.get(0, 7, 3) == doctest::Approx(5.0));  // 0 + 0.5*(10 + 0 - 0)

  // Zero learning rate leaves the table untouched.
  q_update(t, 0, 7, 3, 99.0, 9, 0.9, 0.0);
  CHECK(t.get(0, 7, 3) == doctest::Approx(5.0));

  // Repeated updates on a single state-action loop converge to 1/(1-gamma).
  QTables loop(1);
  for (int i = 0; i < 2000; ++i) q_update(loop, 0, 1, 1, 1.0, 1, 0.9, 0.1);
  CHECK(std::abs(loop.get(0, 1, 1) - 10.0) < 1e-3);
}

TEST_CASE("qtables checkpoint round trip") {
  QTables t(2);
  t.set(0, make_state_key(4, 1), make_action_key(2, 3, 5), 1.25);
  t.set(1, make_state_key(0, 0), kNoOpAction, -0.5);
  const auto path = std::filesystem::temp_directory_path() / "fd_q.txt";
  t.save(path.string(), 5);
  const QTables loaded = QTables::load(path.string());
  CHECK(loaded.num_drivers() == 2);
  CHECK(loaded.get(0, make_state_key(4, 1), make_action_key(2, 3, 5)) ==
        doctest::Approx(1.25));
  CHECK(loaded.get(1, make_state_key(0, 0), kNoOpAction) ==
        doctest::Approx(-0.5));
  CHECK(loaded.entry_count() == 2);
  std::filesystem::remove(path);
}

TEST_CASE("environment motion, TTL, and exclusivity") {
  CityGraph g = small_city();

  SUBCASE("a trip takes ceil(distance / speed) steps") {
    DispatchEnv env(g, two_drivers(1, 2), {2.0, 5});
    env.begin_step({{0, 0, 1, 2}});
    env.apply_assignment({{0, {0}}});
    // Trip 1->2 is 3 units at speed 2: in transit, arrives at step 2.
    CHECK(env.drivers()[0].node == kInTransit);
    CHECK(env.drivers()[0].onboard == 1);
    env.begin_step({});
    CHECK(env.drivers()[0].node == kInTransit);
    env.begin_step({});
    CHECK(env.drivers()[0].node == 2);
    CHECK(env.drivers()[0].onboard == 0);
  }

  SUBCASE("unassigned requests roll over, then expire at the TTL") {
    DispatchEnv env(g, {{0, 4, 0, 2, 0.0, {}}}, {2.0, 2});
    env.begin_step({{0, 0, 0, 1}});  // unreachable from node 2
    CHECK(env.open_requests().size() == 1);
    env.begin_step({});
    CHECK(env.open_requests().size() == 1);  // age 1 < ttl 2
    env.begin_step({});
    CHECK(env.open_requests().empty());
    CHECK(env.expired_requests() == 1);
  }

  SUBCASE("a request can never be assigned twice") {
    DispatchEnv env(g, two_drivers(0, 0), {2.0, 5});
    env.begin_step({{0, 0, 0, 1}});
    env.apply_assignment({{0, {0}}});
    CHECK_THROWS_AS(env.apply_assignment({{1, {0}}}), std::logic_error);
  }

  SUBCASE("duplicate arrival ids are rejected") {
    DispatchEnv env(g, two_drivers(0, 0), {2.0, 5});
    env.begin_step({{0, 0, 0, 1}});
    env.apply_assignment({{0, {0}}});
    CHECK_THROWS_AS(env.begin_step({{0, 1, 0, 1}}), std::logic_error);
  }
}

TEST_CASE("run_episode") {
  CityGraph g = small_city();
  Hyperparams hp;
  hp.lambda = 1.0;
  hp.omega = 1.0;
  hp.episodes = 1;

  SUBCASE("zero requests leaves every driver at zero") {
    QTables tables(2);
    const Timeline stream(4);
    const auto result = run_episode(g, two_drivers(0, 1), {2.0, 5}, stream,
                                    tables, hp, 0.0, EpisodeMode::kEval, 1);
    CHECK(result.metrics.total_utility == 0.0);
    CHECK(result.metrics.fairness == 0.0);
    CHECK(result.log.empty());
    verify_episode(result, g, 2);
  }

  SUBCASE("deterministic toy matches the hand trace") {
    QTables tables(2);
    Timeline stream(3);
    stream[0] = {{0, 0, 0, 1}, {1, 0, 1, 2}};
    stream[1] = {{2, 1, 2, 1}};
    const auto result = run_episode(g, two_drivers(0, 1), {2.0, 2}, stream,
                                    tables, hp, 0.0, EpisodeMode::kEval, 1);
    // Hand trace: untrained ties prefer the lower action key, so driver 0
    // takes (0->1) at step 0 (u=2), driver 1 takes (1->2) (u=3, in transit
    // for 2 steps). At step 1 only driver 0 is free; it takes (2->1) at a
    // loss (1 - 3 = -2). Finals: (0, 3).
    REQUIRE(result.log.size() == 3);
    CHECK(result.log[0].request_id == 0);
    CHECK(result.log[0].driver_id == 0);
    CHECK(result.log[0].utility == doctest::Approx(2.0));
    CHECK(result.log[1].request_id == 1);
    CHECK(result.log[1].driver_id == 1);
    CHECK(result.log[1].utility == doctest::Approx(3.0));
    CHECK(result.log[2].request_id == 2);
    CHECK(result.log[2].driver_id == 0);
    CHECK(result.log[2].step == 1);
    CHECK(result.log[2].utility == doctest::Approx(-2.0));
    CHECK(result.driver_utilities[0] == doctest::Approx(0.0));
    CHECK(result.driver_utilities[1] == doctest::Approx(3.0));
    verify_episode(result, g, 2);
  }
}

TEST_CASE("train") {
  CityGraph g = small_city();
  Hyperparams hp;
  hp.lambda = 1.0;
  hp.omega = 1.0;

  SUBCASE("zero episodes returns untouched tables") {
    hp.episodes = 0;
    const auto result = train(g, two_drivers(0, 1), {2.0, 5}, {Timeline(2)},
                              hp, 3);
    CHECK(result.tables.entry_count() == 0);
    CHECK(result.episode_returns.empty());
  }

  SUBCASE("same seed gives identical tables") {
    hp.episodes = 40;
    Timeline stream(3);
    stream[0] = {{0, 0, 0, 1}, {1, 0, 1, 2}};
    stream[1] = {{2, 1, 2, 1}};
    stream[2] = {{3, 2, 0, 1}};
    const auto a = train(g, two_drivers(0, 1), {2.0, 5}, {stream}, hp, 9);
    const auto b = train(g, two_drivers(0, 1), {2.0, 5}, {stream}, hp, 9);
    CHECK(a.episode_returns == b.episode_returns);
    CHECK(a.tables.entry_count() == b.tables.entry_count());
    const auto pa = std::filesystem::temp_directory_path() / "fd_qa.txt";
    const auto pb = std::filesystem::temp_directory_path() / "fd_qb.txt";
    a.tables.save(pa.string(), g.num_nodes());
    b.tables.save(pb.string(), g.num_nodes());
    std::ifstream fa(pa), fb(pb);
    const std::string ta((std::istreambuf_iterator<char>(fa)), {});
    const std::string tb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ta == tb);
    std::filesystem::remove(pa);
    std::filesystem::remove(pb);
  }
}

TEST_CASE("learned policy recovers the enumerated optimum on the toy MDP") {
  const auto toy = oracles::toy_mdp();
  const auto search = oracles::enumerate_best_plan(
      toy.graph, toy.drivers, toy.env, toy.stream, toy.lambda);
  CHECK(search.best_objective == doctest::Approx(9.7));
  CHECK(search.ties == 1);
  REQUIRE(search.best_plan.size() == 3);
  CHECK(search.best_plan[0] == oracles::BatchPlan{{0, 0}});
  CHECK(search.best_plan[1] == oracles::BatchPlan{{1, 1}});
  CHECK(search.best_plan[2] == oracles::BatchPlan{{0, 2}});

  Hyperparams hp;
  hp.lambda = toy.lambda;
  hp.omega = 1.0;
  hp.gamma = 0.9;
  hp.alpha = 0.1;
  hp.episodes = 4000;
  const auto trained =
      train(toy.graph, toy.drivers, toy.env, {toy.stream}, hp, 2024);

  QTables tables = trained.tables;
  const auto rollout = run_episode(toy.graph, toy.drivers, toy.env, toy.stream,
                                   tables, hp, 0.0, EpisodeMode::kEval, 7);
  oracles::EpisodePlan plan(3);
  for (const AssignmentRecord& rec : rollout.log)
    plan[rec.step].push_back({rec.driver_id, rec.request_id});
  for (auto& step : plan) std::sort(step.begin(), step.end());
  CHECK(plan == search.best_plan);
  const double objective =
      total_utility(rollout.driver_utilities) -
      toy.lambda * fairness_variance(rollout.driver_utilities);
  CHECK(objective == doctest::Approx(search.best_objective));
}
