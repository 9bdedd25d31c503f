#include <algorithm>
#include <set>

#include "doctest.h"
#include "fairdispatch/baselines.hpp"
#include "fairdispatch/util.hpp"
#include "oracles.hpp"

using namespace fairdispatch;

namespace {

CityGraph hub_city(std::vector<double> leaf_values) {
  std::vector<Edge> edges;
  for (size_t i = 0; i < leaf_values.size(); ++i) {
    edges.push_back({0, static_cast<NodeId>(i + 1), leaf_values[i]});
    edges.push_back({static_cast<NodeId>(i + 1), 0, 0.0});
  }
  return CityGraph(static_cast<int>(leaf_values.size()) + 1, std::move(edges));
}

}  // namespace

TEST_CASE("greedy assigns iff the marginal objective improves") {
  CityGraph g = hub_city({5.0});
  BatchAssignmentProblem p;
  p.lambda = 0.0;
  p.drivers = {{0, 0, 0.0}};
  p.requests = {{0, 0, 0, 1}};  // utility 5 from the hub
  CHECK(greedy_assign(p, g).pairs.size() == 1);

  // The same request served from far away is a net loss and is rejected.
  CityGraph far(3, {{0, 1, 1.0}, {2, 0, 9.0}});
  BatchAssignmentProblem q;
  q.lambda = 0.0;
  q.drivers = {{0, 2, 0.0}};
  q.requests = {{0, 0, 0, 1}};  // 1 - 9 < 0
  CHECK(greedy_assign(q, far).pairs.empty());
  // The forced-assignment switch overrides the rejection.
  CHECK(greedy_assign(q, far, false).pairs.size() == 1);
}

TEST_CASE("greedy favors the poorer driver when fairness dominates") {
  CityGraph g = hub_city({10.0});
  BatchAssignmentProblem p;
  p.lambda = 1.0;
  p.drivers = {{0, 0, 0.0}, {1, 0, 100.0}};
  p.requests = {{0, 0, 0, 1}};
  // Marginal variance by hand: to the poor driver it drops (10,100 vs
  // 0,100), to the rich one it grows; the poor driver wins.
  const auto choice = greedy_assign(p, g);
  REQUIRE(choice.pairs.size() == 1);
  CHECK(choice.pairs[0].first == 0);
}

TEST_CASE("greedy never exceeds the enumerated optimum") {
  Rng rng = make_rng(314);
  int singles_checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = oracles::random_batch_instance(rng, 2, 3);
    const auto choice = greedy_assign(inst.problem, inst.graph);
    const double mine = batch_objective(inst.problem, inst.graph, choice);
    const double best = oracles::best_batch_objective(inst.problem, inst.graph);
    CHECK(mine <= best + 1e-9);
    if (inst.problem.requests.size() == 1) {
      CHECK(mine == doctest::Approx(best).epsilon(1e-12));
      ++singles_checked;
    }
  }
  CHECK(singles_checked > 20);
}

TEST_CASE("max weight assignment solver") {
  SUBCASE("2x2 diagonal") {
    const auto cols = max_weight_assignment({{5, 1}, {1, 5}});
    CHECK(cols == std::vector<int>{0, 1});
  }
  SUBCASE("3x3 equals the best of all 6 permutations") {
    Rng rng = make_rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::vector<double>> w(3, std::vector<double>(3));
      for (auto& row : w)
        for (double& x : row) x = rand_range(rng, -5, 5);
      const auto cols = max_weight_assignment(w);
      double got = 0.0;
      for (int r = 0; r < 3; ++r) got += w[r][cols[r]];
      std::vector<int> perm{0, 1, 2};
      double best = -1e18;
      do {
        double total = 0.0;
        for (int r = 0; r < 3; ++r) total += w[r][perm[r]];
        best = std::max(best, total);
      } while (std::next_permutation(perm.begin(), perm.end()));
      CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("matching equals brute force on random batches") {
  Rng rng = make_rng(2718);
  for (int trial = 0; trial < 300; ++trial) {
    const auto inst = oracles::random_batch_instance(rng, 4, 4);
    const auto choice =
        matching_assign(inst.problem, inst.graph, inst.problem.lambda);
    const double mine = matching_weight_total(inst.problem, inst.graph,
                                              inst.problem.lambda, choice);
    const double best = oracles::best_matching_weight(inst.problem, inst.graph,
                                                      inst.problem.lambda);
    CHECK(mine == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("surplus drivers sit out at zero weight") {
  CityGraph g = hub_city({4.0});
  BatchAssignmentProblem p;
  p.lambda = 0.0;
  p.drivers = {{0, 0, 0.0}, {1, 0, 0.0}, {2, 0, 0.0}};
  p.requests = {{0, 0, 0, 1}};
  const auto choice = matching_assign(p, g, p.lambda);
  CHECK(choice.pairs.size() == 1);
}

TEST_CASE("matching at least matches greedy under the same weights") {
  Rng rng = make_rng(555);
  for (int trial = 0; trial < 200; ++trial) {
    const auto inst = oracles::random_batch_instance(rng, 4, 4);
    const auto g = greedy_assign(inst.problem, inst.graph);
    const auto m =
        matching_assign(inst.problem, inst.graph, inst.problem.lambda);
    const double greedy_w = matching_weight_total(inst.problem, inst.graph,
                                                  inst.problem.lambda, g);
    const double matching_w = matching_weight_total(inst.problem, inst.graph,
                                                    inst.problem.lambda, m);
    CHECK(matching_w >= greedy_w - 1e-9);
  }
}

TEST_CASE("baseline choices respect exclusivity") {
  Rng rng = make_rng(808);
  for (int trial = 0; trial < 100; ++trial) {
    const auto inst = oracles::random_batch_instance(rng, 4, 4);
    for (const auto& choice :
         {greedy_assign(inst.problem, inst.graph),
          matching_assign(inst.problem, inst.graph, inst.problem.lambda)}) {
      std::set<int> drivers, requests;
      for (const auto& [v, r] : choice.pairs) {
        CHECK(drivers.insert(v).second);
        CHECK(requests.insert(r).second);
      }
    }
  }
}

TEST_CASE("ablation constructors") {
  Hyperparams hp;
  hp.lambda = 0.7;
  const auto no_fair = ablation_no_fairness(hp);
  CHECK(no_fair.kind == PolicyKind::kMomaqlNoFair);
  CHECK(no_fair.hp.lambda == 0.0);
  CHECK(no_fair.uses_prediction());
  // With lambda zero the scalarised objective is the plain sum.
  CHECK(scalarise({1, 9}, no_fair.hp.lambda, no_fair.hp.omega) ==
        doctest::Approx(10.0));

  const auto no_pred = ablation_no_prediction(hp);
  CHECK(no_pred.kind == PolicyKind::kMomaqlNoPred);
  CHECK(no_pred.hp.lambda == doctest::Approx(0.7));
  CHECK_FALSE(no_pred.uses_prediction());
  CHECK(no_pred.trains());
}

TEST_CASE("policy names round trip") {
  for (const auto* name :
       {"greedy", "matching", "momaql", "momaql_no_pred", "momaql_no_fair"})
    CHECK(policy_name(parse_policy(name)) == name);
  CHECK_THROWS_AS(parse_policy("nope"), std::invalid_argument);
}

TEST_CASE("baseline episodes run on the shared environment") {
  CityGraph g = hub_city({2.0, 4.0});
  Timeline stream(2);
  stream[0] = {{0, 0, 0, 1}, {1, 0, 0, 2}};
  stream[1] = {{2, 1, 0, 1}};
  std::vector<DriverState> drivers{{0, 4, 0, 0, 0.0, {}},
                                   {1, 4, 0, 0, 0.0, {}}};
  for (PolicyKind kind : {PolicyKind::kGreedy, PolicyKind::kMatching}) {
    const auto result =
        run_baseline_episode(g, drivers, {4.0, 5}, stream, kind, 1.0, 0.6);
    CHECK(result.metrics.total_utility > 0.0);
    verify_episode(result, g, 2);
  }
}
