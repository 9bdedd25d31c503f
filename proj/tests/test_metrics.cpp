#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "fairdispatch/metrics.hpp"
#include "fairdispatch/util.hpp"

using namespace fairdispatch;

TEST_CASE("total utility") {
  CHECK(total_utility({0, 0, 0}) == 0.0);
  CHECK(total_utility({1, 2, 3}) == 6.0);
  CHECK_THROWS_AS(total_utility({}), std::invalid_argument);
}

TEST_CASE("fairness variance is the population variance") {
  CHECK(fairness_variance({4, 4, 4, 4}) == 0.0);
  CHECK(fairness_variance({2, 4}) == doctest::Approx(1.0));
  CHECK(fairness_variance({0, 10}) == doctest::Approx(25.0));
}

TEST_CASE("normalized fairness") {
  CHECK(*normalized_fairness({3, 3, 3}) == 0.0);
  CHECK(*normalized_fairness({2, 4}) == doctest::Approx(1.0 / 3.0));
  // Negative mean gives a negative value; zero mean is undefined, not 0.
  CHECK(*normalized_fairness({-2, -4}) == doctest::Approx(-1.0 / 3.0));
  CHECK_FALSE(normalized_fairness({-1, 1}).has_value());
}

TEST_CASE("scale, shift, and permutation behavior") {
  Rng rng = make_rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rand_index(rng, 8));
    std::vector<double> u(n);
    for (double& x : u) x = rand_range(rng, -50.0, 50.0);
    const double k = rand_range(rng, 0.1, 4.0);
    const double c = rand_range(rng, -10.0, 10.0);

    std::vector<double> scaled = u, shifted = u, permuted = u;
    for (double& x : scaled) x *= k;
    for (double& x : shifted) x += c;
    for (size_t i = permuted.size(); i > 1; --i)
      std::swap(permuted[i - 1], permuted[rand_index(rng, i)]);

    const double tol = 1e-12 * std::max(1.0, std::abs(fairness_variance(u)));
    CHECK(std::abs(fairness_variance(scaled) - k * k * fairness_variance(u)) <=
          tol * k * k * 10 + 1e-12);
    CHECK(std::abs(fairness_variance(shifted) - fairness_variance(u)) <=
          1e-9);
    CHECK(std::abs(fairness_variance(permuted) - fairness_variance(u)) <= tol);
    CHECK(std::abs(total_utility(scaled) - k * total_utility(u)) <= 1e-9);

    auto nf = normalized_fairness(u);
    auto nf_scaled = normalized_fairness(scaled);
    if (nf && nf_scaled)
      CHECK(*nf_scaled == doctest::Approx(*nf).epsilon(1e-9));
  }
}

TEST_CASE("summarize ties the pieces together") {
  const EpisodeMetrics m = summarize_utilities({1, 2, 3, 6});
  CHECK(m.total_utility == 12.0);
  CHECK(m.mean_utility == 3.0);
  CHECK(m.min_utility == 1.0);
  CHECK(m.max_utility == 6.0);
  CHECK(m.total_utility ==
        doctest::Approx(4 * m.mean_utility));  // n * mean identity
  CHECK(m.fairness >= 0.0);
}

TEST_CASE("horizon stability truncates the log") {
  std::vector<AssignmentRecord> log;
  // Driver 0 earns 1 per step, driver 1 earns 1 only at step 0.
  log.push_back({0, 0, 0, 0, 1, 0, 1.0});
  log.push_back({1, 1, 0, 0, 1, 0, 1.0});
  log.push_back({2, 0, 1, 0, 1, 0, 1.0});
  log.push_back({3, 0, 2, 0, 1, 0, 1.0});

  const auto series = horizon_stability(log, 2, 3, {1, 2, 3});
  CHECK(series[0].fairness == doctest::Approx(0.0));       // (1,1)
  CHECK(series[1].fairness == doctest::Approx(0.25));      // (2,1)
  CHECK(series[2].fairness == doctest::Approx(1.0));       // (3,1)
  CHECK_THROWS_AS(horizon_stability(log, 2, 3, {4}), std::invalid_argument);

  // An identical-assignment log stays at zero fairness for every horizon.
  std::vector<AssignmentRecord> even;
  for (int t = 0; t < 4; ++t)
    for (int v = 0; v < 2; ++v)
      even.push_back({t * 2 + v, v, t, 0, 1, 0, 2.5});
  for (const auto& point : horizon_stability(even, 2, 4, {1, 2, 3, 4}))
    CHECK(point.fairness == doctest::Approx(0.0));
}
