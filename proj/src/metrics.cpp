#include "fairdispatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fairdispatch {

namespace {
void check_nonempty(const std::vector<double>& per_driver) {
  if (per_driver.empty())
    throw std::invalid_argument("metrics: empty utility vector");
}
}  // namespace

double total_utility(const std::vector<double>& per_driver) {
  check_nonempty(per_driver);
  double sum = 0.0;
  for (double u : per_driver) sum += u;
  return sum;
}

double fairness_variance(const std::vector<double>& per_driver) {
  check_nonempty(per_driver);
  const double n = static_cast<double>(per_driver.size());
  const double mean = total_utility(per_driver) / n;
  double acc = 0.0;
  for (double u : per_driver) acc += (u - mean) * (u - mean);
  return acc / n;
}

std::optional<double> normalized_fairness(const std::vector<double>& per_driver) {
  check_nonempty(per_driver);
  const double mean =
      total_utility(per_driver) / static_cast<double>(per_driver.size());
  if (mean == 0.0) return std::nullopt;
  return std::sqrt(fairness_variance(per_driver)) / mean;
}

EpisodeMetrics summarize_utilities(const std::vector<double>& per_driver) {
  check_nonempty(per_driver);
  EpisodeMetrics m;
  m.total_utility = total_utility(per_driver);
  m.fairness = fairness_variance(per_driver);
  m.normalized_fairness = normalized_fairness(per_driver);
  auto [lo, hi] = std::minmax_element(per_driver.begin(), per_driver.end());
  m.min_utility = *lo;
  m.max_utility = *hi;
  m.mean_utility = m.total_utility / static_cast<double>(per_driver.size());
  return m;
}

std::vector<HorizonPoint> horizon_stability(
    const std::vector<AssignmentRecord>& log, int num_drivers,
    int episode_steps, const std::vector<int>& horizon_steps) {
  if (num_drivers <= 0)
    throw std::invalid_argument("horizon_stability: no drivers");
  std::vector<HorizonPoint> out;
  out.reserve(horizon_steps.size());
  for (int h : horizon_steps) {
    if (h < 0 || h > episode_steps)
      throw std::invalid_argument("horizon_stability: horizon beyond log span");
    std::vector<double> cumulative(num_drivers, 0.0);
    for (const AssignmentRecord& rec : log)
      if (rec.step < h) cumulative[rec.driver_id] += rec.utility;
    out.push_back({h, fairness_variance(cumulative)});
  }
  return out;
}

}  // namespace fairdispatch
