#pragma once

#include <optional>
#include <vector>

#include "fairdispatch/types.hpp"

namespace fairdispatch {

struct HorizonPoint {
  int horizon_steps = 0;
  double fairness = 0.0;
};

/// Evaluation summary of one episode. `fairness` is the population variance
/// of per-driver cumulative utilities; `normalized_fairness` is population
/// standard deviation over mean, undefined (nullopt) when the mean is zero.
struct EpisodeMetrics {
  double total_utility = 0.0;
  double fairness = 0.0;
  std::optional<double> normalized_fairness;
  double min_utility = 0.0;
  double mean_utility = 0.0;
  double max_utility = 0.0;
  std::vector<HorizonPoint> per_horizon;
};

double total_utility(const std::vector<double>& per_driver);
double fairness_variance(const std::vector<double>& per_driver);
std::optional<double> normalized_fairness(const std::vector<double>& per_driver);

EpisodeMetrics summarize_utilities(const std::vector<double>& per_driver);

/// Fairness variance recomputed over cumulative utilities truncated at each
/// horizon: a horizon of k steps covers records with step < k. Horizons must
/// not exceed `episode_steps`.
std::vector<HorizonPoint> horizon_stability(
    const std::vector<AssignmentRecord>& log, int num_drivers,
    int episode_steps, const std::vector<int>& horizon_steps);

}  // namespace fairdispatch
