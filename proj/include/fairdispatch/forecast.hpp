#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fairdispatch/types.hpp"

namespace fairdispatch {

/// Hourly request counts for one origin-destination pair.
struct DemandSeries {
  OdPair od;
  std::vector<double> counts;
};

/// Three-layer MLP (input, one hidden layer, output) for one-step-ahead
/// count forecasting. Inputs and targets are normalized by the series
/// mean/std stored in the model. Weights are row-major.
struct MlpModel {
  int input_width = 0;   // lag n
  int hidden_width = 0;
  int output_width = 1;
  std::vector<double> w1;  // hidden x input
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // output x hidden
  std::vector<double> b2;  // output
  double norm_mean = 0.0;
  double norm_std = 1.0;

  /// Forecast for one lag window, in original (denormalized) units.
  double forward(const std::vector<double>& window) const;
};

struct TrainReport {
  int epochs = 0;
  double final_mse = 0.0;           // original units
  std::vector<double> epoch_mse;    // one entry per epoch
  std::uint64_t seed = 0;
};

/// (lagged window, next-count target) pairs.
using FeatureSet = std::vector<std::pair<std::vector<double>, double>>;

/// Sliding windows in chronological order; result size = series length - lag.
FeatureSet make_features(const std::vector<double>& counts, int lag);

struct MlpTrainConfig {
  int hidden_width = 32;
  int epochs = 200;
  double learning_rate = 1e-3;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

/// Mini-batch gradient descent on squared error; deterministic given the
/// seed. Aborts with a diagnostic if the loss stops being finite.
std::pair<MlpModel, TrainReport> train_mlp(const FeatureSet& features,
                                           const MlpTrainConfig& config);

/// Gradients with the same shapes as the model weights, plus the mean
/// squared loss over the batch (in normalized space). Used by training and
/// by the finite-difference checks.
struct MlpGradients {
  double loss = 0.0;
  std::vector<double> w1, b1, w2, b2;
};

MlpGradients mlp_loss_and_gradient(const MlpModel& model,
                                   const FeatureSet& features);

/// Iterated one-step-ahead forecasts: each prediction is clamped at zero and
/// fed back as the newest lag. `history` must span at least `lag` entries.
std::vector<double> predict_counts(const MlpModel& model,
                                   const std::vector<double>& history,
                                   int horizon_hours);

double mse(const std::vector<double>& predicted,
           const std::vector<double>& actual);

/// Per-OD hourly demand histogram over timeline steps [first_step,
/// first_step + hours * steps_per_hour). Only observed pairs appear.
std::map<OdPair, std::vector<double>> build_demand_series(
    const Timeline& timeline, int first_step, int hours, int steps_per_hour);

struct ForecastConfig {
  int lag = 24;
  int hidden_width = 32;
  int epochs = 200;
  double learning_rate = 1e-3;
  int steps_per_hour = 1;
  double min_mean_demand = 0.0;  // pairs below this mean hourly count are skipped
  std::uint64_t seed = 0;
};

/// One model per OD pair with shared hyperparameters.
struct Forecaster {
  ForecastConfig config;
  std::vector<std::pair<OdPair, MlpModel>> models;  // sorted by od
  double pooled_train_mse = 0.0;
};

Forecaster train_forecaster(const std::map<OdPair, std::vector<double>>& series,
                            const ForecastConfig& config);

/// Per-pair forecasts for the next `horizon_hours` hours following the given
/// history window.
std::map<OdPair, std::vector<double>> forecast_all(
    const Forecaster& forecaster,
    const std::map<OdPair, std::vector<double>>& history, int horizon_hours);

/// Turns fractional per-hour forecasts into discrete requests: round to
/// nearest per pair and hour, timesteps spread uniformly within the hour.
/// Deterministic given the seed. Request ids start at `first_id`.
std::vector<Request> sample_future_requests(
    const std::map<OdPair, std::vector<double>>& forecasts, int first_step,
    int steps_per_hour, std::uint64_t seed, int first_id);

/// Versioned text checkpoint for a trained forecaster bundle.
void save_forecaster(const Forecaster& forecaster, const std::string& path);
Forecaster load_forecaster(const std::string& path);

}  // namespace fairdispatch
