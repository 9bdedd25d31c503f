#include "fairdispatch/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fairdispatch/util.hpp"

namespace fairdispatch {

namespace {

double normalize(const MlpModel& m, double x) {
  return (x - m.norm_mean) / m.norm_std;
}

double denormalize(const MlpModel& m, double y) {
  return y * m.norm_std + m.norm_mean;
}

// Hidden activation.
double activation(double x) { return std::tanh(x); }
double activation_grad(double h) { return 1.0 - h * h; }  // h = tanh(x)

// Normalized-space forward pass; returns hidden activations and output.
double forward_normalized(const MlpModel& m, const std::vector<double>& window,
                          std::vector<double>* hidden_out) {
  std::vector<double> hidden(m.hidden_width);
  for (int h = 0; h < m.hidden_width; ++h) {
    double z = m.b1[h];
    for (int i = 0; i < m.input_width; ++i)
      z += m.w1[h * m.input_width + i] * normalize(m, window[i]);
    hidden[h] = activation(z);
  }
  double y = m.b2[0];
  for (int h = 0; h < m.hidden_width; ++h) y += m.w2[h] * hidden[h];
  if (hidden_out) *hidden_out = std::move(hidden);
  return y;
}

}  // namespace

double MlpModel::forward(const std::vector<double>& window) const {
  if (static_cast<int>(window.size()) != input_width)
    throw std::invalid_argument("mlp: window size does not match input width");
  return denormalize(*this, forward_normalized(*this, window, nullptr));
}

FeatureSet make_features(const std::vector<double>& counts, int lag) {
  if (lag < 1) throw std::invalid_argument("make_features: lag must be >= 1");
  if (lag >= static_cast<int>(counts.size()))
    throw std::invalid_argument("make_features: lag >= series length");
  FeatureSet features;
  features.reserve(counts.size() - lag);
  for (size_t end = lag; end < counts.size(); ++end) {
    std::vector<double> window(counts.begin() + (end - lag),
                               counts.begin() + end);
    features.emplace_back(std::move(window), counts[end]);
  }
  return features;
}

MlpGradients mlp_loss_and_gradient(const MlpModel& m,
                                   const FeatureSet& features) {
  if (features.empty())
    throw std::invalid_argument("mlp gradient: empty batch");
  MlpGradients g;
  g.w1.assign(m.w1.size(), 0.0);
  g.b1.assign(m.b1.size(), 0.0);
  g.w2.assign(m.w2.size(), 0.0);
  g.b2.assign(m.b2.size(), 0.0);

  const double scale = 1.0 / static_cast<double>(features.size());
  std::vector<double> hidden;
  for (const auto& [window, target] : features) {
    const double y = forward_normalized(m, window, &hidden);
    const double err = y - normalize(m, target);
    g.loss += err * err * scale;
    const double dy = 2.0 * err * scale;  // d(mean sq err)/dy
    g.b2[0] += dy;
    for (int h = 0; h < m.hidden_width; ++h) {
      g.w2[h] += dy * hidden[h];
      const double dh = dy * m.w2[h] * activation_grad(hidden[h]);
      g.b1[h] += dh;
      for (int i = 0; i < m.input_width; ++i)
        g.w1[h * m.input_width + i] += dh * normalize(m, window[i]);
    }
  }
  return g;
}

std::pair<MlpModel, TrainReport> train_mlp(const FeatureSet& features,
                                           const MlpTrainConfig& config) {
  if (features.empty()) throw std::invalid_argument("train_mlp: no features");
  if (config.hidden_width < 1)
    throw std::invalid_argument("train_mlp: hidden_width must be >= 1");

  MlpModel m;
  m.input_width = static_cast<int>(features.front().first.size());
  m.hidden_width = config.hidden_width;
  m.output_width = 1;

  // Normalization constants pooled over inputs and targets (same series).
  double sum = 0.0, sq = 0.0;
  std::int64_t n = 0;
  for (const auto& [window, target] : features) {
    for (double v : window) {
      sum += v;
      sq += v * v;
      ++n;
    }
    sum += target;
    sq += target * target;
    ++n;
  }
  m.norm_mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) -
                                       m.norm_mean * m.norm_mean);
  m.norm_std = var > 1e-12 ? std::sqrt(var) : 1.0;

  Rng rng = make_rng(mix_seed(config.seed, 0x4d4c50));
  auto init = [&](std::vector<double>& w, size_t count, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    w.resize(count);
    for (double& v : w) v = rand_range(rng, -bound, bound);
  };
  init(m.w1, static_cast<size_t>(m.hidden_width) * m.input_width, m.input_width);
  init(m.b1, m.hidden_width, m.input_width);
  init(m.w2, m.hidden_width, m.hidden_width);
  init(m.b2, 1, m.hidden_width);

  TrainReport report;
  report.seed = config.seed;
  report.epochs = config.epochs;

  std::vector<size_t> order(features.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  const size_t batch = std::max<size_t>(
      1, std::min<size_t>(features.size(), config.batch_size));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rand_index(rng, i)]);
    double epoch_loss = 0.0;
    size_t batches = 0;
    for (size_t begin = 0; begin < order.size(); begin += batch) {
      FeatureSet minibatch;
      for (size_t i = begin; i < std::min(order.size(), begin + batch); ++i)
        minibatch.push_back(features[order[i]]);
      MlpGradients g = mlp_loss_and_gradient(m, minibatch);
      if (!std::isfinite(g.loss))
        throw std::runtime_error("train_mlp: non-finite loss at epoch " +
                                 std::to_string(epoch));
      const double lr = config.learning_rate;
      for (size_t i = 0; i < m.w1.size(); ++i) m.w1[i] -= lr * g.w1[i];
      for (size_t i = 0; i < m.b1.size(); ++i) m.b1[i] -= lr * g.b1[i];
      for (size_t i = 0; i < m.w2.size(); ++i) m.w2[i] -= lr * g.w2[i];
      m.b2[0] -= lr * g.b2[0];
      epoch_loss += g.loss;
      ++batches;
    }
    // Back to original units so the curve is comparable across series.
    const double unit_mse =
        (epoch_loss / static_cast<double>(batches)) * m.norm_std * m.norm_std;
    if (!std::isfinite(unit_mse))
      throw std::runtime_error("train_mlp: non-finite epoch loss");
    report.epoch_mse.push_back(unit_mse);
  }
  report.final_mse = report.epoch_mse.empty() ? 0.0 : report.epoch_mse.back();
  return {std::move(m), std::move(report)};
}

std::vector<double> predict_counts(const MlpModel& model,
                                   const std::vector<double>& history,
                                   int horizon_hours) {
  if (horizon_hours < 0)
    throw std::invalid_argument("predict_counts: negative horizon");
  if (static_cast<int>(history.size()) < model.input_width)
    throw std::invalid_argument("predict_counts: history shorter than lag");
  std::vector<double> window(history.end() - model.input_width, history.end());
  std::vector<double> out;
  out.reserve(horizon_hours);
  for (int h = 0; h < horizon_hours; ++h) {
    const double y = std::max(0.0, model.forward(window));
    out.push_back(y);
    window.erase(window.begin());
    window.push_back(y);
  }
  return out;
}

double mse(const std::vector<double>& predicted,
           const std::vector<double>& actual) {
  if (predicted.empty() || predicted.size() != actual.size())
    throw std::invalid_argument("mse: sequences empty or of different length");
  double acc = 0.0;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    acc += d * d;
  }
  return acc / static_cast<double>(predicted.size());
}

std::map<OdPair, std::vector<double>> build_demand_series(
    const Timeline& timeline, int first_step, int hours, int steps_per_hour) {
  if (steps_per_hour < 1)
    throw std::invalid_argument("demand series: steps_per_hour must be >= 1");
  std::map<OdPair, std::vector<double>> series;
  for (int hour = 0; hour < hours; ++hour) {
    for (int s = 0; s < steps_per_hour; ++s) {
      const int step = first_step + hour * steps_per_hour + s;
      if (step < 0 || step >= static_cast<int>(timeline.size())) continue;
      for (const Request& r : timeline[step]) {
        auto& counts = series[{r.origin, r.dest}];
        counts.resize(hours, 0.0);
        counts[hour] += 1.0;
      }
    }
  }
  for (auto& [od, counts] : series) counts.resize(hours, 0.0);
  return series;
}

Forecaster train_forecaster(const std::map<OdPair, std::vector<double>>& series,
                            const ForecastConfig& config) {
  Forecaster f;
  f.config = config;
  double pooled_sq = 0.0;
  std::int64_t pooled_n = 0;
  for (const auto& [od, counts] : series) {
    if (static_cast<int>(counts.size()) <= config.lag) continue;
    double mean = 0.0;
    for (double c : counts) mean += c;
    mean /= static_cast<double>(counts.size());
    if (mean < config.min_mean_demand) continue;

    MlpTrainConfig mc;
    mc.hidden_width = config.hidden_width;
    mc.epochs = config.epochs;
    mc.learning_rate = config.learning_rate;
    mc.seed = mix_seed(config.seed,
                       (static_cast<std::uint64_t>(od.origin) << 20) ^
                           static_cast<std::uint64_t>(od.dest));
    auto [model, report] = train_mlp(make_features(counts, config.lag), mc);
    const auto samples = static_cast<std::int64_t>(counts.size()) - config.lag;
    pooled_sq += report.final_mse * static_cast<double>(samples);
    pooled_n += samples;
    f.models.emplace_back(od, std::move(model));
  }
  f.pooled_train_mse = pooled_n > 0 ? pooled_sq / static_cast<double>(pooled_n)
                                    : 0.0;
  return f;
}

std::map<OdPair, std::vector<double>> forecast_all(
    const Forecaster& forecaster,
    const std::map<OdPair, std::vector<double>>& history, int horizon_hours) {
  std::map<OdPair, std::vector<double>> out;
  for (const auto& [od, model] : forecaster.models) {
    auto it = history.find(od);
    if (it == history.end()) continue;
    out[od] = predict_counts(model, it->second, horizon_hours);
  }
  return out;
}

std::vector<Request> sample_future_requests(
    const std::map<OdPair, std::vector<double>>& forecasts, int first_step,
    int steps_per_hour, std::uint64_t seed, int first_id) {
  if (steps_per_hour < 1)
    throw std::invalid_argument("sample_future_requests: steps_per_hour < 1");
  Rng rng = make_rng(mix_seed(seed, 0x46435354));
  std::vector<Request> out;
  for (const auto& [od, per_hour] : forecasts) {  // map order: deterministic
    for (size_t hour = 0; hour < per_hour.size(); ++hour) {
      const int count = static_cast<int>(std::llround(per_hour[hour]));
      for (int k = 0; k < count; ++k) {
        const int step = first_step + static_cast<int>(hour) * steps_per_hour +
                         static_cast<int>(rand_index(rng, steps_per_hour));
        out.push_back({0, step, od.origin, od.dest});
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Request& a, const Request& b) { return a.t < b.t; });
  int id = first_id;
  for (Request& r : out) r.id = id++;
  return out;
}

void save_forecaster(const Forecaster& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("forecaster: cannot write " + path);
  out.precision(17);
  out << "fairdispatch-forecast v1\n";
  out << f.config.lag << " " << f.config.hidden_width << " "
      << f.config.steps_per_hour << " " << f.models.size() << "\n";
  for (const auto& [od, m] : f.models) {
    out << "od " << od.origin << " " << od.dest << "\n";
    out << m.input_width << " " << m.hidden_width << " " << m.output_width
        << " " << m.norm_mean << " " << m.norm_std << "\n";
    auto dump = [&](const std::vector<double>& w) {
      for (size_t i = 0; i < w.size(); ++i)
        out << w[i] << (i + 1 == w.size() ? '\n' : ' ');
      if (w.empty()) out << "\n";
    };
    dump(m.w1);
    dump(m.b1);
    dump(m.w2);
    dump(m.b2);
  }
}

Forecaster load_forecaster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("forecaster: cannot read " + path);
  std::string header;
  std::getline(in, header);
  if (header != "fairdispatch-forecast v1")
    throw std::runtime_error("forecaster: unsupported checkpoint header");
  Forecaster f;
  size_t count = 0;
  in >> f.config.lag >> f.config.hidden_width >> f.config.steps_per_hour >>
      count;
  for (size_t k = 0; k < count; ++k) {
    std::string tag;
    OdPair od;
    in >> tag >> od.origin >> od.dest;
    if (tag != "od") throw std::runtime_error("forecaster: malformed checkpoint");
    MlpModel m;
    in >> m.input_width >> m.hidden_width >> m.output_width >> m.norm_mean >>
        m.norm_std;
    auto slurp = [&](std::vector<double>& w, size_t n) {
      w.resize(n);
      for (double& v : w)
        if (!(in >> v))
          throw std::runtime_error("forecaster: truncated checkpoint");
    };
    slurp(m.w1, static_cast<size_t>(m.hidden_width) * m.input_width);
    slurp(m.b1, m.hidden_width);
    slurp(m.w2, m.hidden_width);
    slurp(m.b2, 1);
    f.models.emplace_back(od, std::move(m));
  }
  return f;
}

}  // namespace fairdispatch
