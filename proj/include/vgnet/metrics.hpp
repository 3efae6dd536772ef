#pragma once

// Forecast quality metrics in raw demand units, the top-fraction hot-node
// MAPE, and two naive reference predictors (training mean and last observed
// value). A report keeps its predictions so every metric can be recomputed
// from what was stored.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "vgnet/dataset.hpp"
#include "vgnet/model.hpp"
#include "vgnet/train.hpp"

namespace vgnet {

inline double rmse(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size()) throw std::invalid_argument("rmse: size mismatch");
  if (pred.empty()) throw std::invalid_argument("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - target[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

inline double mae(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.size() != target.size()) throw std::invalid_argument("mae: size mismatch");
  if (pred.empty()) throw std::invalid_argument("mae: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += std::fabs(pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

// Nodes ranked by training-split mean demand, descending; ties keep the lower
// index. The hot set holds the top max(1, floor(frac * N)) nodes.
inline std::vector<std::size_t> hot_set(const std::vector<double>& train_means, double frac) {
  if (train_means.empty()) throw std::invalid_argument("hot_set: no nodes");
  if (!(frac > 0.0 && frac <= 1.0)) throw std::invalid_argument("hot_set: frac must be in (0, 1]");
  std::size_t n = train_means.size();
  std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(frac * static_cast<double>(n))));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return train_means[a] > train_means[b]; });
  idx.resize(std::min(k, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Mean |y - yhat| / max(y, 1) over hot nodes and all slots; the unit floor on
// the denominator keeps zero-demand slots from blowing the average up.
inline double mape_topk(const std::vector<double>& pred, const std::vector<double>& target,
                        std::size_t nodes, const std::vector<std::size_t>& hot) {
  if (pred.size() != target.size() || nodes == 0 || pred.size() % nodes != 0)
    throw std::invalid_argument("mape_topk: bad layout");
  if (hot.empty()) throw std::invalid_argument("mape_topk: empty hot set");
  std::size_t slots = pred.size() / nodes;
  double acc = 0.0;
  for (std::size_t s = 0; s < slots; ++s)
    for (std::size_t n : hot) {
      double y = target[s * nodes + n];
      acc += std::fabs(y - pred[s * nodes + n]) / std::max(y, 1.0);
    }
  return acc / static_cast<double>(slots * hot.size());
}

struct ForecastReport {
  std::string variant_tag;
  std::size_t nodes = 0;
  std::vector<double> predictions;  // row-major (sample, node), raw units
  std::vector<double> targets;
  double rmse_value = std::numeric_limits<double>::quiet_NaN();
  double mae_value = std::numeric_limits<double>::quiet_NaN();
  double mape_value = std::numeric_limits<double>::quiet_NaN();

  void finalize(const std::vector<double>& train_means, double hot_frac) {
    rmse_value = rmse(predictions, targets);
    mae_value = mae(predictions, targets);
    mape_value = mape_topk(predictions, targets, nodes, hot_set(train_means, hot_frac));
  }
};

namespace detail {

inline std::vector<double> raw_targets(const WindowedDataset& ds,
                                       const std::vector<Sample>& samples) {
  std::vector<double> out;
  out.reserve(samples.size() * ds.nodes);
  for (const auto& s : samples)
    for (std::size_t n = 0; n < ds.nodes; ++n) out.push_back(ds.stats.inverse(s.y[n], n));
  return out;
}

}  // namespace detail

// Model predictions on a sample list, inverse-transformed to raw units and
// clamped at zero: a demand count cannot be negative, but the normalized
// value the network emits can be.
inline ForecastReport evaluate_model(Model& model, const WindowedDataset& ds,
                                     const std::vector<Sample>& samples,
                                     const std::string& tag = "model", double hot_frac = 0.1) {
  if (samples.empty()) throw std::invalid_argument("evaluate_model: no samples");
  ForecastReport rep;
  rep.variant_tag = tag;
  rep.nodes = ds.nodes;
  rep.predictions = predict(model, samples);
  for (std::size_t i = 0; i < rep.predictions.size(); ++i)
    rep.predictions[i] = std::max(0.0, ds.stats.inverse(rep.predictions[i], i % ds.nodes));
  rep.targets = detail::raw_targets(ds, samples);
  rep.finalize(ds.stats.mean, hot_frac);
  return rep;
}

// Predicts every node's training-split mean, regardless of the window.
inline ForecastReport baseline_historic_mean(const WindowedDataset& ds,
                                             const std::vector<Sample>& samples,
                                             double hot_frac = 0.1) {
  if (samples.empty()) throw std::invalid_argument("baseline: no samples");
  ForecastReport rep;
  rep.variant_tag = "historic-mean";
  rep.nodes = ds.nodes;
  rep.predictions.reserve(samples.size() * ds.nodes);
  for (std::size_t s = 0; s < samples.size(); ++s)
    for (std::size_t n = 0; n < ds.nodes; ++n) rep.predictions.push_back(ds.stats.mean[n]);
  rep.targets = detail::raw_targets(ds, samples);
  rep.finalize(ds.stats.mean, hot_frac);
  return rep;
}

// Predicts the last observed slot of each window.
inline ForecastReport baseline_last_value(const WindowedDataset& ds,
                                          const std::vector<Sample>& samples,
                                          double hot_frac = 0.1) {
  if (samples.empty()) throw std::invalid_argument("baseline: no samples");
  ForecastReport rep;
  rep.variant_tag = "last-value";
  rep.nodes = ds.nodes;
  rep.predictions.reserve(samples.size() * ds.nodes);
  for (const auto& s : samples)
    for (std::size_t n = 0; n < ds.nodes; ++n)
      rep.predictions.push_back(ds.stats.inverse(s.x[(ds.input_len - 1) * ds.nodes + n], n));
  rep.targets = detail::raw_targets(ds, samples);
  rep.finalize(ds.stats.mean, hot_frac);
  return rep;
}

inline void write_predictions_csv(const ForecastReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictions: " + path);
  out << "sample";
  for (std::size_t n = 0; n < rep.nodes; ++n) out << ",pred_" << n << ",true_" << n;
  out << "\n";
  std::size_t slots = rep.nodes == 0 ? 0 : rep.predictions.size() / rep.nodes;
  out.precision(17);
  for (std::size_t s = 0; s < slots; ++s) {
    out << s;
    for (std::size_t n = 0; n < rep.nodes; ++n)
      out << ',' << rep.predictions[s * rep.nodes + n] << ',' << rep.targets[s * rep.nodes + n];
    out << "\n";
  }
  if (!out) throw std::runtime_error("short write: " + path);
}

}  // namespace vgnet
