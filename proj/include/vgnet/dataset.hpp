#pragma once

// Chronological splitting, per-node z-scoring, and sliding-window sample
// construction for next-slot forecasting. Normalization statistics come from
// the training range only, and no window crosses a split boundary.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "vgnet/demand.hpp"

namespace vgnet {

struct SplitRanges {
  std::size_t train_begin = 0, train_end = 0;
  std::size_t val_begin = 0, val_end = 0;
  std::size_t test_begin = 0, test_end = 0;
};

inline SplitRanges split(std::size_t slots, double train_frac = 0.8, double val_frac = 0.1,
                         double test_frac = 0.1) {
  if (train_frac <= 0 || val_frac <= 0 || test_frac <= 0)
    throw std::invalid_argument("split: fractions must be positive");
  if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must sum to 1");
  SplitRanges r;
  r.train_begin = 0;
  r.train_end = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(slots)));
  r.val_begin = r.train_end;
  r.val_end =
      static_cast<std::size_t>(std::floor((train_frac + val_frac) * static_cast<double>(slots)));
  r.test_begin = r.val_end;
  r.test_end = slots;
  if (r.train_end == r.train_begin || r.val_end == r.val_begin || r.test_end == r.test_begin)
    throw std::invalid_argument("split: a split is empty at this length");
  return r;
}

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  double transform(double x, std::size_t node) const {
    return (x - mean[node]) / stddev[node];
  }
  double inverse(double z, std::size_t node) const {
    return z * stddev[node] + mean[node];
  }
};

struct NormalizeResult {
  DemandTensor demand;  // z-scored copy
  NormStats stats;
};

// Population statistics over the training rows; constant nodes keep std 1 so
// the transform maps them to exactly zero and stays invertible.
inline NormalizeResult normalize(const DemandTensor& d, std::size_t train_begin,
                                 std::size_t train_end) {
  if (train_begin >= train_end || train_end > d.slots)
    throw std::invalid_argument("normalize: bad training range");
  NormalizeResult out;
  out.demand = d;
  out.stats.mean.assign(d.cells, 0.0);
  out.stats.stddev.assign(d.cells, 1.0);
  double n = static_cast<double>(train_end - train_begin);
  for (std::size_t c = 0; c < d.cells; ++c) {
    double s = 0.0;
    for (std::size_t t = train_begin; t < train_end; ++t) s += d.at(t, c);
    double mu = s / n;
    double sq = 0.0;
    for (std::size_t t = train_begin; t < train_end; ++t) {
      double dx = d.at(t, c) - mu;
      sq += dx * dx;
    }
    double sd = std::sqrt(sq / n);
    out.stats.mean[c] = mu;
    out.stats.stddev[c] = sd > 0.0 ? sd : 1.0;
  }
  for (std::size_t t = 0; t < d.slots; ++t)
    for (std::size_t c = 0; c < d.cells; ++c)
      out.demand.at(t, c) = out.stats.transform(d.at(t, c), c);
  return out;
}

struct Sample {
  std::vector<double> x;  // input_len * nodes, slot-major
  std::vector<double> y;  // nodes
  std::size_t target_slot = 0;
};

inline std::vector<Sample> make_windows(const DemandTensor& d, std::size_t begin, std::size_t end,
                                        std::size_t input_len) {
  if (end > d.slots || begin >= end) throw std::invalid_argument("make_windows: bad range");
  if (end - begin <= input_len)
    throw std::invalid_argument("make_windows: range shorter than one window plus target");
  std::vector<Sample> out;
  out.reserve(end - begin - input_len);
  for (std::size_t k = begin; k + input_len < end; ++k) {
    Sample s;
    s.x.reserve(input_len * d.cells);
    for (std::size_t t = k; t < k + input_len; ++t)
      for (std::size_t c = 0; c < d.cells; ++c) s.x.push_back(d.at(t, c));
    s.y.reserve(d.cells);
    for (std::size_t c = 0; c < d.cells; ++c) s.y.push_back(d.at(k + input_len, c));
    s.target_slot = k + input_len;
    out.push_back(std::move(s));
  }
  return out;
}

struct WindowedDataset {
  std::size_t input_len = 0;
  std::size_t nodes = 0;
  SplitRanges ranges;
  NormStats stats;
  std::vector<Sample> train, val, test;
};

inline WindowedDataset build_dataset(const DemandTensor& node_series, std::size_t input_len,
                                     double train_frac = 0.8, double val_frac = 0.1,
                                     double test_frac = 0.1) {
  WindowedDataset ds;
  ds.input_len = input_len;
  ds.nodes = node_series.cells;
  ds.ranges = split(node_series.slots, train_frac, val_frac, test_frac);
  NormalizeResult norm = normalize(node_series, ds.ranges.train_begin, ds.ranges.train_end);
  ds.stats = std::move(norm.stats);
  ds.train = make_windows(norm.demand, ds.ranges.train_begin, ds.ranges.train_end, input_len);
  ds.val = make_windows(norm.demand, ds.ranges.val_begin, ds.ranges.val_end, input_len);
  ds.test = make_windows(norm.demand, ds.ranges.test_begin, ds.ranges.test_end, input_len);
  return ds;
}

}  // namespace vgnet
