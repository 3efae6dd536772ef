#pragma once

// Smooth-L1 objective and the optimization loop: seeded mini-batch shuffling,
// Adam updates, per-epoch validation, and early stopping on the best
// validation loss. Single-worker throughout so a fixed seed reproduces the
// loss history exactly.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vgnet/adam.hpp"
#include "vgnet/dataset.hpp"
#include "vgnet/model.hpp"
#include "vgnet/tensor.hpp"

namespace vgnet {

// Mean over elements of 0.5 x^2 for |x| < 1 and |x| - 0.5 otherwise, with
// x = target - pred. Both branches meet at |x| = 1 with matching value and
// slope, so the gradient is clamp(x, -1, 1) up to sign and scaling.
inline Tensor smooth_l1(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw std::invalid_argument("smooth_l1: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(target.shape()));
  std::size_t n = pred.size();
  if (n == 0) throw std::invalid_argument("smooth_l1: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = target.values()[i] - pred.values()[i];
    double ax = std::fabs(x);
    acc += ax < 1.0 ? 0.5 * x * x : ax - 0.5;
  }
  acc /= static_cast<double>(n);

  auto pn = pred.node();
  auto tn = target.node();
  return make_op(
      Shape{}, {acc}, {pred, target},
      [pn, tn, n](TensorNode& out) {
        double g = out.grad[0] / static_cast<double>(n);
        if (pn->requires_grad) pn->ensure_grad();
        if (tn->requires_grad) tn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
          double x = tn->value[i] - pn->value[i];
          double dx = std::fabs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0);
          if (pn->requires_grad) pn->grad[i] -= g * dx;
          if (tn->requires_grad) tn->grad[i] += g * dx;
        }
      });
}

struct TrainConfig {
  double lr = 0.003;
  std::size_t batch = 16;
  std::size_t input_len = 12;
  std::size_t patience = 10;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 1;

  void validate() const {
    if (lr <= 0 || batch == 0 || input_len == 0 || max_epochs == 0)
      throw std::invalid_argument("train config: lr, batch, input_len, max_epochs must be positive");
  }
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;  // 1-based
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::pair<std::string, Tensor>> best_state;  // learnables + batchnorm buffers
};

namespace detail {

inline std::pair<Tensor, Tensor> assemble_batch(const std::vector<Sample>& samples,
                                                const std::vector<std::size_t>& order,
                                                std::size_t begin, std::size_t end,
                                                std::size_t input_len, std::size_t nodes) {
  std::size_t b = end - begin;
  std::vector<double> xs;
  xs.reserve(b * input_len * nodes);
  std::vector<double> ys;
  ys.reserve(b * nodes);
  for (std::size_t i = begin; i < end; ++i) {
    const Sample& s = samples[order[i]];
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  return {Tensor::from({b, input_len, nodes, 1}, std::move(xs)),
          Tensor::from({b, nodes, 1}, std::move(ys))};
}

inline std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  return order;
}

}  // namespace detail

// Mean Smooth-L1 loss over a whole sample list, evaluated in inference mode.
inline double evaluate_loss(Model& model, const std::vector<Sample>& samples, std::size_t batch) {
  if (samples.empty()) throw std::invalid_argument("evaluate_loss: no samples");
  std::size_t input_len = model.config().input_len;
  std::size_t nodes = model.config().nodes;
  auto order = detail::identity_order(samples.size());
  double acc = 0.0;
  for (std::size_t at = 0; at < samples.size(); at += batch) {
    std::size_t end = std::min(at + batch, samples.size());
    auto [x, y] = detail::assemble_batch(samples, order, at, end, input_len, nodes);
    Tensor loss = smooth_l1(model.forward(x, false), y);
    acc += loss.item() * static_cast<double>(end - at);
  }
  return acc / static_cast<double>(samples.size());
}

// Normalized-space predictions for a sample list, row-major (sample, node).
inline std::vector<double> predict(Model& model, const std::vector<Sample>& samples,
                                   std::size_t batch = 64) {
  std::size_t input_len = model.config().input_len;
  std::size_t nodes = model.config().nodes;
  auto order = detail::identity_order(samples.size());
  std::vector<double> out;
  out.reserve(samples.size() * nodes);
  for (std::size_t at = 0; at < samples.size(); at += batch) {
    std::size_t end = std::min(at + batch, samples.size());
    auto [x, y] = detail::assemble_batch(samples, order, at, end, input_len, nodes);
    Tensor pred = model.forward(x, false);
    out.insert(out.end(), pred.values().begin(), pred.values().end());
  }
  return out;
}

inline TrainResult train(Model& model, const WindowedDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.empty() || data.val.empty())
    throw std::invalid_argument("train: empty training or validation split");
  if (data.input_len != model.config().input_len || data.nodes != model.config().nodes)
    throw std::invalid_argument("train: dataset geometry does not match model config");

  AdamConfig ac;
  ac.lr = cfg.lr;
  std::vector<Tensor> learnable = model.params().learnable();
  AdamState opt(learnable, ac);
  Rng rng(cfg.seed);

  TrainResult result;
  std::size_t since_best = 0;
  std::vector<std::size_t> order = detail::identity_order(data.train.size());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_acc = 0.0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch) {
      std::size_t end = std::min(at + cfg.batch, order.size());
      auto [x, y] =
          detail::assemble_batch(data.train, order, at, end, data.input_len, data.nodes);
      Tensor loss = smooth_l1(model.forward(x, true), y);
      double lv = loss.item();
      if (!std::isfinite(lv))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(at / cfg.batch));
      train_acc += lv * static_cast<double>(end - at);
      backward(loss);
      opt.step();
    }

    EpochStats stats;
    stats.train_loss = train_acc / static_cast<double>(order.size());
    stats.val_loss = evaluate_loss(model, data.val, cfg.batch);
    result.history.push_back(stats);

    if (stats.val_loss < result.best_val) {
      result.best_val = stats.val_loss;
      result.best_epoch = epoch;
      result.best_state.clear();
      for (const auto& [name, t] : model.params().all_named())
        result.best_state.emplace_back(name, t.detached_copy());
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= cfg.patience) break;
  }

  // leave the live model at its best validation state
  for (auto& [name, t] : model.params().all_named())
    for (const auto& [bname, bt] : result.best_state)
      if (bname == name) {
        t.raw() = bt.values();
        break;
      }
  return result;
}

}  // namespace vgnet
