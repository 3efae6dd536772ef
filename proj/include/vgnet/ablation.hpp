#pragma once

// Component-knockout harness: trains the full model alongside variants with
// a reduced graph set, no temporal convolution, or no self-attention stage,
// and tabulates test metrics per variant. Multi-seed runs report the mean of
// each metric across seeds.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vgnet/graphgen.hpp"
#include "vgnet/metrics.hpp"
#include "vgnet/model.hpp"
#include "vgnet/train.hpp"

namespace vgnet {

struct VariantSpec {
  std::string tag;
  bool use_distance = true;
  bool use_correlation = true;
  bool use_mobility = true;
  bool short_term = true;
  bool long_term = true;

  void validate() const {
    if (!use_distance && !use_correlation && !use_mobility)
      throw std::invalid_argument("variant " + tag + ": needs at least one graph");
    if (!short_term && !long_term)
      throw std::invalid_argument("variant " + tag + ": needs at least one temporal view");
  }

  std::size_t graph_count() const {
    return (use_distance ? 1u : 0u) + (use_correlation ? 1u : 0u) + (use_mobility ? 1u : 0u);
  }
  bool needs_mobility() const { return use_mobility; }
};

// Eight knockouts plus the full model. Single- and dual-graph variants keep
// both temporal views; the two view knockouts keep all graphs.
inline std::vector<VariantSpec> default_variants() {
  auto v = [](const char* tag, bool d, bool c, bool m, bool st = true, bool lt = true) {
    VariantSpec s;
    s.tag = tag;
    s.use_distance = d;
    s.use_correlation = c;
    s.use_mobility = m;
    s.short_term = st;
    s.long_term = lt;
    return s;
  };
  return {
      v("D", true, false, false),
      v("C", false, true, false),
      v("M", false, false, true),
      v("D+C", true, true, false),
      v("C+M", false, true, true),
      v("D+M", true, false, true),
      v("SD", true, true, true, true, false),
      v("LD", true, true, true, false, true),
      v("full", true, true, true),
  };
}

struct AblationRow {
  VariantSpec spec;
  bool available = true;
  double rmse_mean = std::numeric_limits<double>::quiet_NaN();
  double mae_mean = std::numeric_limits<double>::quiet_NaN();
  double mape_mean = std::numeric_limits<double>::quiet_NaN();
  double val_loss_mean = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> rmse_per_seed;
  std::size_t param_count = 0;
};

struct AblationResult {
  std::vector<AblationRow> rows;

  const AblationRow& row(const std::string& tag) const {
    for (const auto& r : rows)
      if (r.spec.tag == tag) return r;
    throw std::out_of_range("no ablation row: " + tag);
  }
};

// Derives the per-variant model configuration from the full-model baseline.
// The embedding width stays fixed; per-graph attention width rescales so the
// concatenated spatial output still matches the residual path.
inline ModelConfig variant_config(const ModelConfig& base, const VariantSpec& v) {
  ModelConfig cfg = base;
  cfg.graph_count = v.graph_count();
  if (cfg.embed_dim % cfg.graph_count != 0)
    throw std::invalid_argument("variant " + v.tag + ": embedding width " +
                                std::to_string(cfg.embed_dim) + " not divisible by " +
                                std::to_string(cfg.graph_count) + " graphs");
  cfg.gat_out = cfg.embed_dim / cfg.graph_count;
  cfg.short_term = v.short_term;
  cfg.long_term = v.long_term;
  if (!v.short_term) cfg.conv_channels = cfg.embed_dim;
  if (!v.long_term) cfg.model_dim = cfg.embed_dim;
  cfg.validate();
  return cfg;
}

inline std::vector<Tensor> variant_masks(const VirtualGraphSet& graphs, const VariantSpec& v) {
  std::vector<Tensor> masks;
  if (v.use_distance) masks.push_back(adjacency_mask(graphs.adj_distance));
  if (v.use_correlation) masks.push_back(adjacency_mask(graphs.adj_correlation));
  if (v.use_mobility) masks.push_back(adjacency_mask(graphs.adj_mobility));
  return masks;
}

// Trains and scores each variant once per seed. With the default list,
// mobility-dependent variants on data without OD flows become "unavailable"
// rows; an explicit request for them is an error instead.
inline AblationResult run_ablation(const WindowedDataset& ds, const VirtualGraphSet& graphs,
                                   const ModelConfig& base, const TrainConfig& base_tc,
                                   const std::vector<std::uint64_t>& seeds = {1},
                                   std::optional<std::vector<VariantSpec>> requested = std::nullopt,
                                   double hot_frac = 0.1) {
  if (seeds.empty()) throw std::invalid_argument("run_ablation: need at least one seed");
  bool explicit_list = requested.has_value();
  std::vector<VariantSpec> variants = explicit_list ? *requested : default_variants();
  for (const auto& v : variants) v.validate();

  if (!graphs.has_mobility()) {
    std::vector<std::string> blocked;
    for (const auto& v : variants)
      if (v.needs_mobility()) blocked.push_back(v.tag);
    if (!blocked.empty() && explicit_list) {
      std::ostringstream os;
      os << "mobility graph unavailable (no OD flows); cannot run variants:";
      for (const auto& t : blocked) os << ' ' << t;
      throw std::invalid_argument(os.str());
    }
  }

  AblationResult result;
  for (const auto& v : variants) {
    AblationRow row;
    row.spec = v;
    if (v.needs_mobility() && !graphs.has_mobility()) {
      row.available = false;
      result.rows.push_back(std::move(row));
      continue;
    }
    ModelConfig cfg = variant_config(base, v);
    std::vector<Tensor> masks = variant_masks(graphs, v);
    double rmse_acc = 0, mae_acc = 0, mape_acc = 0, val_acc = 0;
    for (std::uint64_t seed : seeds) {
      Rng init(seed);
      Model model(cfg, masks, init);
      row.param_count = model.params().param_count();
      TrainConfig tc = base_tc;
      tc.seed = seed;
      TrainResult tr = train(model, ds, tc);
      ForecastReport rep = evaluate_model(model, ds, ds.test, v.tag, hot_frac);
      rmse_acc += rep.rmse_value;
      mae_acc += rep.mae_value;
      mape_acc += rep.mape_value;
      val_acc += tr.best_val;
      row.rmse_per_seed.push_back(rep.rmse_value);
    }
    double n = static_cast<double>(seeds.size());
    row.rmse_mean = rmse_acc / n;
    row.mae_mean = mae_acc / n;
    row.mape_mean = mape_acc / n;
    row.val_loss_mean = val_acc / n;
    result.rows.push_back(std::move(row));
  }
  return result;
}

inline std::string ablation_table(const AblationResult& res) {
  std::ostringstream os;
  os << "variant\tgraphs\tviews\tparams\trmse\tmae\tmape_top\tval_loss\n";
  for (const auto& r : res.rows) {
    os << r.spec.tag << '\t';
    os << (r.spec.use_distance ? "D" : "") << (r.spec.use_correlation ? "C" : "")
       << (r.spec.use_mobility ? "M" : "") << '\t';
    os << (r.spec.short_term ? "S" : "") << (r.spec.long_term ? "L" : "") << '\t';
    if (!r.available) {
      os << "-\tunavailable\tunavailable\tunavailable\t-\n";
      continue;
    }
    os << r.param_count << '\t' << r.rmse_mean << '\t' << r.mae_mean << '\t' << r.mape_mean
       << '\t' << r.val_loss_mean << '\n';
  }
  return os.str();
}

}  // namespace vgnet
