#pragma once

// Pipeline configuration: one JSON file shared by every subcommand, with
// command-line flags overriding individual fields. Unknown keys are rejected
// so typos fail loudly instead of silently running defaults.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgnet/grid.hpp"
#include "vgnet/model.hpp"
#include "vgnet/train.hpp"

namespace vgnet {

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct PipelineConfig {
  std::uint64_t seed = 7;
  GridSpec grid{40.628, 40.830, -74.05, -73.88, 40, 30};
  double delta = 1.0;
  double epsilon = 0.5;
  double top_frac = 0.1;
  double hot_frac = 0.1;
  SplitFractions split_frac;

  // model geometry; node and graph counts are filled in from the data
  std::size_t embed_dim = 12;
  std::size_t conv_channels = 12;
  std::size_t heads = 4;
  std::size_t kernel = 3;
  std::size_t gat_layers = 2;
  std::size_t attn_dim = 8;
  std::size_t model_dim = 12;
  std::size_t ffn_dim = 24;
  bool literal_pe = false;

  TrainConfig train;
  std::vector<std::string> variants;  // empty means the default ablation list
};

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const char* where,
                           std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok)
      throw std::invalid_argument(std::string("config: unknown key \"") + key + "\" in " + where);
  }
}

template <typename T>
void maybe(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline PipelineConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  detail::reject_unknown(j, "top level",
                         {"seed", "grid", "delta", "epsilon", "top_frac", "hot_frac", "split",
                          "model", "train", "variants"});
  PipelineConfig cfg;
  detail::maybe(j, "seed", cfg.seed);
  detail::maybe(j, "delta", cfg.delta);
  detail::maybe(j, "epsilon", cfg.epsilon);
  detail::maybe(j, "top_frac", cfg.top_frac);
  detail::maybe(j, "hot_frac", cfg.hot_frac);

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    detail::reject_unknown(g, "grid", {"lat_min", "lat_max", "lon_min", "lon_max", "rows", "cols"});
    detail::maybe(g, "lat_min", cfg.grid.lat_min);
    detail::maybe(g, "lat_max", cfg.grid.lat_max);
    detail::maybe(g, "lon_min", cfg.grid.lon_min);
    detail::maybe(g, "lon_max", cfg.grid.lon_max);
    detail::maybe(g, "rows", cfg.grid.rows);
    detail::maybe(g, "cols", cfg.grid.cols);
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::reject_unknown(s, "split", {"train", "val", "test"});
    detail::maybe(s, "train", cfg.split_frac.train);
    detail::maybe(s, "val", cfg.split_frac.val);
    detail::maybe(s, "test", cfg.split_frac.test);
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::reject_unknown(m, "model",
                           {"embed_dim", "conv_channels", "heads", "kernel", "gat_layers",
                            "attn_dim", "model_dim", "ffn_dim", "literal_pe"});
    detail::maybe(m, "embed_dim", cfg.embed_dim);
    detail::maybe(m, "conv_channels", cfg.conv_channels);
    detail::maybe(m, "heads", cfg.heads);
    detail::maybe(m, "kernel", cfg.kernel);
    detail::maybe(m, "gat_layers", cfg.gat_layers);
    detail::maybe(m, "attn_dim", cfg.attn_dim);
    detail::maybe(m, "model_dim", cfg.model_dim);
    detail::maybe(m, "ffn_dim", cfg.ffn_dim);
    detail::maybe(m, "literal_pe", cfg.literal_pe);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown(t, "train", {"lr", "batch", "input_len", "patience", "max_epochs"});
    detail::maybe(t, "lr", cfg.train.lr);
    detail::maybe(t, "batch", cfg.train.batch);
    detail::maybe(t, "input_len", cfg.train.input_len);
    detail::maybe(t, "patience", cfg.train.patience);
    detail::maybe(t, "max_epochs", cfg.train.max_epochs);
  }
  detail::maybe(j, "variants", cfg.variants);
  cfg.train.seed = cfg.seed;
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// Snapshot of the effective configuration, serialized with sorted keys so a
// rerun of the same settings produces a byte-identical manifest entry.
inline nlohmann::json config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["delta"] = cfg.delta;
  j["epsilon"] = cfg.epsilon;
  j["top_frac"] = cfg.top_frac;
  j["hot_frac"] = cfg.hot_frac;
  j["grid"] = {{"lat_min", cfg.grid.lat_min}, {"lat_max", cfg.grid.lat_max},
               {"lon_min", cfg.grid.lon_min}, {"lon_max", cfg.grid.lon_max},
               {"rows", cfg.grid.rows},       {"cols", cfg.grid.cols}};
  j["split"] = {{"train", cfg.split_frac.train},
                {"val", cfg.split_frac.val},
                {"test", cfg.split_frac.test}};
  j["model"] = {{"embed_dim", cfg.embed_dim},   {"conv_channels", cfg.conv_channels},
                {"heads", cfg.heads},           {"kernel", cfg.kernel},
                {"gat_layers", cfg.gat_layers}, {"attn_dim", cfg.attn_dim},
                {"model_dim", cfg.model_dim},   {"ffn_dim", cfg.ffn_dim},
                {"literal_pe", cfg.literal_pe}};
  j["train"] = {{"lr", cfg.train.lr},
                {"batch", cfg.train.batch},
                {"input_len", cfg.train.input_len},
                {"patience", cfg.train.patience},
                {"max_epochs", cfg.train.max_epochs}};
  j["variants"] = cfg.variants;
  return j;
}

inline ModelConfig make_model_config(const PipelineConfig& cfg, std::size_t nodes,
                                     std::size_t graph_count) {
  ModelConfig mc;
  mc.nodes = nodes;
  mc.graph_count = graph_count;
  mc.input_len = cfg.train.input_len;
  mc.embed_dim = cfg.embed_dim;
  mc.conv_channels = cfg.conv_channels;
  mc.heads = cfg.heads;
  mc.kernel = cfg.kernel;
  mc.gat_layers = cfg.gat_layers;
  mc.attn_dim = cfg.attn_dim;
  mc.model_dim = cfg.model_dim;
  mc.ffn_dim = cfg.ffn_dim;
  mc.literal_pe = cfg.literal_pe;
  if (graph_count == 0 || cfg.embed_dim % graph_count != 0)
    throw std::invalid_argument("config: embed_dim " + std::to_string(cfg.embed_dim) +
                                " must be divisible by the graph count " +
                                std::to_string(graph_count));
  mc.gat_out = cfg.embed_dim / graph_count;
  mc.validate();
  return mc;
}

}  // namespace vgnet
