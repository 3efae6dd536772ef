#pragma once

// The forecasting network. A batch of demand windows (B, M, N, 1) flows
// through: scalar embedding to C1 channels; a gated temporal convolution
// per node (short-term view); per-graph stacks of multi-head graph
// attention whose concatenated outputs rejoin the embedding through a
// residual sum (spatial view); sinusoidal position encoding plus
// multi-head self-attention over the time axis per node (long-term view);
// and a batch-normalized two-layer output network reading the final time
// step into one prediction per node.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vgnet/common.hpp"
#include "vgnet/graphgen.hpp"
#include "vgnet/tensor.hpp"

namespace vgnet {

struct ModelConfig {
  std::size_t input_len = 12;    // M
  std::size_t nodes = 0;         // N
  std::size_t graph_count = 2;   // g: graphs wired into the spatial view
  std::size_t embed_dim = 8;     // C1
  std::size_t conv_channels = 8; // C2
  std::size_t gat_out = 4;       // C3, must satisfy C1 = g * C3
  std::size_t kernel = 3;        // K, odd
  std::size_t heads = 4;         // L, for both attention stages
  std::size_t gat_layers = 2;
  std::size_t attn_dim = 16;     // d_k per self-attention head
  std::size_t model_dim = 8;     // d_m
  std::size_t ffn_dim = 16;      // d_f1
  bool short_term = true;        // gated convolution enabled
  bool long_term = true;         // self-attention stage enabled
  bool literal_pe = false;       // position-parity encoding variant

  // Fills the derived widths from C1: C2 = C1, C3 = C1/g, d_m = C1,
  // d_f1 = 2*C1.
  static ModelConfig make(std::size_t nodes, std::size_t graph_count, std::size_t embed_dim) {
    ModelConfig c;
    c.nodes = nodes;
    c.graph_count = graph_count;
    c.embed_dim = embed_dim;
    c.conv_channels = embed_dim;
    if (embed_dim % graph_count != 0)
      throw std::invalid_argument("model config: embed_dim must be divisible by graph_count");
    c.gat_out = embed_dim / graph_count;
    c.model_dim = embed_dim;
    c.ffn_dim = 2 * embed_dim;
    return c;
  }

  void validate() const {
    if (nodes == 0 || input_len == 0 || graph_count == 0 || heads == 0 || gat_layers == 0)
      throw std::invalid_argument("model config: zero-sized dimension");
    if (embed_dim != graph_count * gat_out)
      throw std::invalid_argument("model config: embed_dim (" + std::to_string(embed_dim) +
                                  ") must equal graph_count*gat_out (" +
                                  std::to_string(graph_count * gat_out) + ")");
    if (kernel % 2 == 0)
      throw std::invalid_argument("model config: kernel size must be odd");
    if (!short_term && conv_channels != embed_dim)
      throw std::invalid_argument(
          "model config: disabling the convolution stage requires conv_channels == embed_dim");
    if (!long_term && model_dim != embed_dim)
      throw std::invalid_argument(
          "model config: disabling the self-attention stage requires model_dim == embed_dim");
  }
};

struct GatHeadParams {
  Tensor w;     // (Cin, C3)
  Tensor attn;  // (2*C3): first half scores the center, second the neighbor
};

struct ModelParams {
  Tensor embed_w;                  // (1, C1)
  Tensor conv_filter, conv_gate;   // (K, C1, C2)
  std::vector<std::vector<std::vector<GatHeadParams>>> gat;  // [graph][layer][head]
  std::vector<Tensor> mhsa_q, mhsa_k, mhsa_v;  // per head: (C1, d_k)
  Tensor mhsa_proj;                // (L*d_k, d_m)
  Tensor ffn_w1, ffn_b1;           // (d_m, d_f1), (d_f1)
  Tensor ffn_w2, ffn_b2;           // (d_f1, 1), (1)
  Tensor bn_gamma, bn_beta;        // (d_f1)
  Tensor bn_rmean, bn_rvar;        // (d_f1), running buffers, not learned

  static ModelParams init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    auto glorot = [&rng](Shape shape, std::size_t fan_in, std::size_t fan_out) {
      double s = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
      return Tensor::randn(std::move(shape), rng, s);
    };
    ModelParams p;
    p.embed_w = glorot({1, cfg.embed_dim}, 1, cfg.embed_dim);
    if (cfg.short_term) {
      p.conv_filter = glorot({cfg.kernel, cfg.embed_dim, cfg.conv_channels},
                             cfg.kernel * cfg.embed_dim, cfg.conv_channels);
      p.conv_gate = glorot({cfg.kernel, cfg.embed_dim, cfg.conv_channels},
                           cfg.kernel * cfg.embed_dim, cfg.conv_channels);
    }
    p.gat.resize(cfg.graph_count);
    for (auto& layers : p.gat) {
      layers.resize(cfg.gat_layers);
      for (std::size_t l = 0; l < cfg.gat_layers; ++l) {
        std::size_t cin = l == 0 ? cfg.conv_channels : cfg.gat_out;
        layers[l].resize(cfg.heads);
        for (auto& head : layers[l]) {
          head.w = glorot({cin, cfg.gat_out}, cin, cfg.gat_out);
          head.attn = glorot({2 * cfg.gat_out}, 2 * cfg.gat_out, 1);
        }
      }
    }
    if (cfg.long_term) {
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        p.mhsa_q.push_back(glorot({cfg.embed_dim, cfg.attn_dim}, cfg.embed_dim, cfg.attn_dim));
        p.mhsa_k.push_back(glorot({cfg.embed_dim, cfg.attn_dim}, cfg.embed_dim, cfg.attn_dim));
        p.mhsa_v.push_back(glorot({cfg.embed_dim, cfg.attn_dim}, cfg.embed_dim, cfg.attn_dim));
      }
      p.mhsa_proj = glorot({cfg.heads * cfg.attn_dim, cfg.model_dim}, cfg.heads * cfg.attn_dim,
                           cfg.model_dim);
    }
    p.ffn_w1 = glorot({cfg.model_dim, cfg.ffn_dim}, cfg.model_dim, cfg.ffn_dim);
    p.ffn_b1 = Tensor::zeros({cfg.ffn_dim});
    p.ffn_w2 = glorot({cfg.ffn_dim, 1}, cfg.ffn_dim, 1);
    p.ffn_b2 = Tensor::zeros({1});
    p.bn_gamma = Tensor::full({cfg.ffn_dim}, 1.0);
    p.bn_beta = Tensor::zeros({cfg.ffn_dim});
    p.bn_rmean = Tensor::zeros({cfg.ffn_dim});
    p.bn_rvar = Tensor::full({cfg.ffn_dim}, 1.0);
    for (auto& [name, t] : p.named()) t.set_requires_grad(true);
    return p;
  }

  // Learnable tensors with stable names; running statistics excluded, and
  // disabled stages contribute nothing.
  std::vector<std::pair<std::string, Tensor>> named() {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embed_w", embed_w);
    if (conv_filter.defined()) {
      out.emplace_back("conv_filter", conv_filter);
      out.emplace_back("conv_gate", conv_gate);
    }
    for (std::size_t gi = 0; gi < gat.size(); ++gi)
      for (std::size_t l = 0; l < gat[gi].size(); ++l)
        for (std::size_t h = 0; h < gat[gi][l].size(); ++h) {
          std::string base =
              "gat" + std::to_string(gi) + "_l" + std::to_string(l) + "_h" + std::to_string(h);
          out.emplace_back(base + "_w", gat[gi][l][h].w);
          out.emplace_back(base + "_attn", gat[gi][l][h].attn);
        }
    for (std::size_t h = 0; h < mhsa_q.size(); ++h) {
      out.emplace_back("mhsa_q" + std::to_string(h), mhsa_q[h]);
      out.emplace_back("mhsa_k" + std::to_string(h), mhsa_k[h]);
      out.emplace_back("mhsa_v" + std::to_string(h), mhsa_v[h]);
    }
    if (mhsa_proj.defined()) out.emplace_back("mhsa_proj", mhsa_proj);
    out.emplace_back("ffn_w1", ffn_w1);
    out.emplace_back("ffn_b1", ffn_b1);
    out.emplace_back("ffn_w2", ffn_w2);
    out.emplace_back("ffn_b2", ffn_b2);
    out.emplace_back("bn_gamma", bn_gamma);
    out.emplace_back("bn_beta", bn_beta);
    return out;
  }

  std::vector<Tensor> learnable() {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  // All tensors including running buffers, for checkpointing.
  std::vector<std::pair<std::string, Tensor>> all_named() {
    auto out = named();
    out.emplace_back("bn_rmean", bn_rmean);
    out.emplace_back("bn_rvar", bn_rvar);
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto& [name, t] : named()) n += t.size();
    return n;
  }

  ModelParams clone() const {
    ModelParams c = *this;
    auto copy = [](Tensor& t) {
      if (!t.defined()) return;
      bool rg = t.requires_grad();
      t = t.detached_copy();
      t.set_requires_grad(rg);
    };
    copy(c.embed_w);
    copy(c.conv_filter);
    copy(c.conv_gate);
    for (auto& layers : c.gat)
      for (auto& heads : layers)
        for (auto& h : heads) {
          copy(h.w);
          copy(h.attn);
        }
    for (auto& t : c.mhsa_q) copy(t);
    for (auto& t : c.mhsa_k) copy(t);
    for (auto& t : c.mhsa_v) copy(t);
    copy(c.mhsa_proj);
    copy(c.ffn_w1);
    copy(c.ffn_b1);
    copy(c.ffn_w2);
    copy(c.ffn_b2);
    copy(c.bn_gamma);
    copy(c.bn_beta);
    copy(c.bn_rmean);
    copy(c.bn_rvar);
    return c;
  }
};

// Attention mask for one graph: neighbors plus self-loops, as an (N, N)
// 0/1 tensor broadcastable over batch and time.
inline Tensor adjacency_mask(const AdjMatrix& adj) {
  std::size_t n = adj.size();
  std::vector<double> m(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      if (adj[i][j]) m[i * n + j] = 1.0;
    m[i * n + i] = 1.0;
  }
  return Tensor::from({n, n}, std::move(m));
}

// Sinusoid table, shape (1, M, 1, width) so it broadcasts over batch and
// nodes. Default: frequency indexed by channel pair, position in the
// numerator. The literal variant instead switches sin/cos by position
// parity and reuses the position index in the exponent, filling each row
// with a single value.
inline Tensor positional_encoding(std::size_t len, std::size_t width, bool literal = false) {
  std::vector<double> pe(len * width, 0.0);
  for (std::size_t m = 0; m < len; ++m)
    for (std::size_t c = 0; c < width; ++c) {
      double v;
      if (literal) {
        double expo = 2.0 * static_cast<double>(m) / static_cast<double>(width);
        double angle = static_cast<double>(m) / std::pow(10000.0, expo);
        v = (m % 2 == 0) ? std::sin(angle) : std::cos(angle);
      } else {
        double expo = 2.0 * static_cast<double>(c / 2) / static_cast<double>(width);
        double angle = static_cast<double>(m) / std::pow(10000.0, expo);
        v = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
      }
      pe[m * width + c] = v;
    }
  return Tensor::from({1, len, 1, width}, std::move(pe));
}

class Model {
 public:
  Model(ModelConfig cfg, std::vector<Tensor> graph_masks, ModelParams params)
      : cfg_(cfg), masks_(std::move(graph_masks)), params_(std::move(params)) {
    cfg_.validate();
    if (masks_.size() != cfg_.graph_count)
      throw std::invalid_argument("model: expected " + std::to_string(cfg_.graph_count) +
                                  " graph masks, got " + std::to_string(masks_.size()));
    for (const auto& m : masks_)
      if (m.shape() != Shape{cfg_.nodes, cfg_.nodes})
        throw std::invalid_argument("model: graph mask shape mismatch");
    pe_ = positional_encoding(cfg_.input_len, cfg_.embed_dim, cfg_.literal_pe);
  }

  Model(ModelConfig cfg, std::vector<Tensor> graph_masks, Rng& rng)
      : Model(cfg, std::move(graph_masks), ModelParams::init(cfg, rng)) {}

  const ModelConfig& config() const { return cfg_; }
  ModelParams& params() { return params_; }
  const std::vector<Tensor>& graph_masks() const { return masks_; }

  // x0: (B, M, N, 1) normalized demand windows. Returns (B, N, 1) in the
  // same normalized units; targets sit on both sides of zero there, so the
  // nonnegativity clamp lives where predictions are mapped back to demand
  // counts, not here.
  Tensor forward(const Tensor& x0, bool train) {
    check_input(x0);
    Tensor x1 = linear(x0, params_.embed_w);  // (B,M,N,C1)
    Tensor x2 = cfg_.short_term ? gated_conv(x1) : x1;
    Tensor x4 = add(x1, spatial_view(x2));
    Tensor x5 = cfg_.long_term ? self_attention(add(x4, pe_), train) : x4;
    Tensor last = select(x5, 1, cfg_.input_len - 1);  // (B,N,d_m)
    Tensor h = relu(batchnorm(add(linear(last, params_.ffn_w1), params_.ffn_b1),
                              params_.bn_gamma, params_.bn_beta, params_.bn_rmean,
                              params_.bn_rvar, train));
    return add(linear(h, params_.ffn_w2), params_.ffn_b2);  // (B,N,1)
  }

  // Exposed for attention-row inspection in tests: per graph, per layer,
  // per head attention maps of the most recent forward.
  const std::vector<Tensor>& last_gat_attention() const { return gat_attention_; }
  const std::vector<Tensor>& last_mhsa_attention() const { return mhsa_attention_; }

 private:
  void check_input(const Tensor& x0) const {
    const Shape& s = x0.shape();
    if (s.size() != 4 || s[1] != cfg_.input_len || s[2] != cfg_.nodes || s[3] != 1)
      throw std::invalid_argument("model: input must be (B, " + std::to_string(cfg_.input_len) +
                                  ", " + std::to_string(cfg_.nodes) + ", 1), got " +
                                  shape_str(s));
  }

  // Per node: two parallel convolutions over time, one squashed into a
  // sigmoid gate for the other.
  Tensor gated_conv(const Tensor& x1) {
    Tensor xt = transpose(x1, {0, 2, 1, 3});  // (B,N,M,C1)
    Tensor a = conv1d_same(xt, params_.conv_filter);
    Tensor b = conv1d_same(xt, params_.conv_gate);
    return transpose(hadamard(a, sigmoid(b)), {0, 2, 1, 3});  // (B,M,N,C2)
  }

  // One graph-attention layer: per head, score center/neighbor pairs,
  // softmax over each neighborhood, aggregate; heads averaged, then a
  // leaky rectification.
  Tensor gat_layer(const Tensor& h, std::size_t graph, std::size_t layer) {
    std::size_t c3 = cfg_.gat_out;
    const Shape& s = h.shape();  // (B,M,N,Cin)
    Tensor merged;
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
      const GatHeadParams& hp = params_.gat[graph][layer][hd];
      Tensor hw = linear(h, hp.w);  // (B,M,N,C3)
      Tensor a_center = reshape(narrow(hp.attn, 0, 0, c3), {c3, 1});
      Tensor a_neigh = reshape(narrow(hp.attn, 0, c3, c3), {c3, 1});
      Tensor sc = linear(hw, a_center);  // (B,M,N,1)
      Tensor sn = linear(hw, a_neigh);   // (B,M,N,1)
      Tensor logits =
          leaky_relu(add(sc, reshape(sn, {s[0], s[1], 1, cfg_.nodes})), 0.2);  // (B,M,N,N)
      Tensor attn = softmax(logits, 3, masks_[graph]);
      gat_attention_.push_back(attn);
      Tensor out = matmul(attn, hw);  // (B,M,N,C3)
      merged = merged.defined() ? add(merged, out) : out;
    }
    return leaky_relu(scale(merged, 1.0 / static_cast<double>(cfg_.heads)), 0.2);
  }

  // Stacked graph attention per graph, outputs concatenated on channels.
  Tensor spatial_view(const Tensor& x2) {
    gat_attention_.clear();
    std::vector<Tensor> per_graph;
    for (std::size_t gi = 0; gi < cfg_.graph_count; ++gi) {
      Tensor h = x2;
      for (std::size_t l = 0; l < cfg_.gat_layers; ++l) h = gat_layer(h, gi, l);
      per_graph.push_back(h);
    }
    return per_graph.size() == 1 ? per_graph[0] : concat(per_graph, 3);  // (B,M,N,g*C3)
  }

  // Scaled dot-product attention over time, per node, heads concatenated
  // and projected.
  Tensor self_attention(const Tensor& x4, bool /*train*/) {
    mhsa_attention_.clear();
    Tensor xt = transpose(x4, {0, 2, 1, 3});  // (B,N,M,C1)
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg_.attn_dim));
    std::vector<Tensor> heads;
    for (std::size_t hd = 0; hd < cfg_.heads; ++hd) {
      Tensor q = linear(xt, params_.mhsa_q[hd]);  // (B,N,M,d_k)
      Tensor k = linear(xt, params_.mhsa_k[hd]);
      Tensor v = linear(xt, params_.mhsa_v[hd]);
      Tensor logits = scale(matmul(q, transpose(k, {0, 1, 3, 2})), inv_sqrt);  // (B,N,M,M)
      Tensor attn = softmax(logits, 3);
      mhsa_attention_.push_back(attn);
      heads.push_back(matmul(attn, v));  // (B,N,M,d_k)
    }
    Tensor cat = heads.size() == 1 ? heads[0] : concat(heads, 3);  // (B,N,M,L*d_k)
    Tensor proj = linear(cat, params_.mhsa_proj);                  // (B,N,M,d_m)
    return transpose(proj, {0, 2, 1, 3});                          // (B,M,N,d_m)
  }

  ModelConfig cfg_;
  std::vector<Tensor> masks_;
  ModelParams params_;
  Tensor pe_;
  std::vector<Tensor> gat_attention_;
  std::vector<Tensor> mhsa_attention_;
};

}  // namespace vgnet
