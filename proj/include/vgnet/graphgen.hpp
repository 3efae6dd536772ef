#pragma once

// Virtual-graph construction in three steps: drop sparse cells, aggregate
// spatially adjacent cells with similar demand patterns into virtual nodes,
// then connect nodes by reciprocal distance, demand correlation, and
// (when origin-destination data exists) mobility flow, keeping each row's
// top fraction of scores.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgnet/demand.hpp"
#include "vgnet/grid.hpp"

namespace vgnet {

struct RegionStats {
  std::size_t cell_id = 0;
  double mean_demand = 0.0;
  std::vector<double> series;  // demand over the training window
};

struct VirtualNode {
  std::size_t node_id = 0;
  std::vector<std::size_t> member_cells;  // ascending grid indices
  double centroid_lat = 0.0;
  double centroid_lon = 0.0;
  std::vector<double> series;  // elementwise sum over members
};

using AdjMatrix = std::vector<std::vector<std::uint8_t>>;

struct VirtualGraphSet {
  std::vector<VirtualNode> nodes;
  AdjMatrix adj_distance;
  AdjMatrix adj_correlation;
  AdjMatrix adj_mobility;  // empty when OD data is unavailable
  int graph_count = 2;

  bool has_mobility() const { return !adj_mobility.empty(); }
};

inline std::vector<RegionStats> compute_stats(const DemandTensor& demand,
                                              std::size_t train_begin, std::size_t train_end) {
  if (train_begin >= train_end || train_end > demand.slots)
    throw std::invalid_argument("compute_stats: bad training range [" +
                                std::to_string(train_begin) + ", " + std::to_string(train_end) +
                                ") for " + std::to_string(demand.slots) + " slots");
  std::vector<RegionStats> out(demand.cells);
  double len = static_cast<double>(train_end - train_begin);
  for (std::size_t c = 0; c < demand.cells; ++c) {
    RegionStats& s = out[c];
    s.cell_id = c;
    s.series.resize(train_end - train_begin);
    double acc = 0.0;
    for (std::size_t t = train_begin; t < train_end; ++t) {
      s.series[t - train_begin] = demand.at(t, c);
      acc += demand.at(t, c);
    }
    s.mean_demand = acc / len;
  }
  return out;
}

// Keeps cells whose training mean clears the threshold (discard is strict <).
inline std::vector<RegionStats> discard_sparse(const std::vector<RegionStats>& stats,
                                               double delta) {
  if (delta < 0) throw std::invalid_argument("discard_sparse: delta must be >= 0");
  std::vector<RegionStats> kept;
  for (const auto& s : stats)
    if (!(s.mean_demand < delta)) kept.push_back(s);
  if (kept.empty())
    throw std::runtime_error("no significant regions at delta=" + std::to_string(delta));
  return kept;
}

// Pearson correlation, mean-centered form. Zero-variance input yields 0
// (and sets *degenerate) rather than dividing by zero.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b,
                      bool* degenerate = nullptr) {
  if (a.size() != b.size())
    throw std::invalid_argument("pearson: length mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  if (a.size() < 2) throw std::invalid_argument("pearson: need length >= 2");
  if (degenerate) *degenerate = false;
  double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0.0 || vb == 0.0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return cov / (std::sqrt(va) * std::sqrt(vb));
}

// Adjacency lists over positions in `retained` (not raw cell ids): two
// retained cells are neighbors when their grid cells touch, corners included.
inline std::vector<std::vector<std::size_t>> spatial_neighbors(
    const std::vector<RegionStats>& retained, const GridSpec& spec) {
  std::vector<std::vector<std::size_t>> adj(retained.size());
  for (std::size_t i = 0; i < retained.size(); ++i)
    for (std::size_t j = i + 1; j < retained.size(); ++j)
      if (spec.neighbors8(retained[i].cell_id, retained[j].cell_id)) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

// Greedy aggregation, scanning retained cells in ascending grid order.
// A seed gathers its unconsumed neighbors with correlation above epsilon,
// then drops any candidate that correlates more strongly with some third
// unconsumed neighbor of its own; seed and survivors form one node and are
// all consumed. A seed whose candidates were all dropped becomes a singleton
// immediately; a seed with no candidates at all stays available for later
// absorption and is emitted as a trailing singleton only if never consumed.
inline std::vector<VirtualNode> aggregate_regions(const std::vector<RegionStats>& retained,
                                                  double epsilon, const GridSpec& spec) {
  if (!(epsilon > -1.0 && epsilon <= 1.0))
    throw std::invalid_argument("aggregate_regions: epsilon must lie in (-1, 1]");
  for (std::size_t i = 1; i < retained.size(); ++i)
    if (retained[i - 1].cell_id >= retained[i].cell_id)
      throw std::invalid_argument("aggregate_regions: cells must be in ascending order");

  std::size_t n = retained.size();
  auto adj = spatial_neighbors(retained, spec);
  std::vector<std::vector<double>> r(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : adj[i])
      if (j > i) {
        double v = pearson(retained[i].series, retained[j].series);
        r[i][j] = v;
        r[j][i] = v;
      }

  std::vector<bool> consumed(n, false);
  std::vector<std::vector<std::size_t>> clusters;

  auto unconsumed_similar = [&](std::size_t center) {
    std::vector<std::size_t> out;
    for (std::size_t j : adj[center])
      if (!consumed[j] && r[center][j] > epsilon) out.push_back(j);
    return out;
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (consumed[i]) continue;
    std::vector<std::size_t> cand = unconsumed_similar(i);
    if (cand.empty()) continue;
    std::vector<std::size_t> kept;
    for (std::size_t j : cand) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k : unconsumed_similar(j)) best = std::max(best, r[k][j]);
      // the seed itself is always in j's set, so best >= r[i][j]
      if (!(best > r[i][j])) kept.push_back(j);
    }
    std::vector<std::size_t> cluster{i};
    cluster.insert(cluster.end(), kept.begin(), kept.end());
    std::sort(cluster.begin(), cluster.end());
    for (std::size_t m : cluster) consumed[m] = true;
    clusters.push_back(std::move(cluster));
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!consumed[i]) clusters.push_back({i});

  std::vector<VirtualNode> nodes;
  nodes.reserve(clusters.size());
  for (std::size_t id = 0; id < clusters.size(); ++id) {
    VirtualNode node;
    node.node_id = id;
    double lat = 0.0, lon = 0.0;
    for (std::size_t pos : clusters[id]) {
      const RegionStats& s = retained[pos];
      node.member_cells.push_back(s.cell_id);
      auto [la, lo] = spec.cell_center(s.cell_id);
      lat += la;
      lon += lo;
      if (node.series.empty()) {
        node.series = s.series;
      } else {
        for (std::size_t t = 0; t < node.series.size(); ++t) node.series[t] += s.series[t];
      }
    }
    node.centroid_lat = lat / static_cast<double>(clusters[id].size());
    node.centroid_lon = lon / static_cast<double>(clusters[id].size());
    std::sort(node.member_cells.begin(), node.member_cells.end());
    nodes.push_back(std::move(node));
  }
  return nodes;
}

inline double region_distance(const VirtualNode& a, const VirtualNode& b) {
  return haversine_km(a.centroid_lat, a.centroid_lon, b.centroid_lat, b.centroid_lon);
}

// Bidirectional origin-destination flow between two nodes' member cells.
inline double mobility_score(const ODTensor& od, const VirtualNode& a, const VirtualNode& b) {
  double s = 0.0;
  for (std::size_t p : a.member_cells)
    for (std::size_t q : b.member_cells) s += od.at(p, q) + od.at(q, p);
  return s;
}

// Per row, keep the k = max(1, floor(frac*(N-1))) strongest scores (ties to
// the lower index), then take the symmetric union. Diagonal is ignored and
// stays zero.
inline AdjMatrix build_adjacency(const std::vector<std::vector<double>>& scores, double frac) {
  std::size_t n = scores.size();
  if (n < 2) throw std::invalid_argument("build_adjacency: need at least 2 nodes");
  if (!(frac > 0.0 && frac <= 1.0))
    throw std::invalid_argument("build_adjacency: frac must lie in (0, 1]");
  for (const auto& row : scores)
    if (row.size() != n) throw std::invalid_argument("build_adjacency: score matrix not square");

  std::size_t k = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(frac * static_cast<double>(n - 1))));
  AdjMatrix adj(n, std::vector<std::uint8_t>(n, 0));
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[i][a] > scores[i][b]; });
    for (std::size_t t = 0; t < k && t < order.size(); ++t) adj[i][order[t]] = 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      std::uint8_t v = std::max(adj[i][j], adj[j][i]);
      adj[i][j] = v;
      adj[j][i] = v;
    }
  return adj;
}

inline VirtualGraphSet build_graphs(const std::vector<VirtualNode>& nodes, const ODTensor* od,
                                    double frac = 0.1) {
  std::size_t n = nodes.size();
  if (n < 2) throw std::invalid_argument("build_graphs: need at least 2 virtual nodes");
  VirtualGraphSet gs;
  gs.nodes = nodes;

  std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
  std::vector<std::vector<double>> corr(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = region_distance(nodes[i], nodes[j]);
      double rec = d == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / d;
      dist[i][j] = rec;
      dist[j][i] = rec;
      double c = pearson(nodes[i].series, nodes[j].series);
      corr[i][j] = c;
      corr[j][i] = c;
    }
  gs.adj_distance = build_adjacency(dist, frac);
  gs.adj_correlation = build_adjacency(corr, frac);
  if (od) {
    std::vector<std::vector<double>> mob(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double m = mobility_score(*od, nodes[i], nodes[j]);
        mob[i][j] = m;
        mob[j][i] = m;
      }
    gs.adj_mobility = build_adjacency(mob, frac);
    gs.graph_count = 3;
  } else {
    gs.graph_count = 2;
  }
  return gs;
}

// ---------------------------------------------------------------------------
// JSON serialization. Keys are emitted in sorted order, so identical graph
// sets produce byte-identical documents. Node series are not stored; they
// are recomputed from the demand tensor on load.

namespace detail {

inline nlohmann::json edges_json(const AdjMatrix& adj) {
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t i = 0; i < adj.size(); ++i)
    for (std::size_t j = i + 1; j < adj.size(); ++j)
      if (adj[i][j]) edges.push_back({i, j});
  return edges;
}

inline AdjMatrix edges_from_json(const nlohmann::json& edges, std::size_t n) {
  AdjMatrix adj(n, std::vector<std::uint8_t>(n, 0));
  for (const auto& e : edges) {
    std::size_t i = e.at(0).get<std::size_t>();
    std::size_t j = e.at(1).get<std::size_t>();
    if (i >= n || j >= n || i == j) throw std::runtime_error("graph file: invalid edge");
    adj[i][j] = 1;
    adj[j][i] = 1;
  }
  return adj;
}

}  // namespace detail

inline nlohmann::json graphs_to_json(const VirtualGraphSet& gs) {
  nlohmann::json doc;
  doc["nodes"] = nlohmann::json::array();
  for (const auto& node : gs.nodes) {
    nlohmann::json n;
    n["id"] = node.node_id;
    n["cells"] = node.member_cells;
    n["centroid"] = {node.centroid_lat, node.centroid_lon};
    doc["nodes"].push_back(n);
  }
  doc["graphs"]["distance"] = detail::edges_json(gs.adj_distance);
  doc["graphs"]["correlation"] = detail::edges_json(gs.adj_correlation);
  if (gs.has_mobility()) doc["graphs"]["mobility"] = detail::edges_json(gs.adj_mobility);
  return doc;
}

inline void save_graphs(const std::string& path, const VirtualGraphSet& gs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << graphs_to_json(gs).dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline VirtualGraphSet load_graphs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  VirtualGraphSet gs;
  for (const auto& n : doc.at("nodes")) {
    VirtualNode node;
    node.node_id = n.at("id").get<std::size_t>();
    node.member_cells = n.at("cells").get<std::vector<std::size_t>>();
    node.centroid_lat = n.at("centroid").at(0).get<double>();
    node.centroid_lon = n.at("centroid").at(1).get<double>();
    gs.nodes.push_back(std::move(node));
  }
  std::size_t n = gs.nodes.size();
  gs.adj_distance = detail::edges_from_json(doc.at("graphs").at("distance"), n);
  gs.adj_correlation = detail::edges_from_json(doc.at("graphs").at("correlation"), n);
  if (doc.at("graphs").contains("mobility")) {
    gs.adj_mobility = detail::edges_from_json(doc.at("graphs").at("mobility"), n);
    gs.graph_count = 3;
  } else {
    gs.graph_count = 2;
  }
  return gs;
}

// Rebuilds each node's series as the sum of its member cells' demand rows.
inline void attach_node_series(std::vector<VirtualNode>& nodes, const DemandTensor& demand,
                               std::size_t begin, std::size_t end) {
  if (begin >= end || end > demand.slots)
    throw std::invalid_argument("attach_node_series: bad slot range");
  for (auto& node : nodes) {
    node.series.assign(end - begin, 0.0);
    for (std::size_t c : node.member_cells) {
      if (c >= demand.cells) throw std::runtime_error("attach_node_series: cell out of range");
      for (std::size_t t = begin; t < end; ++t) node.series[t - begin] += demand.at(t, c);
    }
  }
}

// Demand restricted to virtual nodes: slot-major, one column per node.
inline DemandTensor node_demand(const std::vector<VirtualNode>& nodes,
                                const DemandTensor& demand) {
  DemandTensor out;
  out.slots = demand.slots;
  out.cells = nodes.size();
  out.t0 = demand.t0;
  out.bin_width = demand.bin_width;
  out.values.assign(out.slots * out.cells, 0.0);
  for (std::size_t k = 0; k < nodes.size(); ++k)
    for (std::size_t c : nodes[k].member_cells) {
      if (c >= demand.cells) throw std::runtime_error("node_demand: cell out of range");
      for (std::size_t t = 0; t < demand.slots; ++t) out.at(t, k) += demand.at(t, c);
    }
  return out;
}

}  // namespace vgnet
