#pragma once

// Reference implementations used only for verification. Everything here is
// deliberately written from scratch against the definitions, not by calling
// the production code, so the two can disagree when one is wrong.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vgnet/common.hpp"
#include "vgnet/graphgen.hpp"
#include "vgnet/grid.hpp"

namespace vgnet::testing {

// Pearson via the raw-moment computational formula, a different evaluation
// order from the production mean-centered form.
inline double pearson_raw_moment(const std::vector<double>& a, const std::vector<double>& b) {
  double n = static_cast<double>(a.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sx += a[i];
    sy += b[i];
    sxx += a[i] * a[i];
    syy += b[i] * b[i];
    sxy += a[i] * b[i];
  }
  double num = n * sxy - sx * sy;
  double dx = n * sxx - sx * sx;
  double dy = n * syy - sy * sy;
  if (dx <= 0.0 || dy <= 0.0) return 0.0;
  return num / (std::sqrt(dx) * std::sqrt(dy));
}

// Literal step-by-step executor of the aggregation procedure over retained
// cells (ascending grid ids) with their demand series. Returns clusters of
// grid cell ids, sorted within each cluster, in creation order. Shares the
// documented conventions (unconsumed-only neighbor sets, seed consumed in
// both branches, skipped seeds emitted as trailing singletons) but none of
// the production code.
inline std::vector<std::vector<std::size_t>> aggregate_clusters_naive(
    const std::vector<std::size_t>& cells, const std::vector<std::vector<double>>& series,
    double epsilon, std::size_t grid_cols) {
  std::size_t m = cells.size();
  std::vector<std::vector<double>> r(m, std::vector<double>(m, 0.0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) r[i][j] = pearson_raw_moment(series[i], series[j]);

  std::vector<int> label(m, 0);
  auto adjacent = [&](std::size_t a, std::size_t b) {
    long ra = static_cast<long>(cells[a] / grid_cols), ca = static_cast<long>(cells[a] % grid_cols);
    long rb = static_cast<long>(cells[b] / grid_cols), cb = static_cast<long>(cells[b] % grid_cols);
    return a != b && std::labs(ra - rb) <= 1 && std::labs(ca - cb) <= 1;
  };
  auto neighbor_set = [&](std::size_t center) {
    std::set<std::size_t> out;
    for (std::size_t j = 0; j < m; ++j)
      if (label[j] == 0 && adjacent(center, j) && r[center][j] > epsilon) out.insert(j);
    return out;
  };

  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < m; ++i) {
    if (label[i] != 0) continue;
    std::set<std::size_t> Ni = neighbor_set(i);
    if (Ni.empty()) continue;
    std::vector<std::size_t> snapshot(Ni.begin(), Ni.end());
    for (std::size_t j : snapshot) {
      std::set<std::size_t> Nj = neighbor_set(j);
      std::vector<double> Rj;
      for (std::size_t k : Nj) Rj.push_back(r[k][j]);
      if (*std::max_element(Rj.begin(), Rj.end()) > r[i][j]) Ni.erase(j);
    }
    if (!Ni.empty())
      for (std::size_t j : Ni) label[j] = 1;
    label[i] = 1;
    std::vector<std::size_t> ci{i};
    ci.insert(ci.end(), Ni.begin(), Ni.end());
    std::sort(ci.begin(), ci.end());
    clusters.push_back(std::move(ci));
  }
  for (std::size_t i = 0; i < m; ++i)
    if (label[i] == 0) clusters.push_back({i});

  for (auto& c : clusters)
    for (auto& pos : c) pos = cells[pos];
  return clusters;
}

struct OracleReport {
  bool ok = true;
  std::size_t cases = 0;
  double worst = 0.0;
  std::string detail;
};

inline OracleReport run_pearson_oracle(std::size_t pairs, Rng& rng) {
  OracleReport rep;
  for (std::size_t p = 0; p < pairs; ++p) {
    std::size_t len = 2 + rng.index(60);
    std::vector<double> a(len), b(len);
    for (auto& v : a) v = rng.normal(rng.uniform(-5, 5), rng.uniform(0.5, 3.0));
    for (auto& v : b) v = rng.normal(rng.uniform(-5, 5), rng.uniform(0.5, 3.0));
    double got = vgnet::pearson(a, b);
    double want = pearson_raw_moment(a, b);
    double diff = std::fabs(got - want);
    rep.worst = std::max(rep.worst, diff);
    ++rep.cases;
    if (diff >= 1e-10) {
      rep.ok = false;
      std::ostringstream os;
      os << "pair " << p << ": " << got << " vs " << want;
      rep.detail = os.str();
      return rep;
    }
  }
  return rep;
}

// Random small aggregation instances, compared exactly against the naive
// executor. Half the instances carry planted correlated groups so both the
// absorb and prune branches get exercised.
inline OracleReport run_aggregation_oracle(std::size_t instances, Rng& rng) {
  OracleReport rep;
  for (std::size_t it = 0; it < instances; ++it) {
    std::size_t rows = 3 + rng.index(3);
    std::size_t cols = 3 + rng.index(3);
    GridSpec spec{0.0, static_cast<double>(rows), 0.0, static_cast<double>(cols), rows, cols};
    std::size_t total = rows * cols;
    std::size_t keep = 2 + rng.index(11);  // up to 12 retained cells
    std::vector<std::size_t> all(total);
    for (std::size_t i = 0; i < total; ++i) all[i] = i;
    rng.shuffle(all);
    std::vector<std::size_t> cells(all.begin(), all.begin() + std::min(keep, total));
    std::sort(cells.begin(), cells.end());

    std::size_t len = 16 + rng.index(17);
    bool planted = rng.uniform() < 0.5;
    std::vector<double> base(len);
    for (auto& v : base) v = rng.normal();
    std::vector<std::vector<double>> series(cells.size());
    for (auto& s : series) {
      s.resize(len);
      bool in_group = planted && rng.uniform() < 0.6;
      for (std::size_t t = 0; t < len; ++t)
        s[t] = in_group ? 0.9 * base[t] + 0.25 * rng.normal() : rng.normal();
    }
    double epsilon = rng.uniform(-0.2, 0.9);

    std::vector<RegionStats> retained(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      retained[i].cell_id = cells[i];
      retained[i].series = series[i];
    }
    auto nodes = aggregate_regions(retained, epsilon, spec);
    auto naive = aggregate_clusters_naive(cells, series, epsilon, cols);

    bool same = nodes.size() == naive.size();
    for (std::size_t k = 0; same && k < nodes.size(); ++k)
      same = nodes[k].member_cells == naive[k];
    ++rep.cases;
    if (!same) {
      rep.ok = false;
      std::ostringstream os;
      os << "instance " << it << " (" << rows << "x" << cols << ", eps=" << epsilon
         << "): got " << nodes.size() << " clusters, reference " << naive.size();
      rep.detail = os.str();
      return rep;
    }
  }
  return rep;
}

inline OracleReport run_adjacency_oracle(std::size_t matrices, Rng& rng) {
  OracleReport rep;
  for (std::size_t it = 0; it < matrices; ++it) {
    std::size_t n = 20 + rng.index(41);
    std::vector<std::vector<double>> scores(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double v = rng.uniform(-1.0, 1.0);
        scores[i][j] = v;
        scores[j][i] = v;
      }
    auto adj = build_adjacency(scores, 0.1);
    std::size_t k = std::max<std::size_t>(1, (n - 1) / 10);
    bool ok = true;
    for (std::size_t i = 0; ok && i < n; ++i) {
      if (adj[i][i] != 0) ok = false;
      std::size_t ones = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (adj[i][j] != adj[j][i]) ok = false;
        ones += adj[i][j];
      }
      if (ones < k) ok = false;
    }
    ++rep.cases;
    if (!ok) {
      rep.ok = false;
      rep.detail = "matrix " + std::to_string(it) + " (n=" + std::to_string(n) + ")";
      return rep;
    }
  }
  return rep;
}

}  // namespace vgnet::testing
