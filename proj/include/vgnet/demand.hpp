#pragma once

// Demand binning over grid cells and time slots, origin-destination
// accumulation, and the on-disk format for both (binary counts plus a
// JSON sidecar carrying grid geometry and time metadata).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgnet/grid.hpp"
#include "vgnet/trips.hpp"

namespace vgnet {

struct DemandTensor {
  std::size_t slots = 0;
  std::size_t cells = 0;
  std::int64_t t0 = 0;
  std::int64_t bin_width = 3600;
  std::vector<double> values;  // row-major slots x cells

  double& at(std::size_t t, std::size_t c) { return values[t * cells + c]; }
  double at(std::size_t t, std::size_t c) const { return values[t * cells + c]; }

  double total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

struct ODTensor {
  std::size_t cells = 0;
  std::vector<double> counts;  // row-major cells x cells, origin -> destination

  double& at(std::size_t i, std::size_t j) { return counts[i * cells + j]; }
  double at(std::size_t i, std::size_t j) const { return counts[i * cells + j]; }

  double total() const {
    double s = 0.0;
    for (double v : counts) s += v;
    return s;
  }
};

struct BinResult {
  DemandTensor tensor;
  std::size_t dropped = 0;  // out of bounds in space or time
};

// Counts pickups per (slot, cell) over half-open bins [t0 + k*w, t0 + (k+1)*w).
// The window [t0, t1) is truncated to whole bins; records outside the grid or
// the truncated window are dropped and counted.
inline BinResult bin_demand(const std::vector<TripRecord>& trips, const GridSpec& spec,
                            std::int64_t bin_width, std::int64_t t0, std::int64_t t1) {
  spec.validate();
  if (!(t0 < t1)) throw std::invalid_argument("bin_demand: need t0 < t1");
  if (bin_width <= 0) throw std::invalid_argument("bin_demand: bin width must be positive");
  std::size_t slots = static_cast<std::size_t>((t1 - t0) / bin_width);
  if (slots == 0) throw std::invalid_argument("bin_demand: window shorter than one bin");

  BinResult res;
  res.tensor.slots = slots;
  res.tensor.cells = spec.cell_count();
  res.tensor.t0 = t0;
  res.tensor.bin_width = bin_width;
  res.tensor.values.assign(slots * res.tensor.cells, 0.0);
  std::int64_t t_end = t0 + static_cast<std::int64_t>(slots) * bin_width;
  for (const auto& r : trips) {
    if (r.pickup_time < t0 || r.pickup_time >= t_end) {
      ++res.dropped;
      continue;
    }
    std::size_t c = spec.cell(r.pickup_lat, r.pickup_lon);
    if (c == GridSpec::kOutOfBounds) {
      ++res.dropped;
      continue;
    }
    auto slot = static_cast<std::size_t>((r.pickup_time - t0) / bin_width);
    res.tensor.at(slot, c) += 1.0;
  }
  if (res.tensor.total() == 0.0)
    std::cerr << "warning: no trips fell inside the grid/time window\n";
  return res;
}

struct OdResult {
  ODTensor tensor;
  std::size_t dropped = 0;  // either endpoint out of bounds, or out of window
};

// Accumulates origin->destination cell counts for trips picked up in [t0, t1).
inline OdResult build_od(const std::vector<TripRecord>& trips, const GridSpec& spec,
                         std::int64_t t0, std::int64_t t1) {
  spec.validate();
  bool any_dropoff = false;
  for (const auto& r : trips)
    if (r.has_dropoff) {
      any_dropoff = true;
      break;
    }
  if (!any_dropoff)
    throw std::runtime_error("build_od: no drop-off coordinates present; mobility graph unavailable");

  OdResult res;
  res.tensor.cells = spec.cell_count();
  res.tensor.counts.assign(res.tensor.cells * res.tensor.cells, 0.0);
  for (const auto& r : trips) {
    if (!r.has_dropoff || r.pickup_time < t0 || r.pickup_time >= t1) {
      ++res.dropped;
      continue;
    }
    std::size_t i = spec.cell(r.pickup_lat, r.pickup_lon);
    std::size_t j = spec.cell(r.dropoff_lat, r.dropoff_lon);
    if (i == GridSpec::kOutOfBounds || j == GridSpec::kOutOfBounds) {
      ++res.dropped;
      continue;
    }
    res.tensor.at(i, j) += 1.0;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Serialization. Counts are written as little-endian unsigned 64-bit values;
// geometry and time metadata live in a sidecar "<path>.meta" JSON file.

namespace detail {

inline std::uint64_t count_as_u64(double v, const char* what) {
  if (v < 0 || std::floor(v) != v)
    throw std::runtime_error(std::string(what) + ": counts must be nonnegative integers to serialize");
  return static_cast<std::uint64_t>(v);
}

}  // namespace detail

constexpr char kDemandMagic[8] = {'V', 'G', 'N', 'T', 'D', 'E', 'M', '1'};
constexpr char kOdMagic[8] = {'V', 'G', 'N', 'T', 'O', 'D', '_', '1'};

inline void save_demand(const std::string& path, const DemandTensor& d, const GridSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kDemandMagic, 8);
  detail::put_u64(out, d.slots);
  detail::put_u64(out, d.cells);
  for (double v : d.values) detail::put_u64(out, detail::count_as_u64(v, "demand"));
  if (!out) throw std::runtime_error("write failed: " + path);

  nlohmann::json meta;
  meta["lat_min"] = spec.lat_min;
  meta["lat_max"] = spec.lat_max;
  meta["lon_min"] = spec.lon_min;
  meta["lon_max"] = spec.lon_max;
  meta["rows"] = spec.rows;
  meta["cols"] = spec.cols;
  meta["t0"] = d.t0;
  meta["bin_width"] = d.bin_width;
  std::ofstream ms(path + ".meta");
  ms << meta.dump(2) << "\n";
  if (!ms) throw std::runtime_error("write failed: " + path + ".meta");
}

struct DemandFile {
  DemandTensor demand;
  GridSpec grid;
};

inline DemandFile load_demand(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kDemandMagic, 8))
    throw std::runtime_error(path + " is not a demand tensor file");
  DemandFile f;
  f.demand.slots = detail::get_u64(in);
  f.demand.cells = detail::get_u64(in);
  f.demand.values.resize(f.demand.slots * f.demand.cells);
  for (auto& v : f.demand.values) v = static_cast<double>(detail::get_u64(in));

  std::ifstream ms(path + ".meta");
  if (!ms) throw std::runtime_error("missing sidecar " + path + ".meta");
  nlohmann::json meta = nlohmann::json::parse(ms);
  f.grid.lat_min = meta.at("lat_min").get<double>();
  f.grid.lat_max = meta.at("lat_max").get<double>();
  f.grid.lon_min = meta.at("lon_min").get<double>();
  f.grid.lon_max = meta.at("lon_max").get<double>();
  f.grid.rows = meta.at("rows").get<std::size_t>();
  f.grid.cols = meta.at("cols").get<std::size_t>();
  f.demand.t0 = meta.at("t0").get<std::int64_t>();
  f.demand.bin_width = meta.at("bin_width").get<std::int64_t>();
  if (f.grid.cell_count() != f.demand.cells)
    throw std::runtime_error(path + ": sidecar grid does not match cell count");
  return f;
}

inline void save_od(const std::string& path, const ODTensor& od) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kOdMagic, 8);
  detail::put_u64(out, od.cells);
  for (double v : od.counts) detail::put_u64(out, detail::count_as_u64(v, "od"));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline ODTensor load_od(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kOdMagic, 8))
    throw std::runtime_error(path + " is not an od tensor file");
  ODTensor od;
  od.cells = detail::get_u64(in);
  od.counts.resize(od.cells * od.cells);
  for (auto& v : od.counts) v = static_cast<double>(detail::get_u64(in));
  return od;
}

}  // namespace vgnet
