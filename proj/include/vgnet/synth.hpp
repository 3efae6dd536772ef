#pragma once

// Synthetic demand generator with planted structure: the grid is tiled into
// square blocks of cells, each block sharing one sinusoidal daily profile
// (distinct phase and base rate per block) plus optional Poisson noise, and
// origin-destination flows concentrated inside blocks. The planted labels
// are returned so clustering quality can be scored against ground truth.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "vgnet/common.hpp"
#include "vgnet/demand.hpp"
#include "vgnet/grid.hpp"

namespace vgnet {

struct SynthSpec {
  std::size_t cells = 36;   // must be a square number, side divisible by blocks_per_side
  std::size_t slots = 1440; // 60 days hourly
  std::uint64_t seed = 7;
  double noise = 0.35;          // 0 disables noise entirely
  std::size_t period = 24;      // slots per daily cycle
  std::size_t blocks_per_side = 2;  // 4 planted clusters by default

  void validate() const {
    auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(cells))));
    if (side * side != cells) throw std::invalid_argument("synth: cells must be a square number");
    if (blocks_per_side == 0 || side % blocks_per_side != 0)
      throw std::invalid_argument("synth: grid side must divide into blocks");
    if (slots == 0 || period == 0) throw std::invalid_argument("synth: slots and period must be positive");
    if (noise < 0) throw std::invalid_argument("synth: noise must be nonnegative");
  }

  std::size_t side() const {
    return static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(cells))));
  }
  std::size_t clusters() const { return blocks_per_side * blocks_per_side; }
};

struct SynthData {
  GridSpec grid;
  DemandTensor demand;
  ODTensor od;
  std::vector<std::size_t> labels;  // planted cluster per cell
};

inline SynthData synth_generate(const SynthSpec& spec) {
  spec.validate();
  std::size_t side = spec.side();
  std::size_t block = side / spec.blocks_per_side;
  Rng rng(spec.seed);

  SynthData out;
  out.grid = GridSpec{40.0, 40.0 + 0.01 * static_cast<double>(side),
                      -74.0, -74.0 + 0.01 * static_cast<double>(side),
                      side, side};
  out.labels.resize(spec.cells);
  for (std::size_t c = 0; c < spec.cells; ++c) {
    std::size_t r = c / side, q = c % side;
    out.labels[c] = (r / block) * spec.blocks_per_side + (q / block);
  }

  std::size_t k = spec.clusters();
  std::vector<double> base(k), amp(k), phase(k);
  for (std::size_t i = 0; i < k; ++i) {
    base[i] = 10.0 + 3.0 * static_cast<double>(i);
    amp[i] = 0.45 * base[i];
    phase[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
  }

  out.demand.slots = spec.slots;
  out.demand.cells = spec.cells;
  out.demand.t0 = 0;
  out.demand.bin_width = 3600;
  out.demand.values.assign(spec.slots * spec.cells, 0.0);
  for (std::size_t t = 0; t < spec.slots; ++t) {
    double cycle = 2.0 * std::numbers::pi * static_cast<double>(t % spec.period) /
                   static_cast<double>(spec.period);
    for (std::size_t c = 0; c < spec.cells; ++c) {
      std::size_t g = out.labels[c];
      double rate = base[g] + amp[g] * std::sin(cycle + phase[g]);
      double v = rate;
      if (spec.noise > 0) {
        double draw = static_cast<double>(rng.poisson(rate));
        v += spec.noise * (draw - rate);
      }
      out.demand.at(t, c) = std::max(0.0, std::round(v));
    }
  }

  // flows: heavy inside a block, light across blocks, scaled with the span
  out.od.cells = spec.cells;
  out.od.counts.assign(spec.cells * spec.cells, 0.0);
  double days = static_cast<double>(spec.slots) / static_cast<double>(spec.period);
  for (std::size_t p = 0; p < spec.cells; ++p)
    for (std::size_t q = 0; q < spec.cells; ++q) {
      if (p == q) continue;
      double mean = (out.labels[p] == out.labels[q] ? 8.0 : 1.0) * days;
      out.od.at(p, q) = static_cast<double>(rng.poisson(mean));
    }
  return out;
}

}  // namespace vgnet
