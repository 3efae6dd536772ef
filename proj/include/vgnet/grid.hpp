#pragma once

// Regular lat/lon grid over a bounding box, row-major cell indexing.

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace vgnet {

struct GridSpec {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  static constexpr std::size_t kOutOfBounds = std::numeric_limits<std::size_t>::max();

  void validate() const {
    if (!(lat_min < lat_max) || !(lon_min < lon_max))
      throw std::invalid_argument("grid: bounds must satisfy min < max");
    if (rows == 0 || cols == 0) throw std::invalid_argument("grid: rows and cols must be positive");
  }

  std::size_t cell_count() const { return rows * cols; }

  // Row-major cell index for a coordinate, kOutOfBounds outside the box.
  // Points exactly on the upper boundary clamp into the last row/col so the
  // advertised box is fully covered. NaN coordinates fail the range test.
  std::size_t cell(double lat, double lon) const {
    if (!(lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max))
      return kOutOfBounds;
    double dlat = (lat_max - lat_min) / static_cast<double>(rows);
    double dlon = (lon_max - lon_min) / static_cast<double>(cols);
    auto clamp_floor = [](double v, std::size_t n) {
      auto i = static_cast<long long>(std::floor(v));
      if (i < 0) i = 0;
      if (i >= static_cast<long long>(n)) i = static_cast<long long>(n) - 1;
      return static_cast<std::size_t>(i);
    };
    std::size_t row = clamp_floor((lat - lat_min) / dlat, rows);
    std::size_t col = clamp_floor((lon - lon_min) / dlon, cols);
    return row * cols + col;
  }

  std::size_t row_of(std::size_t idx) const { return idx / cols; }
  std::size_t col_of(std::size_t idx) const { return idx % cols; }

  // Geographic center of a cell.
  std::pair<double, double> cell_center(std::size_t idx) const {
    if (idx >= cell_count()) throw std::out_of_range("grid: cell index " + std::to_string(idx));
    double dlat = (lat_max - lat_min) / static_cast<double>(rows);
    double dlon = (lon_max - lon_min) / static_cast<double>(cols);
    double lat = lat_min + (static_cast<double>(row_of(idx)) + 0.5) * dlat;
    double lon = lon_min + (static_cast<double>(col_of(idx)) + 0.5) * dlon;
    return {lat, lon};
  }

  // Chebyshev-1 grid adjacency: shares an edge or a corner.
  bool neighbors8(std::size_t a, std::size_t b) const {
    if (a == b || a >= cell_count() || b >= cell_count()) return false;
    auto dr = static_cast<long long>(row_of(a)) - static_cast<long long>(row_of(b));
    auto dc = static_cast<long long>(col_of(a)) - static_cast<long long>(col_of(b));
    return dr >= -1 && dr <= 1 && dc >= -1 && dc <= 1;
  }
};

// Great-circle distance in km, mean Earth radius 6371 km.
inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kRadius = 6371.0;
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  double phi1 = lat1 * kDeg, phi2 = lat2 * kDeg;
  double dphi = (lat2 - lat1) * kDeg, dlam = (lon2 - lon1) * kDeg;
  double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
             std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) * std::sin(dlam / 2);
  return 2.0 * kRadius * std::asin(std::min(1.0, std::sqrt(a)));
}

}  // namespace vgnet
