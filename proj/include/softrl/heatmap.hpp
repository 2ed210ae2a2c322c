// SPDX-License-Identifier: Apache-2.0
//
// Visitation counting over a unit-cell discretization of the arena, with
// CSV and graymap emission. The CSV holds raw counts and reloads exactly;
// the graymap is log-scaled to 0-255 for viewing.

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "softrl/textio.hpp"

namespace softrl {

struct VisitationGrid {
  int cells_x = 150;
  int cells_y = 150;
  double extent_x = 150.0;
  double extent_y = 150.0;
  std::vector<std::int64_t> bins;  // row-major, index iy * cells_x + ix

  VisitationGrid() : bins(150 * 150, 0) {}
  VisitationGrid(int cx, int cy, double ex, double ey)
      : cells_x(cx), cells_y(cy), extent_x(ex), extent_y(ey) {
    if (cx <= 0 || cy <= 0 || ex <= 0 || ey <= 0)
      throw std::invalid_argument("visitation grid: non-positive shape");
    bins.assign(static_cast<std::size_t>(cx) * cy, 0);
  }

  std::int64_t& at(int ix, int iy) {
    return bins[static_cast<std::size_t>(iy) * cells_x + ix];
  }
  std::int64_t at(int ix, int iy) const {
    return bins[static_cast<std::size_t>(iy) * cells_x + ix];
  }

  // Bins a position; coordinates on the far edge fall into the last cell.
  void record(double x, double y) {
    int ix = static_cast<int>(std::floor(x / extent_x * cells_x));
    int iy = static_cast<int>(std::floor(y / extent_y * cells_y));
    if (ix < 0) ix = 0;
    if (ix >= cells_x) ix = cells_x - 1;
    if (iy < 0) iy = 0;
    if (iy >= cells_y) iy = cells_y - 1;
    ++at(ix, iy);
  }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (std::int64_t b : bins) t += b;
    return t;
  }
};

inline std::string visitation_to_csv(const VisitationGrid& grid) {
  std::ostringstream os;
  for (int iy = 0; iy < grid.cells_y; ++iy) {
    for (int ix = 0; ix < grid.cells_x; ++ix) {
      if (ix) os << ',';
      os << grid.at(ix, iy);
    }
    os << '\n';
  }
  return os.str();
}

inline VisitationGrid visitation_from_csv(const std::string& text,
                                          double extent_x = 150.0,
                                          double extent_y = 150.0) {
  std::vector<std::vector<std::int64_t>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::int64_t> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      std::size_t used = 0;
      const std::int64_t v = std::stoll(cell, &used);
      if (used != cell.size())
        throw std::invalid_argument("visitation csv: bad count: " + cell);
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("visitation csv: ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("visitation csv: empty");
  VisitationGrid grid(static_cast<int>(rows.front().size()),
                      static_cast<int>(rows.size()), extent_x, extent_y);
  for (int iy = 0; iy < grid.cells_y; ++iy)
    for (int ix = 0; ix < grid.cells_x; ++ix)
      grid.at(ix, iy) = rows[iy][ix];
  return grid;
}

// P2 graymap, log-scaled so the most-visited cell is white. The image is
// written north-up: the top pixel row is the highest-y cell row.
inline std::string visitation_to_pgm(const VisitationGrid& grid) {
  std::int64_t max_count = 0;
  for (std::int64_t b : grid.bins) max_count = std::max(max_count, b);
  const double denom = max_count > 0 ? std::log1p(static_cast<double>(max_count)) : 1.0;
  std::ostringstream os;
  os << "P2\n" << grid.cells_x << ' ' << grid.cells_y << "\n255\n";
  for (int iy = grid.cells_y - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < grid.cells_x; ++ix) {
      const double c = static_cast<double>(grid.at(ix, iy));
      const int pixel =
          max_count > 0
              ? static_cast<int>(std::lround(255.0 * std::log1p(c) / denom))
              : 0;
      if (ix) os << ' ';
      os << pixel;
    }
    os << '\n';
  }
  return os.str();
}

// Writes the count matrix and its log-scaled graymap rendering.
inline void emit_heatmap(const VisitationGrid& grid, const std::string& csv_path,
                         const std::string& pgm_path) {
  atomic_write_file(csv_path, visitation_to_csv(grid));
  atomic_write_file(pgm_path, visitation_to_pgm(grid));
}

}  // namespace softrl
