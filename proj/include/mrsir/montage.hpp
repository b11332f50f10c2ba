#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/png.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

// Tiled grayscale overview image: one row per volume. three_view shows the
// mid-plane coronal, sagittal and axial slices left to right; axial shows
// just the mid axial plane (the natural choice for 2D images).
enum class MontageLayout { three_view, axial };

namespace detail {

struct Tile {
  std::size_t rows = 0, cols = 0;
  std::vector<double> pix;
};

inline Tile mid_plane(const Volume& v, int view) {
  const Dims d = v.dims();
  Tile t;
  if (view == 0) { // coronal: fix y, rows = z, cols = x
    t.rows = d.depth;
    t.cols = d.width;
    t.pix.resize(t.rows * t.cols);
    const std::size_t y = d.height / 2;
    for (std::size_t z = 0; z < d.depth; ++z)
      for (std::size_t x = 0; x < d.width; ++x)
        t.pix[z * t.cols + x] = v.at(z, y, x);
  } else if (view == 1) { // sagittal: fix x, rows = z, cols = y
    t.rows = d.depth;
    t.cols = d.height;
    t.pix.resize(t.rows * t.cols);
    const std::size_t x = d.width / 2;
    for (std::size_t z = 0; z < d.depth; ++z)
      for (std::size_t y = 0; y < d.height; ++y)
        t.pix[z * t.cols + y] = v.at(z, y, x);
  } else { // axial: fix z, rows = y, cols = x
    t.rows = d.height;
    t.cols = d.width;
    t.pix.resize(t.rows * t.cols);
    const std::size_t z = d.depth / 2;
    for (std::size_t y = 0; y < d.height; ++y)
      for (std::size_t x = 0; x < d.width; ++x)
        t.pix[y * t.cols + x] = v.at(z, y, x);
  }
  return t;
}

} // namespace detail

inline void write_montage(const std::vector<Volume>& volumes,
                          MontageLayout layout, const std::string& path) {
  if (volumes.empty()) throw InvalidSpec("montage: no volumes");
  for (const auto& v : volumes)
    if (v.dims() != volumes.front().dims())
      throw DimMismatch("montage: volumes must share dims");

  const int n_views = layout == MontageLayout::three_view ? 3 : 1;
  const int first_view = layout == MontageLayout::three_view ? 0 : 2;

  std::vector<std::vector<detail::Tile>> grid;
  std::size_t cell_h = 0, cell_w = 0;
  for (const auto& v : volumes) {
    std::vector<detail::Tile> row;
    for (int k = 0; k < n_views; ++k) {
      row.push_back(detail::mid_plane(v, first_view + k));
      cell_h = std::max(cell_h, row.back().rows);
      cell_w = std::max(cell_w, row.back().cols);
    }
    grid.push_back(std::move(row));
  }

  constexpr std::size_t gap = 2;
  const std::size_t height = grid.size() * cell_h + (grid.size() - 1) * gap;
  const std::size_t width = static_cast<std::size_t>(n_views) * cell_w +
                            (static_cast<std::size_t>(n_views) - 1) * gap;
  std::vector<std::uint8_t> pixels(height * width, 0);

  for (std::size_t r = 0; r < grid.size(); ++r)
    for (std::size_t c = 0; c < grid[r].size(); ++c) {
      const auto& tile = grid[r][c];
      const std::size_t oy = r * (cell_h + gap);
      const std::size_t ox = c * (cell_w + gap);
      for (std::size_t y = 0; y < tile.rows; ++y)
        for (std::size_t x = 0; x < tile.cols; ++x) {
          const double v = std::clamp(tile.pix[y * tile.cols + x], 0.0, 1.0);
          pixels[(oy + y) * width + ox + x] =
              static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
  write_png_gray8(path, width, height, pixels);
}

} // namespace mrsir
