#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

// Classical missing-data filling. Each flagged voxel is replaced by the mean
// over axes of 1D estimates built from the nearest valid samples on each
// side; valid samples are always taken from the original data, so fills are
// independent of each other and of evaluation order.
struct InterpConfig {
  enum class Order { linear, cubic };
  Order order = Order::linear;
};

namespace detail {

struct AxisSamples {
  // Distances are positive offsets from the target voxel; count is how many
  // valid samples were found per side (up to 2).
  std::array<double, 2> neg_dist{}, pos_dist{};
  std::array<double, 2> neg_val{}, pos_val{};
  int n_neg = 0, n_pos = 0;
};

// Non-uniform Catmull-Rom (pyramidal) evaluation at x through four samples
// with knots t0 < t1 < x < t2 < t3. Reproduces quadratics exactly on any
// knot spacing.
inline double catmull_rom(double x, double t0, double t1, double t2, double t3,
                          double y0, double y1, double y2, double y3) {
  const double a1 = ((t1 - x) * y0 + (x - t0) * y1) / (t1 - t0);
  const double a2 = ((t2 - x) * y1 + (x - t1) * y2) / (t2 - t1);
  const double a3 = ((t3 - x) * y2 + (x - t2) * y3) / (t3 - t2);
  const double b1 = ((t2 - x) * a1 + (x - t0) * a2) / (t2 - t0);
  const double b2 = ((t3 - x) * a2 + (x - t1) * a3) / (t3 - t1);
  return ((t2 - x) * b1 + (x - t1) * b2) / (t2 - t1);
}

} // namespace detail

inline Volume fill(const Volume& v, const std::vector<std::uint8_t>& missing,
                   const InterpConfig& cfg = {}) {
  const Dims dims = v.dims();
  if (missing.size() != v.size())
    throw DimMismatch("fill: missing mask size must match volume");

  std::size_t n_missing = 0;
  for (auto m : missing) n_missing += m != 0;
  if (n_missing == v.size()) throw NoValidVoxels("fill: every voxel missing");
  if (n_missing == 0) return v;

  const std::ptrdiff_t extents[3] = {
      static_cast<std::ptrdiff_t>(dims.depth),
      static_cast<std::ptrdiff_t>(dims.height),
      static_cast<std::ptrdiff_t>(dims.width)};
  const std::ptrdiff_t strides[3] = {
      static_cast<std::ptrdiff_t>(dims.height * dims.width),
      static_cast<std::ptrdiff_t>(dims.width), 1};

  Volume out = v;
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(v.size());

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 256)
#endif
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    if (!missing[static_cast<std::size_t>(idx)]) continue;

    const std::ptrdiff_t z = idx / strides[0];
    const std::ptrdiff_t y = (idx % strides[0]) / strides[1];
    const std::ptrdiff_t x = idx % strides[1];
    const std::ptrdiff_t coord[3] = {z, y, x};

    double acc = 0.0;
    int contributing = 0;
    for (int axis = 0; axis < 3; ++axis) {
      if (extents[axis] == 1) continue;

      detail::AxisSamples s;
      for (std::ptrdiff_t d = 1; coord[axis] - d >= 0 && s.n_neg < 2; ++d) {
        const std::size_t j = static_cast<std::size_t>(idx - d * strides[axis]);
        if (missing[j]) continue; // gaps of invalid samples are skipped
        s.neg_dist[static_cast<std::size_t>(s.n_neg)] = static_cast<double>(d);
        s.neg_val[static_cast<std::size_t>(s.n_neg)] = v[j];
        ++s.n_neg;
      }
      for (std::ptrdiff_t d = 1; coord[axis] + d < extents[axis] && s.n_pos < 2;
           ++d) {
        const std::size_t j = static_cast<std::size_t>(idx + d * strides[axis]);
        if (missing[j]) continue;
        s.pos_dist[static_cast<std::size_t>(s.n_pos)] = static_cast<double>(d);
        s.pos_val[static_cast<std::size_t>(s.n_pos)] = v[j];
        ++s.n_pos;
      }

      if (s.n_neg == 0 && s.n_pos == 0) continue;

      double estimate;
      if (s.n_neg >= 1 && s.n_pos >= 1) {
        if (cfg.order == InterpConfig::Order::cubic && s.n_neg == 2 &&
            s.n_pos == 2) {
          estimate = detail::catmull_rom(
              0.0, -s.neg_dist[1], -s.neg_dist[0], s.pos_dist[0],
              s.pos_dist[1], s.neg_val[1], s.neg_val[0], s.pos_val[0],
              s.pos_val[1]);
        } else {
          // Two-point line through the nearest valid sample on each side,
          // evaluated at the target (inverse-distance weighting).
          const double dn = s.neg_dist[0], dp = s.pos_dist[0];
          estimate = (s.neg_val[0] * dp + s.pos_val[0] * dn) / (dn + dp);
        }
      } else {
        // One-sided: nearest valid value.
        estimate = s.n_neg >= 1 ? s.neg_val[0] : s.pos_val[0];
      }
      acc += estimate;
      ++contributing;
    }

    if (contributing > 0) {
      out[static_cast<std::size_t>(idx)] = acc / contributing;
      continue;
    }

    // No axis had any valid sample (fully-missing rows in every direction):
    // average the first non-empty Chebyshev shell around the voxel.
    for (std::ptrdiff_t radius = 1;; ++radius) {
      double shell_acc = 0.0;
      std::size_t shell_n = 0;
      for (std::ptrdiff_t dz = -radius; dz <= radius; ++dz)
        for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy)
          for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
            if (std::max({dz < 0 ? -dz : dz, dy < 0 ? -dy : dy,
                          dx < 0 ? -dx : dx}) != radius)
              continue;
            const std::ptrdiff_t zz = z + dz, yy = y + dy, xx = x + dx;
            if (zz < 0 || zz >= extents[0] || yy < 0 || yy >= extents[1] ||
                xx < 0 || xx >= extents[2])
              continue;
            const std::size_t j = static_cast<std::size_t>(
                zz * strides[0] + yy * strides[1] + xx);
            if (missing[j]) continue;
            shell_acc += v[j];
            ++shell_n;
          }
      if (shell_n > 0) {
        out[static_cast<std::size_t>(idx)] = shell_acc / shell_n;
        break;
      }
    }
  }
  return out;
}

} // namespace mrsir
