#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mrsir/errors.hpp"

namespace mrsir {

// Grid dimensions in (depth, height, width) order. The whole toolkit uses
// one axis convention: data is row-major over (z, y, x) with x fastest.
// 2D images are volumes with depth == 1.
struct Dims {
  std::size_t depth = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t total() const { return depth * height * width; }
  bool operator==(const Dims&) const = default;
};

// Dense scalar grid with intensities expected in [0, 1]. The universal
// carrier for phantoms, corrupted inputs, predictions and ground truth.
class Volume {
public:
  Volume() = default;
  explicit Volume(Dims dims, double fill = 0.0)
      : dims_(dims), data_(dims.total(), fill) {
    if (dims.total() == 0) throw InvalidDims("Volume dims must be positive");
  }
  Volume(Dims dims, std::vector<double> data)
      : dims_(dims), data_(std::move(data)) {
    if (dims_.total() == 0 || data_.size() != dims_.total())
      throw InvalidDims("Volume data length must equal product of dims");
  }

  const Dims& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool is_2d() const { return dims_.depth == 1; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * dims_.height + y) * dims_.width + x;
  }
  double& at(std::size_t z, std::size_t y, std::size_t x) {
    return data_[index(z, y, x)];
  }
  double at(std::size_t z, std::size_t y, std::size_t x) const {
    return data_[index(z, y, x)];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double max_value() const {
    return *std::max_element(data_.begin(), data_.end());
  }
  double min_value() const {
    return *std::min_element(data_.begin(), data_.end());
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Volume&) const = default;

private:
  Dims dims_;
  std::vector<double> data_;
};

// Boolean field marking voxels that belong to the brain (strictly positive
// source intensity). Ventricles and other true-zero anatomy are NOT brain
// under this definition, which is what keeps them out of the corruption
// budget downstream.
struct BrainMask {
  Dims dims;
  std::vector<std::uint8_t> bits;

  bool test(std::size_t i) const { return bits[i] != 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
};

struct AxisRange {
  std::size_t lo = 0;
  std::size_t hi = 0; // inclusive
};

// Tight bounding box of a mask plus the sphere used by the corruption
// sampler: center at the arithmetic midpoint of the box extents, radius the
// smallest half-extent.
struct BoundingGeometry {
  AxisRange z, y, x;
  double cx = 0, cy = 0, cz = 0;
  double radius = 0;
};

inline BrainMask brain_mask(const Volume& v) {
  BrainMask m;
  m.dims = v.dims();
  m.bits.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) m.bits[i] = v[i] > 0.0 ? 1 : 0;
  return m;
}

inline BoundingGeometry bounding_geometry(const BrainMask& m) {
  const std::size_t d = m.dims.depth, h = m.dims.height, w = m.dims.width;
  std::size_t zlo = d, zhi = 0, ylo = h, yhi = 0, xlo = w, xhi = 0;
  bool any = false;
  std::size_t i = 0;
  for (std::size_t z = 0; z < d; ++z)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x, ++i) {
        if (!m.bits[i]) continue;
        any = true;
        zlo = std::min(zlo, z); zhi = std::max(zhi, z);
        ylo = std::min(ylo, y); yhi = std::max(yhi, y);
        xlo = std::min(xlo, x); xhi = std::max(xhi, x);
      }
  if (!any) throw EmptyBrainMask("bounding_geometry: mask has no true bits");

  BoundingGeometry g;
  g.z = {zlo, zhi};
  g.y = {ylo, yhi};
  g.x = {xlo, xhi};
  g.cx = 0.5 * (static_cast<double>(xlo) + static_cast<double>(xhi));
  g.cy = 0.5 * (static_cast<double>(ylo) + static_cast<double>(yhi));
  g.cz = 0.5 * (static_cast<double>(zlo) + static_cast<double>(zhi));
  const double rx = 0.5 * static_cast<double>(xhi - xlo);
  const double ry = 0.5 * static_cast<double>(yhi - ylo);
  const double rz = 0.5 * static_cast<double>(zhi - zlo);
  g.radius = std::min({rx, ry, rz});
  return g;
}

// Scales the volume so its maximum is exactly 1. Zeros are preserved and a
// volume whose max is already 1 comes back bitwise unchanged.
inline Volume normalize(const Volume& v) {
  const double mx = v.max_value();
  if (!(mx > 0.0))
    throw DegenerateRange("normalize: max(v) must be positive");
  Volume out = v;
  for (auto& x : out.values()) x /= mx;
  return out;
}

namespace detail {

inline double clamped_sample(const Volume& v, std::ptrdiff_t z,
                             std::ptrdiff_t y, std::ptrdiff_t x) {
  const auto cl = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  return v.at(cl(z, v.dims().depth), cl(y, v.dims().height),
              cl(x, v.dims().width));
}

inline double trilinear_at(const Volume& v, double z, double y, double x) {
  const double zf = std::floor(z), yf = std::floor(y), xf = std::floor(x);
  const double dz = z - zf, dy = y - yf, dx = x - xf;
  const auto z0 = static_cast<std::ptrdiff_t>(zf);
  const auto y0 = static_cast<std::ptrdiff_t>(yf);
  const auto x0 = static_cast<std::ptrdiff_t>(xf);
  double acc = 0.0;
  for (int kz = 0; kz < 2; ++kz)
    for (int ky = 0; ky < 2; ++ky)
      for (int kx = 0; kx < 2; ++kx) {
        const double wz = kz ? dz : 1.0 - dz;
        const double wy = ky ? dy : 1.0 - dy;
        const double wx = kx ? dx : 1.0 - dx;
        const double wgt = wz * wy * wx;
        if (wgt == 0.0) continue;
        acc += wgt * clamped_sample(v, z0 + kz, y0 + ky, x0 + kx);
      }
  return acc;
}

} // namespace detail

// Reduces a volume to target_dims. Mean-pooling over equal integer blocks
// when every axis divides evenly, trilinear resampling at output voxel
// centers otherwise. target == source is the identity.
inline Volume downsample(const Volume& v, Dims target) {
  const Dims s = v.dims();
  if (target.total() == 0 || target.depth > s.depth ||
      target.height > s.height || target.width > s.width)
    throw InvalidDims("downsample: target dims must be in [1, source]");
  if (target == s) return v;

  const bool divisible = s.depth % target.depth == 0 &&
                         s.height % target.height == 0 &&
                         s.width % target.width == 0;
  Volume out(target);
  if (divisible) {
    const std::size_t fz = s.depth / target.depth;
    const std::size_t fy = s.height / target.height;
    const std::size_t fx = s.width / target.width;
    const double inv = 1.0 / static_cast<double>(fz * fy * fx);
    for (std::size_t z = 0; z < target.depth; ++z)
      for (std::size_t y = 0; y < target.height; ++y)
        for (std::size_t x = 0; x < target.width; ++x) {
          double acc = 0.0;
          for (std::size_t bz = 0; bz < fz; ++bz)
            for (std::size_t by = 0; by < fy; ++by)
              for (std::size_t bx = 0; bx < fx; ++bx)
                acc += v.at(z * fz + bz, y * fy + by, x * fx + bx);
          out.at(z, y, x) = acc * inv;
        }
  } else {
    const double sz = static_cast<double>(s.depth) / target.depth;
    const double sy = static_cast<double>(s.height) / target.height;
    const double sx = static_cast<double>(s.width) / target.width;
    for (std::size_t z = 0; z < target.depth; ++z)
      for (std::size_t y = 0; y < target.height; ++y)
        for (std::size_t x = 0; x < target.width; ++x)
          out.at(z, y, x) = detail::trilinear_at(
              v, (static_cast<double>(z) + 0.5) * sz - 0.5,
              (static_cast<double>(y) + 0.5) * sy - 0.5,
              (static_cast<double>(x) + 0.5) * sx - 0.5);
  }
  return out;
}

// Axial (constant-z) slices whose brain-voxel fraction strictly exceeds
// min_brain_fraction, in ascending z order.
inline std::vector<Volume> extract_slices(const Volume& v,
                                          double min_brain_fraction) {
  if (v.is_2d()) throw InvalidDims("extract_slices: expected a 3D volume");
  if (!(min_brain_fraction >= 0.0 && min_brain_fraction < 1.0))
    throw InvalidSpec("extract_slices: min_brain_fraction must be in [0,1)");

  const Dims s = v.dims();
  const std::size_t plane = s.height * s.width;
  std::vector<Volume> slices;
  for (std::size_t z = 0; z < s.depth; ++z) {
    std::size_t brain = 0;
    const double* p = v.data() + z * plane;
    for (std::size_t i = 0; i < plane; ++i) brain += p[i] > 0.0;
    const double fraction =
        static_cast<double>(brain) / static_cast<double>(plane);
    if (fraction > min_brain_fraction) {
      Volume sl(Dims{1, s.height, s.width});
      std::copy(p, p + plane, sl.data());
      slices.push_back(std::move(sl));
    }
  }
  return slices;
}

} // namespace mrsir
