#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/rng.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

// Structured missing-voxel simulation: clusters of side s in [s_min, s_max]
// are dropped at random positions inside the brain's bounding sphere until
// exactly floor(eta * n_brain) brain voxels have been zeroed.
struct CorruptionSpec {
  double eta = 0.1;        // missing fraction of brain voxels, in (0, 1)
  int s_min = 1;           // cluster edge lengths
  int s_max = 3;
  std::uint64_t seed = 0;
  std::uint64_t max_iterations = 1'000'000; // accept-loop guard

  void validate() const {
    if (!(eta > 0.0 && eta < 1.0))
      throw InvalidSpec("corruption: eta must be in (0, 1)");
    if (s_min < 1 || s_min > s_max)
      throw InvalidSpec("corruption: need 1 <= s_min <= s_max");
  }
};

struct CorruptionOutcome {
  Volume corrupted;
  std::vector<std::uint8_t> missing; // true where a voxel was zeroed
  std::size_t n_brain = 0;
  std::size_t n_noise = 0;

  std::size_t missing_count() const {
    std::size_t n = 0;
    for (auto b : missing) n += b != 0;
    return n;
  }
};

namespace detail {

inline CorruptionOutcome corrupt_impl(const Volume& v,
                                      const CorruptionSpec& spec, bool planar) {
  spec.validate();
  const BrainMask mask = brain_mask(v);
  const std::size_t n_brain = mask.count();
  if (n_brain == 0) throw EmptyBrainMask("corrupt: volume has no brain voxels");

  const std::size_t n_noise =
      static_cast<std::size_t>(std::floor(spec.eta * static_cast<double>(n_brain)));
  if (n_noise == 0)
    throw BudgetTooSmall("corrupt: floor(eta * n_brain) is zero");

  const BoundingGeometry geom = bounding_geometry(mask);
  double radius = geom.radius;
  if (planar) {
    // Disk geometry in the slice plane; the z extent plays no role.
    const double rx = 0.5 * static_cast<double>(geom.x.hi - geom.x.lo);
    const double ry = 0.5 * static_cast<double>(geom.y.hi - geom.y.lo);
    radius = std::min(rx, ry);
  }

  const Dims dims = v.dims();
  const auto D = static_cast<std::int64_t>(dims.depth);
  const auto H = static_cast<std::int64_t>(dims.height);
  const auto W = static_cast<std::int64_t>(dims.width);

  CorruptionOutcome out;
  out.corrupted = v;
  out.missing.assign(v.size(), 0);
  out.n_brain = n_brain;
  out.n_noise = n_noise;

  Rng rng(spec.seed);
  std::size_t removed = 0;
  std::uint64_t iterations = 0;
  constexpr double two_pi = 2.0 * 3.141592653589793238462643383279502884;

  while (removed < n_noise) {
    if (++iterations > spec.max_iterations)
      throw NonConvergence("corrupt: accept loop exceeded iteration cap");

    const int s = static_cast<int>(rng.uniform_int(spec.s_min, spec.s_max));
    const double theta = rng.uniform(0.0, two_pi);
    double cx, cy, cz;
    if (planar) {
      const double r = rng.uniform(0.0, radius);
      cx = geom.cx + r * std::cos(theta);
      cy = geom.cy + r * std::sin(theta);
      cz = 0.0;
    } else {
      const double phi = rng.uniform(0.0, 3.141592653589793238462643383279502884);
      const double r = rng.uniform(0.0, radius);
      cx = geom.cx + r * std::sin(phi) * std::cos(theta);
      cy = geom.cy + r * std::sin(phi) * std::sin(theta);
      cz = geom.cz + r * std::cos(phi);
    }

    const std::int64_t xi = std::llround(cx);
    const std::int64_t yi = std::llround(cy);
    const std::int64_t zi = planar ? 0 : std::llround(cz);
    if (xi < 0 || xi >= W || yi < 0 || yi >= H || zi < 0 || zi >= D) continue;
    const std::size_t center =
        (static_cast<std::size_t>(zi) * dims.height +
         static_cast<std::size_t>(yi)) *
            dims.width +
        static_cast<std::size_t>(xi);
    if (!mask.bits[center]) continue; // cluster centers must land in brain

    // Zero the s^3 (or s^2) cube centered on the voxel. Writes outside the
    // brain or the grid are skipped, and only newly-zeroed brain voxels
    // count toward the budget; the final cluster is truncated mid-write so
    // the realized fraction is exact.
    const int off = s / 2;
    const int s_z = planar ? 1 : s;
    for (int dz = 0; dz < s_z && removed < n_noise; ++dz)
      for (int dy = 0; dy < s && removed < n_noise; ++dy)
        for (int dx = 0; dx < s && removed < n_noise; ++dx) {
          const std::int64_t z = planar ? 0 : zi + dz - off;
          const std::int64_t y = yi + dy - off;
          const std::int64_t x = xi + dx - off;
          if (x < 0 || x >= W || y < 0 || y >= H || z < 0 || z >= D) continue;
          const std::size_t idx =
              (static_cast<std::size_t>(z) * dims.height +
               static_cast<std::size_t>(y)) *
                  dims.width +
              static_cast<std::size_t>(x);
          if (!mask.bits[idx] || out.missing[idx]) continue;
          out.missing[idx] = 1;
          out.corrupted[idx] = 0.0;
          ++removed;
        }
  }
  return out;
}

} // namespace detail

// 3D corruption. Depth-1 volumes are delegated to the planar sampler, whose
// disk geometry is the meaningful one for a single slice.
inline CorruptionOutcome corrupt(const Volume& v, const CorruptionSpec& spec) {
  return detail::corrupt_impl(v, spec, v.is_2d());
}

// 2D corruption of an axial slice: disk sampling, s x s square clusters.
inline CorruptionOutcome corrupt_slice(const Volume& slice,
                                       const CorruptionSpec& spec) {
  if (!slice.is_2d())
    throw InvalidDims("corrupt_slice: expected a depth-1 volume");
  return detail::corrupt_impl(slice, spec, true);
}

// Independent deterministic corruption of a batch, one derived spec per item.
inline std::vector<CorruptionOutcome> corruption_batch(
    const std::vector<Volume>& volumes, const CorruptionSpec& spec,
    const std::vector<std::uint64_t>& per_item_seeds) {
  if (per_item_seeds.size() != volumes.size())
    throw InvalidSpec("corruption_batch: one seed per volume required");
  for (std::size_t i = 0; i < per_item_seeds.size(); ++i)
    for (std::size_t j = i + 1; j < per_item_seeds.size(); ++j)
      if (per_item_seeds[i] == per_item_seeds[j])
        throw InvalidSpec("corruption_batch: seeds must be unique");

  std::vector<CorruptionOutcome> out(volumes.size());
  std::exception_ptr failure;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(volumes.size());
       ++i) {
    try {
      CorruptionSpec item = spec;
      item.seed = per_item_seeds[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] =
          corrupt(volumes[static_cast<std::size_t>(i)], item);
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

} // namespace mrsir
