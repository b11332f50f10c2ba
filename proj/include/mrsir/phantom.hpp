#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/rng.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

// Procedural stand-in for segmented anatomy: an ellipsoidal brain split into
// a white-matter core and a gray-matter shell, two mirrored ventricles as
// CSF cavities, and optional tumor blobs. Masks are boolean fields over the
// high-resolution grid.
struct TissueMasks {
  Dims dims;
  std::vector<std::uint8_t> gm, wm, csf, tm;
};

struct PhantomSpec {
  double w_gm = 0.1;
  double w_wm = 0.12;
  double w_csf = 0.0;
  // Tumor intensity factor on the 0.2..0.8 grid; 0 means "sample per seed".
  double tau = 0.0;
  Dims hr_dims{128, 128, 128};
  Dims out_dims{64, 64, 64};
  std::uint64_t seed = 0;

  // Geometry controls, as fractions of the half-extents.
  double brain_frac = 0.80;      // brain semi-axis / half-extent
  double wm_core_frac = 0.86;    // WM core scale; the GM shell is the rest
  double ventricle_frac = 0.15;  // ventricle semi-axis / brain semi-axis
  int tumor_min = 0;
  int tumor_max = 3;
  double tumor_radius_lo = 0.10; // blob radius / smallest brain semi-axis
  double tumor_radius_hi = 0.20;
  // Segmentation-like irregularity. Real tissue masks are not smooth
  // surfaces; interfaces wobble, gray and white matter interdigitate, and
  // sulcal CSF fissures cut through the cortical shell. This is what gives
  // the downsampled maps their partial-volume texture; without it the
  // restoration problem degenerates to filling holes in flat plateaus.
  double surface_roughness = 0.10; // boundary perturbation amplitude
  double label_speckle = 0.25;     // GM<->WM interdigitation fraction
  double sulci_width = 0.18;       // level-set half-width of CSF fissures

  void validate() const {
    if (hr_dims.depth < 16 || hr_dims.height < 16 || hr_dims.width < 16)
      throw InvalidSpec("phantom: hr dims must be >= 16 per axis");
    if (out_dims.total() == 0 || out_dims.depth > hr_dims.depth ||
        out_dims.height > hr_dims.height || out_dims.width > hr_dims.width)
      throw InvalidSpec("phantom: out dims must be in [1, hr dims]");
    if (tumor_min < 0 || tumor_min > tumor_max)
      throw InvalidSpec("phantom: need 0 <= tumor_min <= tumor_max");
    if (tau != 0.0) {
      const double steps = (tau - 0.2) / 0.1;
      if (tau < 0.2 - 1e-9 || tau > 0.8 + 1e-9 ||
          std::abs(steps - std::round(steps)) > 1e-9)
        throw InvalidSpec("phantom: tau must lie on the 0.2..0.8 grid");
    }
  }
};

namespace detail {

constexpr std::uint64_t kMaskStream = 0x6d61736b;  // geometry draws
constexpr std::uint64_t kTauStream = 0x746175;     // tumor factor draw
constexpr std::uint64_t kNoiseStream = 0x6e6f6973; // lattice noise fields

// Seeded value noise: random lattice values in [-1, 1] sampled with
// trilinear interpolation. Smooth at the lattice scale, cheap to evaluate.
class ValueNoise {
public:
  ValueNoise() = default;
  ValueNoise(Dims dims, double cell, std::uint64_t seed) : cell_(cell) {
    nz_ = static_cast<std::size_t>(static_cast<double>(dims.depth) / cell) + 3;
    ny_ = static_cast<std::size_t>(static_cast<double>(dims.height) / cell) + 3;
    nx_ = static_cast<std::size_t>(static_cast<double>(dims.width) / cell) + 3;
    values_.resize(nz_ * ny_ * nx_);
    Rng rng(seed);
    for (auto& v : values_) v = rng.uniform(-1.0, 1.0);
  }

  double at(double z, double y, double x) const {
    const double fz = z / cell_, fy = y / cell_, fx = x / cell_;
    const auto z0 = static_cast<std::size_t>(fz);
    const auto y0 = static_cast<std::size_t>(fy);
    const auto x0 = static_cast<std::size_t>(fx);
    const double dz = fz - static_cast<double>(z0);
    const double dy = fy - static_cast<double>(y0);
    const double dx = fx - static_cast<double>(x0);
    auto v = [&](std::size_t a, std::size_t b, std::size_t c) {
      return values_[(a * ny_ + b) * nx_ + c];
    };
    const double c00 = v(z0, y0, x0) * (1 - dx) + v(z0, y0, x0 + 1) * dx;
    const double c01 = v(z0, y0 + 1, x0) * (1 - dx) + v(z0, y0 + 1, x0 + 1) * dx;
    const double c10 = v(z0 + 1, y0, x0) * (1 - dx) + v(z0 + 1, y0, x0 + 1) * dx;
    const double c11 =
        v(z0 + 1, y0 + 1, x0) * (1 - dx) + v(z0 + 1, y0 + 1, x0 + 1) * dx;
    const double c0 = c00 * (1 - dy) + c01 * dy;
    const double c1 = c10 * (1 - dy) + c11 * dy;
    return c0 * (1 - dz) + c1 * dz;
  }

private:
  double cell_ = 1.0;
  std::size_t nz_ = 0, ny_ = 0, nx_ = 0;
  std::vector<double> values_;
};

struct Ellipsoid {
  double cz, cy, cx;
  double az, ay, ax; // semi-axes, voxel units

  // Normalized squared radius: < 1 inside the ideal surface.
  double q(double z, double y, double x) const {
    const double dz = (z - cz) / az;
    const double dy = (y - cy) / ay;
    const double dx = (x - cx) / ax;
    return dz * dz + dy * dy + dx * dx;
  }

  bool contains(double z, double y, double x) const {
    return q(z, y, x) <= 1.0;
  }
};

struct Sphere {
  double cz, cy, cx, r;
  double q(double z, double y, double x) const {
    const double dz = z - cz, dy = y - cy, dx = x - cx;
    return (dz * dz + dy * dy + dx * dx) / (r * r);
  }
  bool contains(double z, double y, double x) const {
    return q(z, y, x) <= 1.0;
  }
};

} // namespace detail

// Deterministic per (spec, seed). gm/wm/csf are pairwise disjoint; tm may
// overlap gm/wm but never csf.
inline TissueMasks generate_tissue_masks(const PhantomSpec& spec) {
  spec.validate();
  const Dims d = spec.hr_dims;
  Rng rng(derive_seed(spec.seed, detail::kMaskStream));

  const double cz = 0.5 * static_cast<double>(d.depth - 1);
  const double cy = 0.5 * static_cast<double>(d.height - 1);
  const double cx = 0.5 * static_cast<double>(d.width - 1);

  const auto jitter = [&] { return 0.9 + 0.1 * rng.unit(); };
  detail::Ellipsoid brain{
      cz, cy, cx,
      spec.brain_frac * 0.5 * static_cast<double>(d.depth) * jitter(),
      spec.brain_frac * 0.5 * static_cast<double>(d.height) * jitter() * 1.1,
      spec.brain_frac * 0.5 * static_cast<double>(d.width) * jitter()};
  const double core_scale = spec.wm_core_frac * (0.98 + 0.04 * rng.unit());
  detail::Ellipsoid core{cz, cy, cx, brain.az * core_scale,
                         brain.ay * core_scale, brain.ax * core_scale};

  // Two ventricles mirrored about the mid-sagittal plane, elongated
  // front-to-back, well inside the WM core.
  const double vent_dx = 0.28 * brain.ax;
  const double vent_scale = spec.ventricle_frac * (0.9 + 0.2 * rng.unit());
  detail::Ellipsoid vent_l{cz, cy, cx - vent_dx, brain.az * vent_scale,
                           brain.ay * vent_scale * 2.2,
                           brain.ax * vent_scale};
  detail::Ellipsoid vent_r = vent_l;
  vent_r.cx = cx + vent_dx;

  // Tumor blobs: unions of 1-3 spheres seeded inside the brain.
  const int n_blobs =
      static_cast<int>(rng.uniform_int(spec.tumor_min, spec.tumor_max));
  std::vector<detail::Sphere> tumor_spheres;
  const double min_semi = std::min({brain.az, brain.ay, brain.ax});
  // Radius floor: a blob must fully cover at least one pooled block so the
  // normalized maximum survives downsampling exactly.
  const double pool_factor = std::max(
      {static_cast<double>(d.depth) / static_cast<double>(spec.out_dims.depth),
       static_cast<double>(d.height) /
           static_cast<double>(spec.out_dims.height),
       static_cast<double>(d.width) /
           static_cast<double>(spec.out_dims.width)});
  const double radius_floor = 2.2 * pool_factor;
  for (int b = 0; b < n_blobs; ++b) {
    // Uniform direction in the unit ball via rejection, then scaled to keep
    // the blob comfortably interior.
    double uz, uy, ux;
    do {
      uz = rng.uniform(-1.0, 1.0);
      uy = rng.uniform(-1.0, 1.0);
      ux = rng.uniform(-1.0, 1.0);
    } while (uz * uz + uy * uy + ux * ux > 1.0);
    const double bz = cz + 0.55 * brain.az * uz;
    const double by = cy + 0.55 * brain.ay * uy;
    const double bx = cx + 0.55 * brain.ax * ux;
    const double r0 = std::max(
        (spec.tumor_radius_lo +
         (spec.tumor_radius_hi - spec.tumor_radius_lo) * rng.unit()) *
            min_semi,
        radius_floor);
    tumor_spheres.push_back({bz, by, bx, r0});
    const int extra = static_cast<int>(rng.uniform_int(0, 2));
    for (int e = 0; e < extra; ++e) {
      const double oz = bz + rng.uniform(-0.6, 0.6) * r0;
      const double oy = by + rng.uniform(-0.6, 0.6) * r0;
      const double ox = bx + rng.uniform(-0.6, 0.6) * r0;
      tumor_spheres.push_back({oz, oy, ox, r0 * rng.uniform(0.6, 0.9)});
    }
  }

  // Interface irregularity and label speckle, per-structure noise phases.
  const double rough = spec.surface_roughness;
  const std::uint64_t nseed = derive_seed(spec.seed, detail::kNoiseStream);
  const detail::ValueNoise outer_c(d, 7.0, derive_seed(nseed, 1));
  const detail::ValueNoise outer_f(d, 2.0, derive_seed(nseed, 2));
  const detail::ValueNoise core_c(d, 5.0, derive_seed(nseed, 3));
  const detail::ValueNoise core_f(d, 1.7, derive_seed(nseed, 4));
  const detail::ValueNoise vent_n(d, 3.0, derive_seed(nseed, 5));
  const detail::ValueNoise tumor_n(d, 4.0, derive_seed(nseed, 6));
  const detail::ValueNoise speckle(d, 3.5, derive_seed(nseed, 7));
  const detail::ValueNoise sulci_a(d, 5.0, derive_seed(nseed, 8));
  const detail::ValueNoise sulci_b(d, 11.0, derive_seed(nseed, 9));

  TissueMasks m;
  m.dims = d;
  m.gm.assign(d.total(), 0);
  m.wm.assign(d.total(), 0);
  m.csf.assign(d.total(), 0);
  m.tm.assign(d.total(), 0);

  // Threshold for the GM<->WM interdigitation: treating the noise field as
  // roughly uniform over [-1, 1], a fraction f flips above 1 - 2f.
  const double speckle_cut =
      1.0 - 2.0 * std::clamp(spec.label_speckle, 0.0, 0.5);

  std::size_t i = 0;
  for (std::size_t z = 0; z < d.depth; ++z)
    for (std::size_t y = 0; y < d.height; ++y)
      for (std::size_t x = 0; x < d.width; ++x, ++i) {
        const double zf = static_cast<double>(z);
        const double yf = static_cast<double>(y);
        const double xf = static_cast<double>(x);
        if (brain.q(zf, yf, xf) >
            1.0 + rough * outer_c.at(zf, yf, xf) +
                0.4 * rough * outer_f.at(zf, yf, xf))
          continue;

        bool in_tumor = false;
        for (const auto& s : tumor_spheres)
          if (s.q(zf, yf, xf) <= 1.0 + 1.5 * rough * tumor_n.at(zf, yf, xf)) {
            in_tumor = true;
            break;
          }
        const bool in_vent =
            !in_tumor &&
            (vent_l.q(zf, yf, xf) <= 1.0 + rough * vent_n.at(zf, yf, xf) ||
             vent_r.q(zf, yf, xf) <= 1.0 + rough * vent_n.at(zf, yf, xf));

        if (in_vent) {
          m.csf[i] = 1;
        } else {
          bool is_wm = core.q(zf, yf, xf) <=
                       1.0 + rough * core_c.at(zf, yf, xf) +
                           0.6 * rough * core_f.at(zf, yf, xf);
          const double sp = speckle.at(zf, yf, xf);
          if (sp > speckle_cut)
            is_wm = !is_wm;
          // Sulcal fissures: zero-crossing sheets of a smooth field carve
          // CSF through the cortical shell (never through tumor tissue).
          if (!in_tumor && !is_wm) {
            const double s =
                sulci_a.at(zf, yf, xf) + 0.5 * sulci_b.at(zf, yf, xf);
            if (std::abs(s) < spec.sulci_width) {
              m.csf[i] = 1;
              continue;
            }
          }
          if (is_wm)
            m.wm[i] = 1;
          else
            m.gm[i] = 1;
          if (in_tumor) m.tm[i] = 1;
        }
      }
  return m;
}

// Tumor factor actually used for a spec: the explicit value, or a grid draw
// derived from the seed.
inline double effective_tau(const PhantomSpec& spec) {
  if (spec.tau != 0.0) return spec.tau;
  Rng rng(derive_seed(spec.seed, detail::kTauStream));
  return 0.2 + 0.1 * static_cast<double>(rng.uniform_int(0, 6));
}

// Pre-normalization weighted sum over the masks. Tumor voxels take the
// tumor factor outright; summing it on top of tissue would push intensities
// off the intended scale.
inline Volume synthesize_raw(const TissueMasks& masks,
                             const PhantomSpec& spec) {
  const double tau = effective_tau(spec);
  Volume v(masks.dims);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (masks.tm[i])
      v[i] = tau;
    else if (masks.gm[i])
      v[i] = spec.w_gm;
    else if (masks.wm[i])
      v[i] = spec.w_wm;
    else if (masks.csf[i])
      v[i] = spec.w_csf;
  }
  return v;
}

// Weighted sum -> normalize to [0, 1] -> downsample to out_dims.
inline Volume synthesize(const TissueMasks& masks, const PhantomSpec& spec) {
  if (masks.dims != spec.hr_dims)
    throw InvalidSpec("synthesize: mask dims differ from spec hr dims");
  return downsample(normalize(synthesize_raw(masks, spec)), spec.out_dims);
}

struct PhantomVolume {
  Volume volume; // out_dims, normalized
  TissueMasks masks;
  double tau = 0.0;
};

inline PhantomVolume generate_phantom(const PhantomSpec& spec) {
  PhantomVolume p;
  p.masks = generate_tissue_masks(spec);
  p.tau = effective_tau(spec);
  p.volume = synthesize(p.masks, spec);
  return p;
}

struct PhantomDataset {
  struct Item {
    Volume volume;
    std::uint64_t seed = 0;
    double tau = 0.0;
  };
  std::vector<Item> train, test;
};

namespace detail {
constexpr std::uint64_t kItemStream = 0x6974656d;
constexpr std::uint64_t kSplitStream = 0x73706c69;
} // namespace detail

// n phantoms with independent per-item seeds and tumor factors, split
// 80/20 by a seeded shuffle (60/15 at n = 75).
inline PhantomDataset build_dataset(std::size_t n, const PhantomSpec& tmpl,
                                    std::uint64_t seed) {
  if (n < 2) throw InvalidSpec("build_dataset: need n >= 2");
  tmpl.validate();

  std::vector<PhantomDataset::Item> items(n);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    PhantomSpec spec = tmpl;
    spec.seed =
        derive_seed(seed, static_cast<std::uint64_t>(i), detail::kItemStream);
    const PhantomVolume p = generate_phantom(spec);
    auto& item = items[static_cast<std::size_t>(i)];
    item.volume = p.volume;
    item.seed = spec.seed;
    item.tau = p.tau;
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, detail::kSplitStream));
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(order[i], order[j]);
  }

  const std::size_t n_train =
      static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(n)));
  PhantomDataset ds;
  for (std::size_t k = 0; k < n; ++k) {
    auto& dst = k < n_train ? ds.train : ds.test;
    dst.push_back(std::move(items[order[k]]));
  }
  return ds;
}

} // namespace mrsir
