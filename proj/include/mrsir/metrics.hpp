#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

// Windowed-SSIM parameters. window_size 0 selects the dimensionality
// default: 11 for 2D images, 7 for 3D volumes.
struct SsimParams {
  int window_size = 0;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;

  int effective_window(const Dims& dims) const {
    if (window_size != 0) return window_size;
    return dims.depth == 1 ? 11 : 7;
  }
};

struct LossParams {
  double alpha = 0.5; // weight of the MSE term
};

inline double mse(const Volume& a, const Volume& b) {
  if (a.dims() != b.dims()) throw DimMismatch("mse: dims differ");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

namespace detail {

// Mirror (edge-repeating) index fold: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
inline std::ptrdiff_t fold_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

inline std::vector<double> gaussian_taps(int window, double sigma) {
  if (window < 3 || window % 2 == 0)
    throw InvalidSpec("ssim: window_size must be odd and >= 3");
  if (!(sigma > 0.0)) throw InvalidSpec("ssim: sigma must be positive");
  std::vector<double> w(static_cast<std::size_t>(window));
  const int c = window / 2;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - c;
    w[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d / (sigma * sigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto& x : w) x /= sum;
  return w;
}

// 1D weighted gather along one axis with mirror folding, applied to every
// line of the field. axis: 0 = z, 1 = y, 2 = x.
inline void conv_axis(const std::vector<double>& in, std::vector<double>& out,
                      const Dims& dims, int axis,
                      const std::vector<double>& taps) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(
      axis == 0 ? dims.depth : axis == 1 ? dims.height : dims.width);
  const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(taps.size());
  const std::ptrdiff_t c = k / 2;
  const std::ptrdiff_t strides[3] = {
      static_cast<std::ptrdiff_t>(dims.height * dims.width),
      static_cast<std::ptrdiff_t>(dims.width), 1};
  const std::ptrdiff_t stride = strides[axis];
  // Enumerate lines by the two other axes.
  const std::size_t d0 = axis == 0 ? dims.height : dims.depth;
  const std::size_t d1 = axis == 2 ? dims.height : dims.width;
  const std::ptrdiff_t s0 = axis == 0 ? strides[1] : strides[0];
  const std::ptrdiff_t s1 = axis == 2 ? strides[1] : strides[2];

  const std::ptrdiff_t lines = static_cast<std::ptrdiff_t>(d0 * d1);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t l = 0; l < lines; ++l) {
    const std::ptrdiff_t base = (l / static_cast<std::ptrdiff_t>(d1)) * s0 +
                                (l % static_cast<std::ptrdiff_t>(d1)) * s1;
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::ptrdiff_t t = 0; t < k; ++t)
        acc += taps[static_cast<std::size_t>(t)] *
               in[static_cast<std::size_t>(base +
                                           fold_index(i + t - c, n) * stride)];
      out[static_cast<std::size_t>(base + i * stride)] = acc;
    }
  }
}

// Adjoint of conv_axis: scatter with the same taps and folding.
inline void conv_axis_adjoint(const std::vector<double>& in,
                              std::vector<double>& out, const Dims& dims,
                              int axis, const std::vector<double>& taps) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(
      axis == 0 ? dims.depth : axis == 1 ? dims.height : dims.width);
  const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(taps.size());
  const std::ptrdiff_t c = k / 2;
  const std::ptrdiff_t strides[3] = {
      static_cast<std::ptrdiff_t>(dims.height * dims.width),
      static_cast<std::ptrdiff_t>(dims.width), 1};
  const std::ptrdiff_t stride = strides[axis];
  const std::size_t d0 = axis == 0 ? dims.height : dims.depth;
  const std::size_t d1 = axis == 2 ? dims.height : dims.width;
  const std::ptrdiff_t s0 = axis == 0 ? strides[1] : strides[0];
  const std::ptrdiff_t s1 = axis == 2 ? strides[1] : strides[2];

  const std::ptrdiff_t lines = static_cast<std::ptrdiff_t>(d0 * d1);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::ptrdiff_t l = 0; l < lines; ++l) {
    const std::ptrdiff_t base = (l / static_cast<std::ptrdiff_t>(d1)) * s0 +
                                (l % static_cast<std::ptrdiff_t>(d1)) * s1;
    for (std::ptrdiff_t i = 0; i < n; ++i) out[base + i * stride] = 0.0;
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double v = in[static_cast<std::size_t>(base + i * stride)];
      for (std::ptrdiff_t t = 0; t < k; ++t)
        out[static_cast<std::size_t>(base + fold_index(i + t - c, n) *
                                                stride)] +=
            taps[static_cast<std::size_t>(t)] * v;
    }
  }
}

inline std::vector<double> gaussian_blur(const std::vector<double>& field,
                                         const Dims& dims,
                                         const std::vector<double>& taps) {
  std::vector<double> tmp(field.size()), out(field.size());
  const std::vector<double>* src = &field;
  std::vector<double>* dst = &tmp;
  std::vector<double>* alt = &out;
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n =
        axis == 0 ? dims.depth : axis == 1 ? dims.height : dims.width;
    if (n == 1) continue; // window degenerates to identity on this axis
    conv_axis(*src, *dst, dims, axis, taps);
    src = dst;
    std::swap(dst, alt);
  }
  if (src == &field) return field;
  return *src;
}

inline std::vector<double> gaussian_blur_adjoint(
    const std::vector<double>& field, const Dims& dims,
    const std::vector<double>& taps) {
  std::vector<double> tmp(field.size()), out(field.size());
  const std::vector<double>* src = &field;
  std::vector<double>* dst = &tmp;
  std::vector<double>* alt = &out;
  for (int axis = 2; axis >= 0; --axis) {
    const std::size_t n =
        axis == 0 ? dims.depth : axis == 1 ? dims.height : dims.width;
    if (n == 1) continue;
    conv_axis_adjoint(*src, *dst, dims, axis, taps);
    src = dst;
    std::swap(dst, alt);
  }
  if (src == &field) return field;
  return *src;
}

struct SsimFields {
  std::vector<double> mu_a, mu_b, m_aa, m_bb, m_ab, map;
};

inline SsimFields ssim_fields(const Volume& a, const Volume& b,
                              const SsimParams& p) {
  if (a.dims() != b.dims()) throw DimMismatch("ssim: dims differ");
  const Dims dims = a.dims();
  const auto taps = gaussian_taps(p.effective_window(dims), p.sigma);
  const std::size_t n = a.size();

  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  SsimFields f;
  f.mu_a = gaussian_blur(a.values(), dims, taps);
  f.mu_b = gaussian_blur(b.values(), dims, taps);
  f.m_aa = gaussian_blur(aa, dims, taps);
  f.m_bb = gaussian_blur(bb, dims, taps);
  f.m_ab = gaussian_blur(ab, dims, taps);

  const double c1 = (p.k1 * p.data_range) * (p.k1 * p.data_range);
  const double c2 = (p.k2 * p.data_range) * (p.k2 * p.data_range);
  f.map.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu_a = f.mu_a[i], mu_b = f.mu_b[i];
    const double va = f.m_aa[i] - mu_a * mu_a;
    const double vb = f.m_bb[i] - mu_b * mu_b;
    const double cab = f.m_ab[i] - mu_a * mu_b;
    f.map[i] = ((2.0 * mu_a * mu_b + c1) * (2.0 * cab + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2));
  }
  return f;
}

} // namespace detail

// Mean structural similarity over windows centered at every voxel, with
// Gaussian-weighted moments and mirror boundary handling.
inline double ssim(const Volume& a, const Volume& b,
                   const SsimParams& p = {}) {
  const auto f = detail::ssim_fields(a, b, p);
  double acc = 0.0;
  for (double s : f.map) acc += s;
  return acc / static_cast<double>(f.map.size());
}

// SSIM restricted to windows centered at masked voxels; used for the
// brain-support analysis metrics.
inline double ssim_masked(const Volume& a, const Volume& b,
                          const std::vector<std::uint8_t>& mask,
                          const SsimParams& p = {}) {
  if (mask.size() != a.size()) throw DimMismatch("ssim_masked: mask size");
  const auto f = detail::ssim_fields(a, b, p);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < f.map.size(); ++i)
    if (mask[i]) {
      acc += f.map[i];
      ++n;
    }
  if (n == 0) throw EmptyBrainMask("ssim_masked: empty mask");
  return acc / static_cast<double>(n);
}

inline double mse_masked(const Volume& a, const Volume& b,
                         const std::vector<std::uint8_t>& mask) {
  if (a.dims() != b.dims()) throw DimMismatch("mse_masked: dims differ");
  if (mask.size() != a.size()) throw DimMismatch("mse_masked: mask size");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (mask[i]) {
      const double d = a[i] - b[i];
      acc += d * d;
      ++n;
    }
  if (n == 0) throw EmptyBrainMask("mse_masked: empty mask");
  return acc / static_cast<double>(n);
}

struct LossResult {
  double value = 0.0;
  double mse_term = 0.0;
  double ssim_term = 0.0;
  Volume grad; // d value / d pred
};

// Composite training objective alpha * MSE + (1 - alpha) * (1 - SSIM)
// together with its analytic gradient with respect to the prediction.
inline LossResult composite_loss(const Volume& pred, const Volume& target,
                                 const LossParams& lp = {},
                                 const SsimParams& sp = {}) {
  if (pred.dims() != target.dims())
    throw DimMismatch("composite_loss: dims differ");
  const Dims dims = pred.dims();
  const std::size_t n = pred.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto taps = detail::gaussian_taps(sp.effective_window(dims), sp.sigma);

  const auto f = detail::ssim_fields(pred, target, sp);
  double ssim_acc = 0.0;
  for (double s : f.map) ssim_acc += s;
  const double ssim_val = ssim_acc * inv_n;

  double mse_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred[i] - target[i];
    mse_acc += d * d;
  }
  const double mse_val = mse_acc * inv_n;

  // dS/d(moment fields), then pulled back through the blur adjoint.
  const double c1 = (sp.k1 * sp.data_range) * (sp.k1 * sp.data_range);
  const double c2 = (sp.k2 * sp.data_range) * (sp.k2 * sp.data_range);
  std::vector<double> d_mu(n), d_maa(n), d_mab(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu_a = f.mu_a[i], mu_b = f.mu_b[i];
    const double va = f.m_aa[i] - mu_a * mu_a;
    const double vb = f.m_bb[i] - mu_b * mu_b;
    const double cab = f.m_ab[i] - mu_a * mu_b;
    const double a1 = 2.0 * mu_a * mu_b + c1;
    const double a2 = 2.0 * cab + c2;
    const double b1 = mu_a * mu_a + mu_b * mu_b + c1;
    const double b2 = va + vb + c2;
    const double s = f.map[i];
    d_mu[i] = (2.0 * mu_b * (a2 - a1)) / (b1 * b2) -
              s * (2.0 * mu_a / b1 - 2.0 * mu_a / b2);
    d_maa[i] = -s / b2;
    d_mab[i] = 2.0 * a1 / (b1 * b2);
  }
  const auto adj_mu = detail::gaussian_blur_adjoint(d_mu, dims, taps);
  const auto adj_maa = detail::gaussian_blur_adjoint(d_maa, dims, taps);
  const auto adj_mab = detail::gaussian_blur_adjoint(d_mab, dims, taps);

  LossResult r;
  r.mse_term = mse_val;
  r.ssim_term = ssim_val;
  r.value = lp.alpha * mse_val + (1.0 - lp.alpha) * (1.0 - ssim_val);
  r.grad = Volume(dims);
  for (std::size_t i = 0; i < n; ++i) {
    const double g_mse = 2.0 * (pred[i] - target[i]) * inv_n;
    const double g_ssim =
        (adj_mu[i] + 2.0 * pred[i] * adj_maa[i] + target[i] * adj_mab[i]) *
        inv_n;
    r.grad[i] = lp.alpha * g_mse - (1.0 - lp.alpha) * g_ssim;
  }
  return r;
}

// Loss value only (no gradient); used for validation passes.
inline LossResult composite_loss_value(const Volume& pred,
                                       const Volume& target,
                                       const LossParams& lp = {},
                                       const SsimParams& sp = {}) {
  LossResult r;
  r.mse_term = mse(pred, target);
  r.ssim_term = ssim(pred, target, sp);
  r.value = lp.alpha * r.mse_term + (1.0 - lp.alpha) * (1.0 - r.ssim_term);
  return r;
}

} // namespace mrsir
