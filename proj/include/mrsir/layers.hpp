#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/rng.hpp"
#include "mrsir/tensor.hpp"

namespace mrsir {

// Named view of one parameter tensor and its gradient. Running statistics
// are exposed with trainable = false so checkpoints carry them while the
// optimizer skips them.
struct ParamRef {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double>* value = nullptr;
  std::vector<double>* grad = nullptr;
  bool trainable = true;

  std::size_t count() const {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    return n;
  }
};

namespace nn {

// Every output element is owned by exactly one loop iteration, so OpenMP
// parallelism never changes results.

// Stride-1 "same" convolution core shared by the forward pass and the
// input-gradient pass (which runs it with flipped, transposed weights).
// The hot path is the x-contiguous interior where a 3-tap row update runs
// without bounds checks; restrict-qualified pointers keep it vectorizable.
inline void conv_same(const Tensor& in, Tensor& out, const double* weight,
                      std::size_t nic, std::size_t noc, int kd, int kh, int kw,
                      const double* bias) {
  const int pd = kd / 2, ph = kh / 2, pw = kw / 2;
  const auto D = static_cast<int>(in.d);
  const auto H = static_cast<int>(in.h);
  const auto W = static_cast<int>(in.w);
  const std::size_t ksize = static_cast<std::size_t>(kd * kh * kw);

#ifdef _OPENMP
#pragma omp parallel
#endif
  {
    std::vector<double> acc(static_cast<std::size_t>(W));
    double* __restrict__ accp = acc.data();
#ifdef _OPENMP
#pragma omp for collapse(2) schedule(static)
#endif
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(in.n); ++n)
      for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(noc);
           ++oc) {
        double* op = out.plane(static_cast<std::size_t>(n),
                               static_cast<std::size_t>(oc));
        const double* base =
            in.plane(static_cast<std::size_t>(n), 0);
        const std::size_t plane = in.spatial();
        const double* wbase = weight + static_cast<std::size_t>(oc) * nic * ksize;
        for (int z = 0; z < D; ++z)
          for (int y = 0; y < H; ++y) {
            const double b = bias ? bias[oc] : 0.0;
            for (int x = 0; x < W; ++x) accp[x] = b;
            for (std::size_t ic = 0; ic < nic; ++ic) {
              const double* ip = base + ic * plane;
              const double* wp = wbase + ic * ksize;
              for (int kz = 0; kz < kd; ++kz) {
                const int zi = z + kz - pd;
                if (zi < 0 || zi >= D) continue;
                for (int ky = 0; ky < kh; ++ky) {
                  const int yi = y + ky - ph;
                  if (yi < 0 || yi >= H) continue;
                  const double* __restrict__ src =
                      ip + (static_cast<std::size_t>(zi) * H +
                            static_cast<std::size_t>(yi)) *
                               W;
                  const double* taps = wp + (kz * kh + ky) * kw;
                  if (kw == 3 && pw == 1 && W > 2) {
                    // Edges first, then one fused pass over the interior.
                    const double w0 = taps[0], w1 = taps[1], w2 = taps[2];
                    accp[0] += w1 * src[0] + w2 * src[1];
                    accp[W - 1] += w0 * src[W - 2] + w1 * src[W - 1];
                    for (int x = 1; x < W - 1; ++x)
                      accp[x] +=
                          w0 * src[x - 1] + w1 * src[x] + w2 * src[x + 1];
                  } else {
                    for (int kx = 0; kx < kw; ++kx) {
                      const int sx = kx - pw;
                      const int lo = sx < 0 ? -sx : 0;
                      const int hi = sx > 0 ? W - sx : W;
                      const double wv = taps[kx];
                      const double* __restrict__ s = src + sx;
                      for (int x = lo; x < hi; ++x) accp[x] += wv * s[x];
                    }
                  }
                }
              }
            }
            std::memcpy(op + (static_cast<std::size_t>(z) * H + y) * W, accp,
                        static_cast<std::size_t>(W) * sizeof(double));
          }
      }
  }
}

class Conv {
public:
  Conv() = default;
  Conv(std::size_t in_ch, std::size_t out_ch, int kd, int kh, int kw,
       bool bias)
      : in_ch_(in_ch), out_ch_(out_ch), kd_(kd), kh_(kh), kw_(kw),
        has_bias_(bias) {
    weight_.assign(out_ch_ * in_ch_ * ksize(), 0.0);
    wgrad_.assign(weight_.size(), 0.0);
    if (has_bias_) {
      bias_.assign(out_ch_, 0.0);
      bgrad_.assign(out_ch_, 0.0);
    }
  }

  std::size_t ksize() const {
    return static_cast<std::size_t>(kd_ * kh_ * kw_);
  }

  void init(Rng& rng) {
    const double stddev =
        std::sqrt(2.0 / (static_cast<double>(in_ch_) *
                         static_cast<double>(ksize())));
    for (auto& w : weight_) w = stddev * rng.normal();
    if (has_bias_) std::fill(bias_.begin(), bias_.end(), 0.0);
  }

  Tensor forward(const Tensor& x, bool training) {
    if (x.c != in_ch_) throw ShapeMismatch("conv: channel mismatch");
    Tensor y(x.n, out_ch_, x.d, x.h, x.w);
    conv_same(x, y, weight_.data(), in_ch_, out_ch_, kd_, kh_, kw_,
              has_bias_ ? bias_.data() : nullptr);
    if (training) x_ = x;
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const Tensor& x = x_;
    const int pd = kd_ / 2, ph = kh_ / 2, pw = kw_ / 2;
    const auto D = static_cast<int>(x.d);
    const auto H = static_cast<int>(x.h);
    const auto W = static_cast<int>(x.w);

    // Weight gradient: correlation of input with the output gradient. For
    // the 3-wide kernels the three x-taps share one pass over each row.
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(out_ch_);
         ++oc)
      for (std::ptrdiff_t ic = 0; ic < static_cast<std::ptrdiff_t>(in_ch_);
           ++ic) {
        double* wg = wgrad_.data() +
                     (static_cast<std::size_t>(oc) * in_ch_ +
                      static_cast<std::size_t>(ic)) *
                         ksize();
        for (int kz = 0; kz < kd_; ++kz)
          for (int ky = 0; ky < kh_; ++ky) {
            const int sz = kz - pd, sy = ky - ph;
            const int zlo = std::max(0, -sz), zhi = std::min(D, D - sz);
            const int ylo = std::max(0, -sy), yhi = std::min(H, H - sy);
            if (kw_ == 3 && pw == 1 && W > 2) {
              double d0 = 0.0, d1 = 0.0, d2 = 0.0;
              for (std::size_t n = 0; n < x.n; ++n) {
                const double* gp = gy.plane(n, static_cast<std::size_t>(oc));
                const double* xp = x.plane(n, static_cast<std::size_t>(ic));
                for (int z = zlo; z < zhi; ++z)
                  for (int y = ylo; y < yhi; ++y) {
                    const double* __restrict__ grow =
                        gp + (static_cast<std::size_t>(z) * H + y) * W;
                    const double* __restrict__ xrow =
                        xp +
                        (static_cast<std::size_t>(z + sz) * H + (y + sy)) * W;
                    d1 += grow[0] * xrow[0];
                    d2 += grow[0] * xrow[1];
                    d0 += grow[W - 1] * xrow[W - 2];
                    d1 += grow[W - 1] * xrow[W - 1];
                    double t0 = 0.0, t1 = 0.0, t2 = 0.0;
#ifdef _OPENMP
#pragma omp simd reduction(+ : t0, t1, t2)
#endif
                    for (int xx = 1; xx < W - 1; ++xx) {
                      const double g = grow[xx];
                      t0 += g * xrow[xx - 1];
                      t1 += g * xrow[xx];
                      t2 += g * xrow[xx + 1];
                    }
                    d0 += t0;
                    d1 += t1;
                    d2 += t2;
                  }
              }
              wg[(kz * kh_ + ky) * 3 + 0] += d0;
              wg[(kz * kh_ + ky) * 3 + 1] += d1;
              wg[(kz * kh_ + ky) * 3 + 2] += d2;
            } else {
              for (int kx = 0; kx < kw_; ++kx) {
                const int sx = kx - pw;
                const int xlo = std::max(0, -sx), xhi = std::min(W, W - sx);
                double acc = 0.0;
                for (std::size_t n = 0; n < x.n; ++n) {
                  const double* gp = gy.plane(n, static_cast<std::size_t>(oc));
                  const double* xp = x.plane(n, static_cast<std::size_t>(ic));
                  for (int z = zlo; z < zhi; ++z)
                    for (int y = ylo; y < yhi; ++y) {
                      const double* __restrict__ grow =
                          gp + (static_cast<std::size_t>(z) * H + y) * W;
                      const double* __restrict__ xrow =
                          xp +
                          (static_cast<std::size_t>(z + sz) * H + (y + sy)) *
                              W +
                          sx;
                      double dot = 0.0;
#ifdef _OPENMP
#pragma omp simd reduction(+ : dot)
#endif
                      for (int xx = xlo; xx < xhi; ++xx)
                        dot += grow[xx] * xrow[xx];
                      acc += dot;
                    }
                }
                wg[(kz * kh_ + ky) * kw_ + kx] += acc;
              }
            }
          }
      }

    if (has_bias_) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(out_ch_);
           ++oc) {
        double acc = 0.0;
        for (std::size_t n = 0; n < gy.n; ++n) {
          const double* gp = gy.plane(n, static_cast<std::size_t>(oc));
          for (std::size_t i = 0; i < gy.spatial(); ++i) acc += gp[i];
        }
        bgrad_[static_cast<std::size_t>(oc)] += acc;
      }
    }

    // Input gradient: same-convolution of gy with flipped, transposed taps.
    std::vector<double> wt(weight_.size());
    for (std::size_t oc = 0; oc < out_ch_; ++oc)
      for (std::size_t ic = 0; ic < in_ch_; ++ic)
        for (int kz = 0; kz < kd_; ++kz)
          for (int ky = 0; ky < kh_; ++ky)
            for (int kx = 0; kx < kw_; ++kx)
              wt[(ic * out_ch_ + oc) * ksize() +
                 static_cast<std::size_t>(
                     ((kd_ - 1 - kz) * kh_ + (kh_ - 1 - ky)) * kw_ +
                     (kw_ - 1 - kx))] =
                  weight_[(oc * in_ch_ + ic) * ksize() +
                          static_cast<std::size_t>((kz * kh_ + ky) * kw_ +
                                                   kx)];
    Tensor gx(x.n, in_ch_, x.d, x.h, x.w);
    conv_same(gy, gx, wt.data(), out_ch_, in_ch_, kd_, kh_, kw_, nullptr);
    x_.release();
    return gx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight",
                   {out_ch_, in_ch_, static_cast<std::size_t>(kd_),
                    static_cast<std::size_t>(kh_),
                    static_cast<std::size_t>(kw_)},
                   &weight_,
                   &wgrad_,
                   true});
    if (has_bias_)
      out.push_back({prefix + ".bias", {out_ch_}, &bias_, &bgrad_, true});
  }

private:
  std::size_t in_ch_ = 0, out_ch_ = 0;
  int kd_ = 1, kh_ = 1, kw_ = 1;
  bool has_bias_ = false;
  std::vector<double> weight_, wgrad_, bias_, bgrad_;
  Tensor x_;
};

class BatchNorm {
public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels) : ch_(channels) {
    gamma_.assign(ch_, 1.0);
    beta_.assign(ch_, 0.0);
    ggrad_.assign(ch_, 0.0);
    bgrad_.assign(ch_, 0.0);
    running_mean_.assign(ch_, 0.0);
    running_var_.assign(ch_, 1.0);
  }

  Tensor forward(const Tensor& x, bool training) {
    if (x.c != ch_) throw ShapeMismatch("batchnorm: channel mismatch");
    Tensor y(x.n, x.c, x.d, x.h, x.w);
    const std::size_t spatial = x.spatial();
    const double cnt = static_cast<double>(x.n * spatial);

    if (training) {
      xhat_ = Tensor(x.n, x.c, x.d, x.h, x.w);
      inv_std_.assign(ch_, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(ch_); ++c) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t n = 0; n < x.n; ++n) {
          const double* p = x.plane(n, static_cast<std::size_t>(c));
          for (std::size_t i = 0; i < spatial; ++i) {
            sum += p[i];
            sq += p[i] * p[i];
          }
        }
        const double mean = sum / cnt;
        const double var = std::max(sq / cnt - mean * mean, 0.0);
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[static_cast<std::size_t>(c)] = inv;
        const double g = gamma_[static_cast<std::size_t>(c)];
        const double b = beta_[static_cast<std::size_t>(c)];
        for (std::size_t n = 0; n < x.n; ++n) {
          const double* p = x.plane(n, static_cast<std::size_t>(c));
          double* xh = xhat_.plane(n, static_cast<std::size_t>(c));
          double* yp = y.plane(n, static_cast<std::size_t>(c));
          for (std::size_t i = 0; i < spatial; ++i) {
            xh[i] = (p[i] - mean) * inv;
            yp[i] = g * xh[i] + b;
          }
        }
        // Unbiased variance feeds the running estimate.
        const double unbiased = cnt > 1.0 ? var * cnt / (cnt - 1.0) : var;
        running_mean_[static_cast<std::size_t>(c)] =
            (1.0 - momentum_) * running_mean_[static_cast<std::size_t>(c)] +
            momentum_ * mean;
        running_var_[static_cast<std::size_t>(c)] =
            (1.0 - momentum_) * running_var_[static_cast<std::size_t>(c)] +
            momentum_ * unbiased;
      }
    } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
      for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(ch_); ++c) {
        const double mean = running_mean_[static_cast<std::size_t>(c)];
        const double inv =
            1.0 / std::sqrt(running_var_[static_cast<std::size_t>(c)] + eps_);
        const double g = gamma_[static_cast<std::size_t>(c)];
        const double b = beta_[static_cast<std::size_t>(c)];
        for (std::size_t n = 0; n < x.n; ++n) {
          const double* p = x.plane(n, static_cast<std::size_t>(c));
          double* yp = y.plane(n, static_cast<std::size_t>(c));
          for (std::size_t i = 0; i < spatial; ++i)
            yp[i] = g * (p[i] - mean) * inv + b;
        }
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    if (xhat_.size() == 0)
      throw NotInTrainingMode("batchnorm: no training-mode cache");
    Tensor gx(gy.n, gy.c, gy.d, gy.h, gy.w);
    const std::size_t spatial = gy.spatial();
    const double cnt = static_cast<double>(gy.n * spatial);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(ch_); ++c) {
      double dg = 0.0, db = 0.0;
      for (std::size_t n = 0; n < gy.n; ++n) {
        const double* g = gy.plane(n, static_cast<std::size_t>(c));
        const double* xh = xhat_.plane(n, static_cast<std::size_t>(c));
        for (std::size_t i = 0; i < spatial; ++i) {
          dg += g[i] * xh[i];
          db += g[i];
        }
      }
      ggrad_[static_cast<std::size_t>(c)] += dg;
      bgrad_[static_cast<std::size_t>(c)] += db;

      const double scale = gamma_[static_cast<std::size_t>(c)] *
                           inv_std_[static_cast<std::size_t>(c)] / cnt;
      for (std::size_t n = 0; n < gy.n; ++n) {
        const double* g = gy.plane(n, static_cast<std::size_t>(c));
        const double* xh = xhat_.plane(n, static_cast<std::size_t>(c));
        double* out = gx.plane(n, static_cast<std::size_t>(c));
        for (std::size_t i = 0; i < spatial; ++i)
          out[i] = scale * (cnt * g[i] - db - xh[i] * dg);
      }
    }
    xhat_.release();
    return gx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".gamma", {ch_}, &gamma_, &ggrad_, true});
    out.push_back({prefix + ".beta", {ch_}, &beta_, &bgrad_, true});
    out.push_back(
        {prefix + ".running_mean", {ch_}, &running_mean_, nullptr, false});
    out.push_back(
        {prefix + ".running_var", {ch_}, &running_var_, nullptr, false});
  }

private:
  std::size_t ch_ = 0;
  double momentum_ = 0.1;
  double eps_ = 1e-5;
  std::vector<double> gamma_, beta_, ggrad_, bgrad_;
  std::vector<double> running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class Relu {
public:
  Tensor forward(const Tensor& x, bool training) {
    Tensor y = x;
    if (training) mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.v[i] > 0.0) {
        if (training) mask_[i] = 1;
      } else {
        y.v[i] = 0.0;
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!mask_[i]) gx.v[i] = 0.0;
    mask_ = {};
    return gx;
  }

private:
  std::vector<std::uint8_t> mask_;
};

class MaxPool {
public:
  MaxPool() = default;
  MaxPool(int fd, int fh, int fw) : fd_(fd), fh_(fh), fw_(fw) {}

  Tensor forward(const Tensor& x, bool training) {
    const std::size_t od = x.d / static_cast<std::size_t>(fd_);
    const std::size_t oh = x.h / static_cast<std::size_t>(fh_);
    const std::size_t ow = x.w / static_cast<std::size_t>(fw_);
    Tensor y(x.n, x.c, od, oh, ow);
    in_shape_ = {x.n, x.c, x.d, x.h, x.w};
    if (training) argmax_.assign(y.size(), 0);

#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(x.n); ++n)
      for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(x.c); ++c) {
        const double* ip =
            x.plane(static_cast<std::size_t>(n), static_cast<std::size_t>(c));
        double* op =
            y.plane(static_cast<std::size_t>(n), static_cast<std::size_t>(c));
        const std::size_t out_base =
            (static_cast<std::size_t>(n) * x.c + static_cast<std::size_t>(c)) *
            y.spatial();
        std::size_t o = 0;
        for (std::size_t z = 0; z < od; ++z)
          for (std::size_t yy = 0; yy < oh; ++yy)
            for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
              double best = -1e300;
              std::size_t best_idx = 0;
              for (int bz = 0; bz < fd_; ++bz)
                for (int by = 0; by < fh_; ++by)
                  for (int bx = 0; bx < fw_; ++bx) {
                    const std::size_t idx =
                        ((z * static_cast<std::size_t>(fd_) +
                          static_cast<std::size_t>(bz)) *
                             x.h +
                         (yy * static_cast<std::size_t>(fh_) +
                          static_cast<std::size_t>(by))) *
                            x.w +
                        xx * static_cast<std::size_t>(fw_) +
                        static_cast<std::size_t>(bx);
                    if (ip[idx] > best) {
                      best = ip[idx];
                      best_idx = idx;
                    }
                  }
              op[o] = best;
              if (!argmax_.empty()) argmax_[out_base + o] = best_idx;
            }
      }
    return y;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3],
              in_shape_[4]);
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(gy.n); ++n)
      for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(gy.c); ++c) {
        const double* gp =
            gy.plane(static_cast<std::size_t>(n), static_cast<std::size_t>(c));
        double* xp =
            gx.plane(static_cast<std::size_t>(n), static_cast<std::size_t>(c));
        const std::size_t out_base =
            (static_cast<std::size_t>(n) * gy.c +
             static_cast<std::size_t>(c)) *
            gy.spatial();
        for (std::size_t o = 0; o < gy.spatial(); ++o)
          xp[argmax_[out_base + o]] += gp[o];
      }
    argmax_ = {};
    return gx;
  }

private:
  int fd_ = 2, fh_ = 2, fw_ = 2;
  std::array<std::size_t, 5> in_shape_{};
  std::vector<std::size_t> argmax_;
};

// Transposed convolution with stride equal to the kernel: every output
// element receives exactly one tap, so the gather form is exact and cheap.
class TConv {
public:
  TConv() = default;
  TConv(std::size_t in_ch, std::size_t out_ch, int kd, int kh, int kw)
      : in_ch_(in_ch), out_ch_(out_ch), kd_(kd), kh_(kh), kw_(kw) {
    weight_.assign(in_ch_ * out_ch_ * ksize(), 0.0);
    wgrad_.assign(weight_.size(), 0.0);
    bias_.assign(out_ch_, 0.0);
    bgrad_.assign(out_ch_, 0.0);
  }

  std::size_t ksize() const {
    return static_cast<std::size_t>(kd_ * kh_ * kw_);
  }

  void init(Rng& rng) {
    const double stddev =
        std::sqrt(2.0 / (static_cast<double>(in_ch_) *
                         static_cast<double>(ksize())));
    for (auto& w : weight_) w = stddev * rng.normal();
    std::fill(bias_.begin(), bias_.end(), 0.0);
  }

  Tensor forward(const Tensor& x, bool training) {
    if (x.c != in_ch_) throw ShapeMismatch("tconv: channel mismatch");
    Tensor y(x.n, out_ch_, x.d * static_cast<std::size_t>(kd_),
             x.h * static_cast<std::size_t>(kh_),
             x.w * static_cast<std::size_t>(kw_));
#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(x.n); ++n)
      for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(out_ch_);
           ++oc) {
        double* op =
            y.plane(static_cast<std::size_t>(n), static_cast<std::size_t>(oc));
        std::size_t o = 0;
        for (std::size_t zo = 0; zo < y.d; ++zo)
          for (std::size_t yo = 0; yo < y.h; ++yo)
            for (std::size_t xo = 0; xo < y.w; ++xo, ++o) {
              const std::size_t zi = zo / static_cast<std::size_t>(kd_);
              const std::size_t yi = yo / static_cast<std::size_t>(kh_);
              const std::size_t xi = xo / static_cast<std::size_t>(kw_);
              const std::size_t tap =
                  ((zo % static_cast<std::size_t>(kd_)) *
                       static_cast<std::size_t>(kh_) +
                   (yo % static_cast<std::size_t>(kh_))) *
                      static_cast<std::size_t>(kw_) +
                  (xo % static_cast<std::size_t>(kw_));
              double acc = bias_[static_cast<std::size_t>(oc)];
              for (std::size_t ic = 0; ic < in_ch_; ++ic)
                acc += x.plane(static_cast<std::size_t>(n),
                               ic)[(zi * x.h + yi) * x.w + xi] *
                       weight_[(ic * out_ch_ + static_cast<std::size_t>(oc)) *
                                   ksize() +
                               tap];
              op[o] = acc;
            }
      }
    if (training) x_ = x;
    return y;
  }

  Tensor backward(const Tensor& gy) {
    const Tensor& x = x_;
    Tensor gx(x.n, in_ch_, x.d, x.h, x.w);

#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(x.n); ++n)
      for (std::ptrdiff_t ic = 0; ic < static_cast<std::ptrdiff_t>(in_ch_);
           ++ic) {
        double* xp = gx.plane(static_cast<std::size_t>(n),
                              static_cast<std::size_t>(ic));
        std::size_t i = 0;
        for (std::size_t zi = 0; zi < x.d; ++zi)
          for (std::size_t yi = 0; yi < x.h; ++yi)
            for (std::size_t xi = 0; xi < x.w; ++xi, ++i) {
              double acc = 0.0;
              for (std::size_t oc = 0; oc < out_ch_; ++oc) {
                const double* gp = gy.plane(static_cast<std::size_t>(n), oc);
                const double* wp =
                    weight_.data() +
                    (static_cast<std::size_t>(ic) * out_ch_ + oc) * ksize();
                std::size_t tap = 0;
                for (int kz = 0; kz < kd_; ++kz)
                  for (int ky = 0; ky < kh_; ++ky)
                    for (int kx = 0; kx < kw_; ++kx, ++tap) {
                      const std::size_t zo =
                          zi * static_cast<std::size_t>(kd_) +
                          static_cast<std::size_t>(kz);
                      const std::size_t yo =
                          yi * static_cast<std::size_t>(kh_) +
                          static_cast<std::size_t>(ky);
                      const std::size_t xo =
                          xi * static_cast<std::size_t>(kw_) +
                          static_cast<std::size_t>(kx);
                      acc += gp[(zo * gy.h + yo) * gy.w + xo] * wp[tap];
                    }
              }
              xp[i] = acc;
            }
      }

#ifdef _OPENMP
#pragma omp parallel for collapse(2) schedule(static)
#endif
    for (std::ptrdiff_t ic = 0; ic < static_cast<std::ptrdiff_t>(in_ch_);
         ++ic)
      for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(out_ch_);
           ++oc) {
        double* wg = wgrad_.data() +
                     (static_cast<std::size_t>(ic) * out_ch_ +
                      static_cast<std::size_t>(oc)) *
                         ksize();
        std::size_t tap = 0;
        for (int kz = 0; kz < kd_; ++kz)
          for (int ky = 0; ky < kh_; ++ky)
            for (int kx = 0; kx < kw_; ++kx, ++tap) {
              double acc = 0.0;
              for (std::size_t n = 0; n < x.n; ++n) {
                const double* xp =
                    x.plane(n, static_cast<std::size_t>(ic));
                const double* gp =
                    gy.plane(n, static_cast<std::size_t>(oc));
                std::size_t i = 0;
                for (std::size_t zi = 0; zi < x.d; ++zi)
                  for (std::size_t yi = 0; yi < x.h; ++yi)
                    for (std::size_t xi = 0; xi < x.w; ++xi, ++i) {
                      const std::size_t zo =
                          zi * static_cast<std::size_t>(kd_) +
                          static_cast<std::size_t>(kz);
                      const std::size_t yo =
                          yi * static_cast<std::size_t>(kh_) +
                          static_cast<std::size_t>(ky);
                      const std::size_t xo =
                          xi * static_cast<std::size_t>(kw_) +
                          static_cast<std::size_t>(kx);
                      acc += xp[i] * gp[(zo * gy.h + yo) * gy.w + xo];
                    }
              }
              wg[tap] += acc;
            }
      }

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t oc = 0; oc < static_cast<std::ptrdiff_t>(out_ch_);
         ++oc) {
      double acc = 0.0;
      for (std::size_t n = 0; n < gy.n; ++n) {
        const double* gp = gy.plane(n, static_cast<std::size_t>(oc));
        for (std::size_t i = 0; i < gy.spatial(); ++i) acc += gp[i];
      }
      bgrad_[static_cast<std::size_t>(oc)] += acc;
    }

    x_.release();
    return gx;
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weight",
                   {in_ch_, out_ch_, static_cast<std::size_t>(kd_),
                    static_cast<std::size_t>(kh_),
                    static_cast<std::size_t>(kw_)},
                   &weight_,
                   &wgrad_,
                   true});
    out.push_back({prefix + ".bias", {out_ch_}, &bias_, &bgrad_, true});
  }

private:
  std::size_t in_ch_ = 0, out_ch_ = 0;
  int kd_ = 2, kh_ = 2, kw_ = 2;
  std::vector<double> weight_, wgrad_, bias_, bgrad_;
  Tensor x_;
};

class Sigmoid {
public:
  Tensor forward(const Tensor& x, bool training) {
    Tensor y = x;
    for (auto& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
    if (training) y_ = y;
    return y;
  }

  Tensor backward(const Tensor& gy) {
    Tensor gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx.v[i] *= y_.v[i] * (1.0 - y_.v[i]);
    y_.release();
    return gx;
  }

private:
  Tensor y_;
};

} // namespace nn
} // namespace mrsir
