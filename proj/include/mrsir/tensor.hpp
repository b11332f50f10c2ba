#pragma once

#include <cstddef>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

// Dense (batch, channel, depth, height, width) activation tensor, row-major
// with x fastest. 2D networks carry depth 1 end to end.
struct Tensor {
  std::size_t n = 0, c = 0, d = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::size_t n_, std::size_t c_, std::size_t d_, std::size_t h_,
         std::size_t w_)
      : n(n_), c(c_), d(d_), h(h_), w(w_), v(n_ * c_ * d_ * h_ * w_, 0.0) {}

  std::size_t spatial() const { return d * h * w; }
  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && d == o.d && h == o.h && w == o.w;
  }

  double* plane(std::size_t in, std::size_t ic) {
    return v.data() + (in * c + ic) * spatial();
  }
  const double* plane(std::size_t in, std::size_t ic) const {
    return v.data() + (in * c + ic) * spatial();
  }

  void release() { v = {}; n = c = d = h = w = 0; }
};

inline Tensor tensor_from_volumes(const std::vector<Volume>& batch) {
  if (batch.empty()) throw DataEmpty("tensor_from_volumes: empty batch");
  const Dims dims = batch.front().dims();
  Tensor t(batch.size(), 1, dims.depth, dims.height, dims.width);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].dims() != dims)
      throw DimMismatch("tensor_from_volumes: inconsistent dims");
    std::copy(batch[i].values().begin(), batch[i].values().end(),
              t.plane(i, 0));
  }
  return t;
}

inline Volume volume_from_tensor(const Tensor& t, std::size_t item) {
  Volume v(Dims{t.d, t.h, t.w});
  const double* p = t.plane(item, 0);
  std::copy(p, p + t.spatial(), v.data());
  return v;
}

} // namespace mrsir
