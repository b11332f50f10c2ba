#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mrsir/errors.hpp"
#include "mrsir/layers.hpp"
#include "mrsir/rng.hpp"
#include "mrsir/tensor.hpp"
#include "mrsir/volume.hpp"

namespace mrsir {

// Mask-free encoder-decoder restoration network. The input is the corrupted
// image alone: one channel in, one sigmoid channel out, no missing-location
// side input anywhere in the interface.
struct UNetConfig {
  int dimensionality = 3; // 2 or 3
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::vector<std::size_t> encoder_channels{32, 64, 128, 256};
  std::size_t bottleneck_channels = 512;

  void validate() const {
    if (dimensionality != 2 && dimensionality != 3)
      throw InvalidConfig("unet: dimensionality must be 2 or 3");
    if (in_channels == 0 || out_channels == 0 || bottleneck_channels == 0)
      throw InvalidConfig("unet: channel counts must be positive");
    if (encoder_channels.empty())
      throw InvalidConfig("unet: encoder schedule must not be empty");
    for (auto c : encoder_channels)
      if (c == 0) throw InvalidConfig("unet: encoder channels must be positive");
  }

  // Spatial dims must be divisible by 2^stages so pooling round-trips.
  std::size_t pool_divisor() const {
    return std::size_t{1} << encoder_channels.size();
  }

  bool operator==(const UNetConfig&) const = default;
};

namespace nn {

// conv(3) -> batchnorm -> relu, twice. Convolutions carry no bias since the
// normalization absorbs it.
class ConvBlock {
public:
  ConvBlock() = default;
  ConvBlock(std::size_t in_ch, std::size_t out_ch, int kd)
      : conv1_(in_ch, out_ch, kd, 3, 3, false), bn1_(out_ch),
        conv2_(out_ch, out_ch, kd, 3, 3, false), bn2_(out_ch) {}

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
  }

  Tensor forward(const Tensor& x, bool training) {
    Tensor t = conv1_.forward(x, training);
    t = bn1_.forward(t, training);
    t = relu1_.forward(t, training);
    t = conv2_.forward(t, training);
    t = bn2_.forward(t, training);
    return relu2_.forward(t, training);
  }

  Tensor backward(const Tensor& gy) {
    Tensor g = relu2_.backward(gy);
    g = bn2_.backward(g);
    g = conv2_.backward(g);
    g = relu1_.backward(g);
    g = bn1_.backward(g);
    return conv1_.backward(g);
  }

  void collect(const std::string& prefix, std::vector<ParamRef>& out) {
    conv1_.collect(prefix + ".conv1", out);
    bn1_.collect(prefix + ".bn1", out);
    conv2_.collect(prefix + ".conv2", out);
    bn2_.collect(prefix + ".bn2", out);
  }

private:
  Conv conv1_;
  BatchNorm bn1_;
  Relu relu1_;
  Conv conv2_;
  BatchNorm bn2_;
  Relu relu2_;
};

} // namespace nn

class UNet {
public:
  explicit UNet(UNetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int kd = cfg_.dimensionality == 3 ? 3 : 1;
    const int fd = cfg_.dimensionality == 3 ? 2 : 1;
    const std::size_t stages = cfg_.encoder_channels.size();

    std::size_t ch = cfg_.in_channels;
    for (std::size_t i = 0; i < stages; ++i) {
      enc_.emplace_back(ch, cfg_.encoder_channels[i], kd);
      pool_.emplace_back(fd, 2, 2);
      ch = cfg_.encoder_channels[i];
    }
    bottleneck_ = nn::ConvBlock(ch, cfg_.bottleneck_channels, kd);

    std::size_t lower = cfg_.bottleneck_channels;
    up_.resize(stages);
    dec_.resize(stages);
    for (std::size_t i = stages; i-- > 0;) {
      const std::size_t skip_ch = cfg_.encoder_channels[i];
      up_[i] = nn::TConv(lower, skip_ch, fd, 2, 2);
      dec_[i] = nn::ConvBlock(2 * skip_ch, skip_ch, kd);
      lower = skip_ch;
    }
    head_ = nn::Conv(cfg_.encoder_channels.front(), cfg_.out_channels, 1, 1, 1,
                     true);
  }

  const UNetConfig& config() const { return cfg_; }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x756e6574));
    for (auto& b : enc_) b.init(rng);
    bottleneck_.init(rng);
    for (std::size_t i = up_.size(); i-- > 0;) {
      up_[i].init(rng);
      dec_[i].init(rng);
    }
    head_.init(rng);
  }

  Tensor forward(const Tensor& x, bool training) {
    check_input(x);
    training_forward_ = training;
    const std::size_t stages = enc_.size();

    skips_.assign(stages, Tensor{});
    Tensor t = x;
    for (std::size_t i = 0; i < stages; ++i) {
      t = enc_[i].forward(t, training);
      skips_[i] = t;
      t = pool_[i].forward(t, training);
    }
    t = bottleneck_.forward(t, training);
    for (std::size_t i = stages; i-- > 0;) {
      Tensor u = up_[i].forward(t, training);
      t = concat_channels(skips_[i], u);
      if (!training) skips_[i].release();
      t = dec_[i].forward(t, training);
    }
    t = head_.forward(t, training);
    t = sigmoid_.forward(t, training);

    for (double v : t.v)
      if (!std::isfinite(v))
        throw NonFiniteActivation("unet: non-finite output activation");
    return t;
  }

  // Accumulates parameter gradients for the last training-mode forward and
  // returns the gradient with respect to the input.
  Tensor backward(const Tensor& grad_out) {
    if (!training_forward_)
      throw NotInTrainingMode("unet: backward requires a training forward");
    const std::size_t stages = enc_.size();

    Tensor g = sigmoid_.backward(grad_out);
    g = head_.backward(g);
    std::vector<Tensor> skip_grads(stages);
    for (std::size_t i = 0; i < stages; ++i) {
      g = dec_[i].backward(g);
      Tensor g_up;
      split_channels(g, skips_[i].c, skip_grads[i], g_up);
      g = up_[i].backward(g_up);
    }
    g = bottleneck_.backward(g);
    for (std::size_t i = stages; i-- > 0;) {
      g = pool_[i].backward(g);
      for (std::size_t k = 0; k < g.size(); ++k)
        g.v[k] += skip_grads[i].v[k];
      skip_grads[i].release();
      skips_[i].release();
      g = enc_[i].backward(g);
    }
    training_forward_ = false;
    return g;
  }

  // Single-image inference.
  Volume predict(const Volume& v) {
    Tensor out = forward(tensor_from_volumes({v}), false);
    return volume_from_tensor(out, 0);
  }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < enc_.size(); ++i)
      enc_[i].collect("enc" + std::to_string(i + 1), out);
    bottleneck_.collect("bottleneck", out);
    for (std::size_t i = up_.size(); i-- > 0;) {
      const std::string p = "dec" + std::to_string(i + 1);
      up_[i].collect(p + ".up", out);
      dec_[i].collect(p, out);
    }
    head_.collect("head", out);
    return out;
  }

  void zero_grads() {
    for (auto& p : params())
      if (p.grad) std::fill(p.grad->begin(), p.grad->end(), 0.0);
  }

  std::size_t parameter_count(bool trainable_only = true) {
    std::size_t n = 0;
    for (auto& p : params())
      if (!trainable_only || p.trainable) n += p.count();
    return n;
  }

private:
  void check_input(const Tensor& x) const {
    if (x.c != cfg_.in_channels)
      throw ShapeMismatch("unet: input channel count");
    const std::size_t div = cfg_.pool_divisor();
    if (cfg_.dimensionality == 2) {
      if (x.d != 1)
        throw InvalidDims("unet: 2D model expects depth-1 input");
      if (x.h % div != 0 || x.w % div != 0 || x.h == 0 || x.w == 0)
        throw DimNotDivisible("unet: spatial dims must be divisible by " +
                              std::to_string(div));
    } else {
      if (x.d % div != 0 || x.h % div != 0 || x.w % div != 0 || x.d == 0)
        throw DimNotDivisible("unet: spatial dims must be divisible by " +
                              std::to_string(div));
    }
  }

  static Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor t(a.n, a.c + b.c, a.d, a.h, a.w);
    for (std::size_t n = 0; n < a.n; ++n) {
      for (std::size_t c = 0; c < a.c; ++c)
        std::copy(a.plane(n, c), a.plane(n, c) + a.spatial(), t.plane(n, c));
      for (std::size_t c = 0; c < b.c; ++c)
        std::copy(b.plane(n, c), b.plane(n, c) + b.spatial(),
                  t.plane(n, a.c + c));
    }
    return t;
  }

  static void split_channels(const Tensor& g, std::size_t first_c,
                             Tensor& g_first, Tensor& g_second) {
    g_first = Tensor(g.n, first_c, g.d, g.h, g.w);
    g_second = Tensor(g.n, g.c - first_c, g.d, g.h, g.w);
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t c = 0; c < first_c; ++c)
        std::copy(g.plane(n, c), g.plane(n, c) + g.spatial(),
                  g_first.plane(n, c));
      for (std::size_t c = first_c; c < g.c; ++c)
        std::copy(g.plane(n, c), g.plane(n, c) + g.spatial(),
                  g_second.plane(n, c - first_c));
    }
  }

  UNetConfig cfg_;
  std::vector<nn::ConvBlock> enc_;
  std::vector<nn::MaxPool> pool_;
  nn::ConvBlock bottleneck_;
  std::vector<nn::TConv> up_;
  std::vector<nn::ConvBlock> dec_;
  nn::Conv head_;
  nn::Sigmoid sigmoid_;
  std::vector<Tensor> skips_;
  bool training_forward_ = false;
};

} // namespace mrsir
