#include <catch2/catch.hpp>

#include <cmath>
#include <map>

#include "mrsir/rng.hpp"
#include "mrsir/tensor.hpp"
#include "mrsir/unet.hpp"

using namespace mrsir;

namespace {

UNetConfig tiny_2d() {
  UNetConfig cfg;
  cfg.dimensionality = 2;
  cfg.encoder_channels = {2, 3};
  cfg.bottleneck_channels = 4;
  return cfg;
}

Tensor random_input(std::size_t n, std::size_t d, std::size_t h,
                    std::size_t w, std::uint64_t seed) {
  Tensor t(n, 1, d, h, w);
  Rng rng(seed);
  for (auto& v : t.v) v = rng.unit();
  return t;
}

// Independent parameter counter from the layer schedule alone.
std::size_t expected_param_count(const UNetConfig& cfg) {
  const std::size_t k =
      cfg.dimensionality == 3 ? 27 : 9; // conv taps per channel pair
  const std::size_t tk = cfg.dimensionality == 3 ? 8 : 4; // tconv taps
  auto block = [&](std::size_t in, std::size_t out) {
    return out * in * k + 2 * out + out * out * k + 2 * out;
  };
  std::size_t total = 0;
  std::size_t ch = cfg.in_channels;
  for (auto c : cfg.encoder_channels) {
    total += block(ch, c);
    ch = c;
  }
  total += block(ch, cfg.bottleneck_channels);
  std::size_t lower = cfg.bottleneck_channels;
  for (std::size_t i = cfg.encoder_channels.size(); i-- > 0;) {
    const std::size_t c = cfg.encoder_channels[i];
    total += lower * c * tk + c; // transposed conv + bias
    total += block(2 * c, c);    // skip concatenation doubles the input
    lower = c;
  }
  total += cfg.out_channels * cfg.encoder_channels.front() +
           cfg.out_channels; // 1x1 head
  return total;
}

double mse_loss(const Tensor& y, const Tensor& t, Tensor* gy = nullptr) {
  double acc = 0.0;
  if (gy) *gy = Tensor(y.n, y.c, y.d, y.h, y.w);
  const double inv = 1.0 / static_cast<double>(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y.v[i] - t.v[i];
    acc += d * d;
    if (gy) gy->v[i] = 2.0 * d * inv;
  }
  return acc * inv;
}

} // namespace

TEST_CASE("init is deterministic per seed") {
  UNet a(tiny_2d()), b(tiny_2d());
  a.init(42);
  b.init(42);
  auto pa = a.params(), pb = b.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(*pa[i].value == *pb[i].value);
  }
  UNet c(tiny_2d());
  c.init(43);
  bool differs = false;
  auto pc = c.params();
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (pa[i].trainable && *pa[i].value != *pc[i].value) differs = true;
  CHECK(differs);
}

TEST_CASE("parameter counts match the layer-schedule oracle") {
  for (int dim : {2, 3}) {
    UNetConfig cfg; // paper-scale schedule
    cfg.dimensionality = dim;
    UNet net(cfg);
    CHECK(net.parameter_count() == expected_param_count(cfg));

    UNetConfig tiny = tiny_2d();
    tiny.dimensionality = dim;
    UNet small(tiny);
    CHECK(small.parameter_count() == expected_param_count(tiny));
  }
}

TEST_CASE("decoder stages consume twice the skip channels") {
  UNet net(tiny_2d());
  std::map<std::string, std::vector<std::size_t>> shapes;
  for (auto& p : net.params()) shapes[p.name] = p.shape;
  // dec1 first conv: input = 2 * enc1 channels.
  REQUIRE(shapes.count("dec1.conv1.weight") == 1);
  CHECK(shapes["dec1.conv1.weight"][1] == 2 * 2);
  CHECK(shapes["dec2.conv1.weight"][1] == 2 * 3);
}

TEST_CASE("forward preserves shape and keeps outputs strictly inside (0,1)") {
  SECTION("2D 64x64") {
    UNetConfig cfg;
    cfg.dimensionality = 2;
    UNet net(cfg);
    net.init(7);
    const Tensor x = random_input(1, 1, 64, 64, 3);
    const Tensor y = net.forward(x, false);
    CHECK(y.n == 1);
    CHECK(y.c == 1);
    CHECK(y.d == 1);
    CHECK(y.h == 64);
    CHECK(y.w == 64);
    for (double v : y.v) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
  SECTION("3D 16^3 with the full channel schedule") {
    UNetConfig cfg;
    UNet net(cfg);
    net.init(8);
    const Tensor x = random_input(1, 16, 16, 16, 4);
    const Tensor y = net.forward(x, false);
    CHECK(y.d == 16);
    CHECK(y.h == 16);
    CHECK(y.w == 16);
    for (double v : y.v) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("indivisible spatial dims are rejected") {
  UNetConfig cfg;
  cfg.dimensionality = 2;
  UNet net(cfg);
  net.init(1);
  CHECK_THROWS_AS(net.forward(random_input(1, 1, 60, 64, 1), false),
                  DimNotDivisible);
  UNetConfig c3;
  UNet net3(c3);
  net3.init(1);
  CHECK_THROWS_AS(net3.forward(random_input(1, 8, 16, 16, 1), false),
                  DimNotDivisible);
  CHECK_THROWS_AS(net.forward(random_input(1, 2, 64, 64, 1), false),
                  InvalidDims); // 2D model, 3D input
}

TEST_CASE("backward without a training forward is rejected") {
  UNet net(tiny_2d());
  net.init(2);
  const Tensor x = random_input(1, 1, 8, 8, 5);
  net.forward(x, false);
  CHECK_THROWS_AS(net.backward(Tensor(1, 1, 1, 8, 8)), NotInTrainingMode);
}

TEST_CASE("zero output gradient produces zero parameter gradients") {
  UNet net(tiny_2d());
  net.init(3);
  const Tensor x = random_input(1, 1, 8, 8, 6);
  net.zero_grads();
  net.forward(x, true);
  net.backward(Tensor(1, 1, 1, 8, 8));
  for (auto& p : net.params())
    if (p.grad)
      for (double g : *p.grad) CHECK(g == 0.0);
}

TEST_CASE("parameter gradients match finite differences on a tiny model") {
  UNet net(tiny_2d());
  net.init(11);
  const Tensor x = random_input(1, 1, 8, 8, 12);
  Tensor target = random_input(1, 1, 8, 8, 13);

  net.zero_grads();
  Tensor gy;
  mse_loss(net.forward(x, true), target, &gy);
  net.backward(gy);

  auto params = net.params();
  // One representative parameter from several layer kinds.
  const std::vector<std::pair<std::string, std::size_t>> picks = {
      {"enc1.conv1.weight", 0},  {"enc1.bn1.gamma", 1},
      {"enc2.conv2.weight", 5},  {"bottleneck.conv1.weight", 3},
      {"dec2.up.weight", 2},     {"dec1.conv1.weight", 7},
      {"head.weight", 0},        {"head.bias", 0}};
  const double h = 1e-4;
  for (const auto& [name, idx] : picks) {
    ParamRef* ref = nullptr;
    for (auto& p : params)
      if (p.name == name) ref = &p;
    REQUIRE(ref != nullptr);
    REQUIRE(idx < ref->value->size());

    const double keep = (*ref->value)[idx];
    (*ref->value)[idx] = keep + h;
    const double up = mse_loss(net.forward(x, true), target);
    (*ref->value)[idx] = keep - h;
    const double dn = mse_loss(net.forward(x, true), target);
    (*ref->value)[idx] = keep;

    const double fd = (up - dn) / (2.0 * h);
    const double analytic = (*ref->grad)[idx];
    const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-10});
    INFO(name << "[" << idx << "] fd=" << fd << " analytic=" << analytic);
    CHECK(std::abs(fd - analytic) / denom <= 1e-2);
  }
}

TEST_CASE("duplicated batch rows reproduce the single-row gradient") {
  UNet net(tiny_2d());
  net.init(21);
  const Tensor x1 = random_input(1, 1, 8, 8, 22);
  Tensor x2(2, 1, 1, 8, 8);
  std::copy(x1.v.begin(), x1.v.end(), x2.plane(0, 0));
  std::copy(x1.v.begin(), x1.v.end(), x2.plane(1, 0));
  const Tensor t1 = random_input(1, 1, 8, 8, 23);
  Tensor t2(2, 1, 1, 8, 8);
  std::copy(t1.v.begin(), t1.v.end(), t2.plane(0, 0));
  std::copy(t1.v.begin(), t1.v.end(), t2.plane(1, 0));

  net.zero_grads();
  Tensor gy1;
  mse_loss(net.forward(x1, true), t1, &gy1);
  net.backward(gy1);
  std::vector<std::vector<double>> single;
  for (auto& p : net.params())
    if (p.grad) single.push_back(*p.grad);

  net.zero_grads();
  Tensor gy2;
  mse_loss(net.forward(x2, true), t2, &gy2); // mean over 2N elements
  net.backward(gy2);
  std::size_t k = 0;
  for (auto& p : net.params())
    if (p.grad) {
      const auto& dup = *p.grad;
      const auto& one = single[k++];
      REQUIRE(dup.size() == one.size());
      for (std::size_t i = 0; i < dup.size(); ++i)
        CHECK(dup[i] == Approx(one[i]).margin(1e-12));
    }
}

TEST_CASE("inference is bit-deterministic") {
  UNetConfig cfg;
  cfg.dimensionality = 2;
  UNet net(cfg);
  net.init(31);
  Volume v(Dims{1, 32, 32});
  Rng rng(32);
  for (auto& x : v.values()) x = rng.unit();
  const Volume a = net.predict(v);
  const Volume b = net.predict(v);
  CHECK(a == b);
}
