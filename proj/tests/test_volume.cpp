#include <catch2/catch.hpp>

#include "mrsir/rng.hpp"
#include "mrsir/volume.hpp"

using namespace mrsir;

TEST_CASE("brain_mask marks strictly positive voxels") {
  Volume v(Dims{2, 2, 2});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 2 == 0) ? 0.0 : 0.5;
  const BrainMask m = brain_mask(v);
  REQUIRE(m.count() == 4);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(m.test(i) == (i % 2 == 1));
}

TEST_CASE("brain_mask of an all-zero volume is empty") {
  Volume v(Dims{3, 3, 3});
  CHECK(brain_mask(v).count() == 0);
}

TEST_CASE("brain_mask matches a brute-force positivity scan") {
  // Random values in (0,1] on a centered 4x4x4 block of an 8x8x8 grid.
  Volume v(Dims{8, 8, 8});
  Rng rng(42);
  for (std::size_t z = 2; z < 6; ++z)
    for (std::size_t y = 2; y < 6; ++y)
      for (std::size_t x = 2; x < 6; ++x)
        v.at(z, y, x) = 1.0 - rng.unit(); // (0, 1]
  const BrainMask m = brain_mask(v);
  REQUIRE(m.count() == 64);
  std::size_t brute = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    brute += v[i] > 0.0;
    CHECK(m.test(i) == (v[i] > 0.0));
  }
  CHECK(m.count() == brute);
}

TEST_CASE("bounding_geometry center and radius") {
  SECTION("box spanning x:2-9, y:2-9, z:2-5") {
    Volume v(Dims{12, 12, 12});
    for (std::size_t z = 2; z <= 5; ++z)
      for (std::size_t y = 2; y <= 9; ++y)
        for (std::size_t x = 2; x <= 9; ++x) v.at(z, y, x) = 1.0;
    const BoundingGeometry g = bounding_geometry(brain_mask(v));
    CHECK(g.cx == 5.5);
    CHECK(g.cy == 5.5);
    CHECK(g.cz == 3.5);
    CHECK(g.radius == 1.5);
  }
  SECTION("single voxel collapses the box") {
    Volume v(Dims{8, 8, 8});
    v.at(3, 3, 3) = 0.7;
    const BoundingGeometry g = bounding_geometry(brain_mask(v));
    CHECK(g.x.lo == 3);
    CHECK(g.x.hi == 3);
    CHECK(g.cx == 3.0);
    CHECK(g.cy == 3.0);
    CHECK(g.cz == 3.0);
    CHECK(g.radius == 0.0);
  }
  SECTION("full 10x10x10 mask") {
    Volume v(Dims{10, 10, 10}, 1.0);
    const BoundingGeometry g = bounding_geometry(brain_mask(v));
    CHECK(g.cx == 4.5);
    CHECK(g.cy == 4.5);
    CHECK(g.cz == 4.5);
    CHECK(g.radius == 4.5);
  }
  SECTION("empty mask throws") {
    Volume v(Dims{4, 4, 4});
    CHECK_THROWS_AS(bounding_geometry(brain_mask(v)), EmptyBrainMask);
  }
}

TEST_CASE("bounding radius never exceeds half the smallest dimension") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Volume v(Dims{6, 9, 12});
    const int n = 1 + static_cast<int>(rng.uniform_int(0, 30));
    for (int k = 0; k < n; ++k)
      v[static_cast<std::size_t>(rng.uniform_int(
          0, static_cast<std::int64_t>(v.size()) - 1))] = 1.0;
    const BoundingGeometry g = bounding_geometry(brain_mask(v));
    CHECK(g.radius >= 0.0);
    CHECK(g.radius <= 0.5 * 6);
  }
}

TEST_CASE("normalize scales to unit max") {
  SECTION("max 0.8 rescales every value") {
    Volume v(Dims{1, 2, 2}, std::vector<double>{0.2, 0.4, 0.8, 0.0});
    const Volume n = normalize(v);
    CHECK(n[0] == 0.2 / 0.8);
    CHECK(n[1] == 0.5);
    CHECK(n[2] == 1.0);
    CHECK(n[3] == 0.0);
    CHECK(n.max_value() == 1.0);
  }
  SECTION("already normalized input is bitwise unchanged") {
    Volume v(Dims{1, 2, 2}, std::vector<double>{0.25, 1.0, 0.125, 0.0});
    CHECK(normalize(v) == v);
  }
  SECTION("pairwise ratios preserved to 1e-12 relative") {
    Rng rng(3);
    Volume v(Dims{4, 4, 4});
    for (auto& x : v.values()) x = rng.uniform(0.01, 7.0);
    const Volume n = normalize(v);
    CHECK(n.max_value() == 1.0);
    for (std::size_t i = 1; i < v.size(); ++i) {
      const double want = v[i] / v[0];
      const double got = n[i] / n[0];
      CHECK(std::abs(got - want) <= 1e-12 * std::abs(want));
    }
  }
  SECTION("degenerate range") {
    Volume v(Dims{2, 2, 2});
    CHECK_THROWS_AS(normalize(v), DegenerateRange);
  }
  SECTION("idempotent up to 1e-12 relative") {
    Rng rng(11);
    Volume v(Dims{3, 5, 4});
    for (auto& x : v.values()) x = rng.uniform(0.0, 2.5);
    const Volume once = normalize(v);
    const Volume twice = normalize(once);
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(std::abs(twice[i] - once[i]) <=
            1e-12 * std::max(1.0, std::abs(once[i])));
  }
}

TEST_CASE("downsample") {
  SECTION("constant field is preserved (128^3 -> 64^3)") {
    Volume v(Dims{128, 128, 128}, 0.4);
    const Volume d = downsample(v, Dims{64, 64, 64});
    REQUIRE(d.dims() == Dims{64, 64, 64});
    CHECK(d.min_value() == Approx(0.4).margin(1e-15));
    CHECK(d.max_value() == Approx(0.4).margin(1e-15));
  }
  SECTION("identity when target equals source") {
    Rng rng(5);
    Volume v(Dims{4, 6, 8});
    for (auto& x : v.values()) x = rng.unit();
    CHECK(downsample(v, v.dims()) == v);
  }
  SECTION("block means match a brute-force oracle") {
    Rng rng(9);
    Volume v(Dims{4, 4, 4});
    for (auto& x : v.values()) x = rng.unit();
    const Volume d = downsample(v, Dims{2, 2, 2});
    for (std::size_t z = 0; z < 2; ++z)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 2; ++x) {
          double acc = 0.0;
          for (std::size_t bz = 0; bz < 2; ++bz)
            for (std::size_t by = 0; by < 2; ++by)
              for (std::size_t bx = 0; bx < 2; ++bx)
                acc += v.at(2 * z + bz, 2 * y + by, 2 * x + bx);
          CHECK(d.at(z, y, x) == Approx(acc / 8.0).epsilon(1e-12));
        }
  }
  SECTION("non-divisible targets fall back to trilinear") {
    Volume v(Dims{5, 5, 5}, 0.7);
    const Volume d = downsample(v, Dims{3, 3, 3});
    for (std::size_t i = 0; i < d.size(); ++i)
      CHECK(d[i] == Approx(0.7).margin(1e-12));
  }
  SECTION("invalid targets throw") {
    Volume v(Dims{4, 4, 4}, 1.0);
    CHECK_THROWS_AS(downsample(v, Dims{0, 4, 4}), InvalidDims);
    CHECK_THROWS_AS(downsample(v, Dims{4, 5, 4}), InvalidDims);
  }
}

TEST_CASE("extract_slices applies the strict brain-fraction filter") {
  // 64x64 plane: 200 brain pixels is 200/4096 ~ 0.0488 (rejected at 0.05),
  // 205 is ~ 0.05005 (accepted).
  Volume v(Dims{3, 64, 64});
  for (std::size_t i = 0; i < 200; ++i) v.at(0, i / 64, i % 64) = 0.5;
  for (std::size_t i = 0; i < 205; ++i) v.at(1, i / 64, i % 64) = 0.5;
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x) v.at(2, y, x) = 0.3;

  const auto slices = extract_slices(v, 0.05);
  REQUIRE(slices.size() == 2);
  // Ascending z: slice with 205 brain pixels first, then the full one.
  std::size_t brain0 = 0;
  for (double s : slices[0].values()) brain0 += s > 0.0;
  CHECK(brain0 == 205);
  CHECK(slices[1].min_value() == 0.3);
}

TEST_CASE("extract_slices count is non-increasing in the threshold") {
  Rng rng(21);
  Volume v(Dims{12, 16, 16});
  for (auto& x : v.values()) x = rng.unit() < 0.3 ? rng.unit() : 0.0;
  std::size_t prev = extract_slices(v, 0.0).size();
  for (double t : {0.05, 0.1, 0.2, 0.4, 0.8}) {
    const std::size_t n = extract_slices(v, t).size();
    CHECK(n <= prev);
    prev = n;
  }
}
