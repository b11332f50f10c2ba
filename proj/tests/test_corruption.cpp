#include <catch2/catch.hpp>

#include <cmath>

#include "mrsir/corruption.hpp"
#include "mrsir/rng.hpp"
#include "mrsir/volume.hpp"

using namespace mrsir;

TEST_CASE("corrupt removes exactly the budgeted voxels") {
  // 8x8x8 all-ones: n_brain = 512, eta = 0.125 -> 64 voxels zeroed.
  Volume v(Dims{8, 8, 8}, 1.0);
  CorruptionSpec spec;
  spec.eta = 0.125;
  spec.s_min = spec.s_max = 1;
  spec.seed = 77;

  const CorruptionOutcome out = corrupt(v, spec);
  CHECK(out.n_brain == 512);
  CHECK(out.n_noise == 64);
  CHECK(out.missing_count() == 64);

  std::size_t zeroed = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (out.missing[i]) {
      ++zeroed;
      CHECK(v[i] > 0.0);              // containment: was brain
      CHECK(out.corrupted[i] == 0.0); // zeroing, not noise
    } else {
      CHECK(out.corrupted[i] == v[i]); // untouched voxels are bit-identical
    }
  }
  CHECK(zeroed == 64);
}

TEST_CASE("corrupt error paths") {
  SECTION("budget of zero") {
    Volume v(Dims{4, 4, 4});
    v.at(1, 1, 1) = 1.0;
    CorruptionSpec spec;
    spec.eta = 0.5; // floor(0.5 * 1) = 0
    CHECK_THROWS_AS(corrupt(v, spec), BudgetTooSmall);
  }
  SECTION("all-zero volume") {
    Volume v(Dims{4, 4, 4});
    CorruptionSpec spec;
    spec.eta = 0.2;
    CHECK_THROWS_AS(corrupt(v, spec), EmptyBrainMask);
  }
  SECTION("invalid spec") {
    Volume v(Dims{4, 4, 4}, 1.0);
    CorruptionSpec spec;
    spec.eta = 1.5;
    CHECK_THROWS_AS(corrupt(v, spec), InvalidSpec);
    spec.eta = 0.2;
    spec.s_min = 0;
    CHECK_THROWS_AS(corrupt(v, spec), InvalidSpec);
  }
  SECTION("iteration cap") {
    Volume v(Dims{8, 8, 8}, 1.0);
    CorruptionSpec spec;
    spec.eta = 0.5;
    spec.s_min = spec.s_max = 1;
    spec.max_iterations = 1;
    CHECK_THROWS_AS(corrupt(v, spec), NonConvergence);
  }
}

TEST_CASE("noise budget follows the floor rule") {
  // 999 brain voxels at eta = 0.1 -> 99.
  Volume v(Dims{10, 10, 10}, 1.0);
  v.at(0, 0, 0) = 0.0;
  CorruptionSpec spec;
  spec.eta = 0.1;
  spec.seed = 5;
  const auto out = corrupt(v, spec);
  CHECK(out.n_brain == 999);
  CHECK(out.n_noise == 99);
  CHECK(out.missing_count() == 99);
}

TEST_CASE("corrupt_slice on a fully-brain 64x64 slice") {
  Volume s(Dims{1, 64, 64}, 0.5);
  CorruptionSpec spec;
  spec.eta = 0.20;
  spec.seed = 9;
  const auto out = corrupt_slice(s, spec);
  CHECK(out.n_noise == 819); // floor(0.20 * 4096)
  CHECK(out.missing_count() == 819);

  SECTION("smallest valid budget removes exactly one pixel") {
    CorruptionSpec tiny = spec;
    tiny.eta = 0.00025; // floor(0.00025 * 4096) = 1
    const auto one = corrupt_slice(s, tiny);
    CHECK(one.n_noise == 1);
    CHECK(one.missing_count() == 1);
  }
  SECTION("same seed gives an identical outcome") {
    const auto again = corrupt_slice(s, spec);
    CHECK(again.corrupted == out.corrupted);
    CHECK(again.missing == out.missing);
  }
  SECTION("3D entry point delegates planar geometry for depth-1 input") {
    const auto via3d = corrupt(s, spec);
    CHECK(via3d.corrupted == out.corrupted);
  }
  SECTION("corrupt_slice rejects 3D input") {
    Volume v3(Dims{4, 8, 8}, 1.0);
    CHECK_THROWS_AS(corrupt_slice(v3, spec), InvalidDims);
  }
}

TEST_CASE("corruption determinism and exactness on irregular volumes") {
  Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    Volume v(Dims{16, 16, 16});
    for (auto& x : v.values())
      x = rng.unit() < 0.6 ? rng.uniform(0.1, 1.0) : 0.0;
    CorruptionSpec spec;
    spec.eta = 0.15;
    spec.seed = 1000 + static_cast<std::uint64_t>(trial);
    const auto a = corrupt(v, spec);
    const auto b = corrupt(v, spec);
    CHECK(a.corrupted == b.corrupted);
    CHECK(a.missing == b.missing);
    CHECK(a.missing_count() ==
          static_cast<std::size_t>(std::floor(0.15 * a.n_brain)));
    for (std::size_t i = 0; i < v.size(); ++i)
      if (a.missing[i]) CHECK(v[i] > 0.0);
  }
}

TEST_CASE("corruption_batch is reproducible and order-equivariant") {
  Rng rng(321);
  std::vector<Volume> vols;
  for (int k = 0; k < 3; ++k) {
    Volume v(Dims{12, 12, 12});
    for (auto& x : v.values()) x = rng.unit() < 0.5 ? rng.unit() : 0.0;
    vols.push_back(std::move(v));
  }
  CorruptionSpec spec;
  spec.eta = 0.1;

  const auto batch = corruption_batch(vols, spec, {1, 2, 3});
  REQUIRE(batch.size() == 3);
  const auto batch2 = corruption_batch(vols, spec, {1, 2, 3});
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(batch[i].corrupted == batch2[i].corrupted);

  // Permuting items with their seeds permutes the outcomes.
  const std::vector<Volume> perm = {vols[2], vols[0], vols[1]};
  const auto pbatch = corruption_batch(perm, spec, {3, 1, 2});
  CHECK(pbatch[0].corrupted == batch[2].corrupted);
  CHECK(pbatch[1].corrupted == batch[0].corrupted);
  CHECK(pbatch[2].corrupted == batch[1].corrupted);

  CHECK_THROWS_AS(corruption_batch(vols, spec, {1, 1, 2}), InvalidSpec);
  CHECK_THROWS_AS(corruption_batch(vols, spec, {1, 2}), InvalidSpec);
}

TEST_CASE("missing-voxel radii are consistent with uniform radial sampling") {
  // Solid cube, point clusters, small budget relative to the sphere: the
  // distance-from-center distribution should be roughly uniform in radius.
  Volume v(Dims{33, 33, 33}, 1.0);
  CorruptionSpec spec;
  spec.eta = 0.025; // floor(0.025 * 35937) = 898
  spec.s_min = spec.s_max = 1;
  spec.seed = 2024;
  const auto out = corrupt(v, spec);

  const double r = 16.0;
  std::size_t bins[3] = {0, 0, 0};
  std::size_t total = 0;
  std::size_t i = 0;
  for (std::size_t z = 0; z < 33; ++z)
    for (std::size_t y = 0; y < 33; ++y)
      for (std::size_t x = 0; x < 33; ++x, ++i) {
        if (!out.missing[i]) continue;
        const double dz = static_cast<double>(z) - 16.0;
        const double dy = static_cast<double>(y) - 16.0;
        const double dx = static_cast<double>(x) - 16.0;
        const double rho = std::sqrt(dx * dx + dy * dy + dz * dz);
        const int bin = std::min(2, static_cast<int>(rho / (r / 3.0)));
        ++bins[bin];
        ++total;
      }
  REQUIRE(total == out.n_noise);
  for (std::size_t b = 0; b < 3; ++b) {
    const double frac =
        static_cast<double>(bins[b]) / static_cast<double>(total);
    CHECK(frac > 0.22);
    CHECK(frac < 0.45);
  }
}
