#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include <json.hpp>

#include "skelrep/skeleton.hpp"

using namespace skelrep;

TEST_CASE("default17 tree shape") {
  auto t = SkeletonTopology::default17();
  CHECK(t.joint_count() == 17);
  CHECK(t.root == 0);
  CHECK(t.bone_count() == 16);

  // Degree census the whole architecture depends on.
  CHECK(t.joints_with_child_count(0) == 5);
  CHECK(t.joints_with_child_count(1) == 10);
  CHECK(t.joints_with_child_count(3) == 2);
  CHECK(t.joints_with_child_count(2) == 0);

  // Bones are exactly (parent(j), j) for non-root j, ascending child order.
  for (int b = 0; b < t.bone_count(); ++b) {
    auto [p, c] = t.bones[b];
    CHECK(t.parent[c] == p);
    if (b > 0) CHECK(t.bones[b - 1].second < c);
  }
  CHECK(t.symmetry_pairs.size() == 6);

  // Both-direction node census: leaves-to-root pass has 5 zero-input-child
  // nodes + the reverse pass has 1 (the root); one-neighbor nodes 10+16.
  int l0 = t.joints_with_child_count(0) + 1;
  int l1 = t.joints_with_child_count(1) + (t.joint_count() - 1);
  int l3 = t.joints_with_child_count(3);
  CHECK(l0 == 6);
  CHECK(l1 == 26);
  CHECK(l3 == 2);
}

TEST_CASE("topology validation rejects malformed trees") {
  SkeletonTopology t;
  t.joint_names = {"a", "b", "c"};
  t.parent = {-1, 0, 1};
  CHECK_NOTHROW(t.finalize());

  t.parent = {-1, 2, 1};  // cycle between 1 and 2
  CHECK_THROWS(t.finalize());

  t.parent = {-1, -1, 0};  // two roots
  CHECK_THROWS(t.finalize());

  t.parent = {-1, 0, 5};  // out of range
  CHECK_THROWS(t.finalize());
}

TEST_CASE("topology json round trip") {
  auto t = SkeletonTopology::default17();
  auto j = t.to_json();
  auto t2 = SkeletonTopology::from_json(j);
  CHECK(t2.joint_names == t.joint_names);
  CHECK(t2.parent == t.parent);
  CHECK(t2.symmetry_pairs == t.symmetry_pairs);

  // Quadruples that are not bones are rejected.
  auto bad = j;
  bad["symmetry_pairs"][0] = {0, 5, 0, 14};  // (0,5) is not a bone (parent of 5 is 2)
  CHECK_THROWS(SkeletonTopology::from_json(bad));
}

TEST_CASE("center_root") {
  auto t = SkeletonTopology::default17();
  Pose p(17);
  Rng rng(7);
  for (auto& j : p.joints) j = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

  auto [c, shift] = center_root(p, t);
  CHECK(shift[0] == p.joints[0][0]);
  CHECK(c.joints[0][0] == 0.0);
  CHECK(c.joints[0][1] == 0.0);
  CHECK(c.joints[0][2] == 0.0);
  for (int j = 0; j < 17; ++j)
    for (int k = 0; k < 3; ++k)
      CHECK(c.joints[j][k] == doctest::Approx(p.joints[j][k] - p.joints[0][k]).epsilon(1e-15));
}

TEST_CASE("apply_rotation basics") {
  auto t = SkeletonTopology::default17();
  Pose p(17);
  Rng rng(11);
  for (auto& j : p.joints) j = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

  SUBCASE("identity is exact") {
    auto q = apply_rotation(p, Rotation{});
    for (int j = 0; j < 17; ++j)
      for (int k = 0; k < 3; ++k) CHECK(q.joints[j][k] == p.joints[j][k]);
  }

  SUBCASE("half turn about z negates x and y") {
    auto r = Rotation::from_euler_zyx(std::numbers::pi, 0, 0);
    auto q = apply_rotation(p, r);
    for (int j = 0; j < 17; ++j) {
      CHECK(q.joints[j][0] == doctest::Approx(-p.joints[j][0]).epsilon(1e-12));
      CHECK(q.joints[j][1] == doctest::Approx(-p.joints[j][1]).epsilon(1e-12));
      CHECK(q.joints[j][2] == doctest::Approx(p.joints[j][2]).epsilon(1e-12));
    }
  }

  SUBCASE("R then R^T returns the pose") {
    auto r = random_rotation(rng);
    auto q = apply_rotation(apply_rotation(p, r), r.transposed());
    for (int j = 0; j < 17; ++j)
      for (int k = 0; k < 3; ++k)
        CHECK(q.joints[j][k] == doctest::Approx(p.joints[j][k]).epsilon(1e-12));
  }

  SUBCASE("non-rotations are rejected") {
    Rotation bad;
    bad.m[0] = 2.0;
    CHECK_THROWS(apply_rotation(p, bad));
    Rotation mirror;  // det -1
    mirror.m[0] = -1.0;
    CHECK_THROWS(apply_rotation(p, mirror));
  }
}

TEST_CASE("random_rotation group membership over 10k samples") {
  Rng rng(123);
  for (int i = 0; i < 10000; ++i) {
    auto r = random_rotation(rng);
    REQUIRE(r.orthonormality_error() < 1e-9);
    REQUIRE(std::abs(r.det() - 1.0) < 1e-9);
  }
}

TEST_CASE("random_rotation is deterministic per seed") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    auto ra = random_rotation(a), rb = random_rotation(b);
    for (int k = 0; k < 9; ++k) CHECK(ra.m[k] == rb.m[k]);
  }
}

TEST_CASE("random_rotation uniformity: entry means and angle density") {
  // Under Haar measure E[R_ij] = 0; the rotation angle has density
  // (1 - cos a) / pi on [0, pi].
  Rng rng(2024);
  const int n = 10000;
  std::array<double, 9> mean{};
  const int bins = 10;
  std::array<int, bins> hist{};
  for (int i = 0; i < n; ++i) {
    auto r = random_rotation(rng);
    for (int k = 0; k < 9; ++k) mean[k] += r.m[k];
    int b = std::min(bins - 1, static_cast<int>(r.angle() / std::numbers::pi * bins));
    hist[b]++;
  }
  for (int k = 0; k < 9; ++k) CHECK(std::abs(mean[k] / n) < 0.02);

  // Exact bin mass: integral of (1-cos a)/pi over the bin is
  // ((a - sin a)/pi) evaluated at the edges.
  auto cdf = [](double a) { return (a - std::sin(a)) / std::numbers::pi; };
  for (int b = 0; b < bins; ++b) {
    double lo = std::numbers::pi * b / bins, hi = std::numbers::pi * (b + 1) / bins;
    double pexp = cdf(hi) - cdf(lo);
    double sigma = std::sqrt(n * pexp * (1 - pexp));
    CHECK(std::abs(hist[b] - n * pexp) < 3.5 * sigma);
  }
}

TEST_CASE("bone_lengths") {
  SkeletonTopology chain;
  chain.joint_names = {"a", "b"};
  chain.parent = {-1, 0};
  chain.finalize();

  Pose p(2);
  p.joints[1] = {1, 0, 0};
  auto len = bone_lengths(p, chain);
  REQUIRE(len.size() == 1);
  CHECK(len[0] == 1.0);

  // Scaling the pose scales lengths.
  Pose q(2);
  q.joints[1] = {2, 0, 0};
  CHECK(bone_lengths(q, chain)[0] == 2.0);
}

TEST_CASE("bone_lengths and symmetry_residuals are rigid-motion invariant") {
  auto t = SkeletonTopology::default17();
  Rng rng(5);
  Pose p(17);
  for (auto& j : p.joints) j = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};

  auto r = random_rotation(rng);
  auto q = apply_rotation(p, r);
  Vec3 shift{0.3, -0.2, 1.1};
  for (auto& j : q.joints) j = j + shift;

  auto la = bone_lengths(p, t), lb = bone_lengths(q, t);
  for (std::size_t i = 0; i < la.size(); ++i)
    CHECK(la[i] == doctest::Approx(lb[i]).epsilon(1e-12));

  auto sa = symmetry_residuals(p, t), sb = symmetry_residuals(q, t);
  for (std::size_t i = 0; i < sa.size(); ++i)
    CHECK(sa[i] == doctest::Approx(sb[i]).epsilon(1e-12));
}

TEST_CASE("symmetry_residuals localizes an asymmetric stretch") {
  auto t = SkeletonTopology::default17();
  // Symmetric rig: both forearms length 0.25 along x.
  Pose p(17);
  Rng rng(9);
  for (int j = 1; j < 17; ++j) {
    auto dir = Vec3{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    p.joints[j] = p.joints[t.parent[j]] + (0.3 / norm(dir)) * dir;
  }
  // Force both forearms to the same length, then stretch the left by 0.1.
  p.joints[7] = p.joints[6] + Vec3{0.25, 0, 0};
  p.joints[10] = p.joints[9] + Vec3{0.25, 0, 0};
  // Rebuild all other pairs symmetric by copying lengths: simplest is to check
  // only the forearm pair's residual delta.
  auto before = symmetry_residuals(p, t);
  p.joints[7] = p.joints[6] + Vec3{0.35, 0, 0};
  auto after = symmetry_residuals(p, t);
  CHECK(before[5] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(after[5] == doctest::Approx(0.1).epsilon(1e-12));
  for (int i = 0; i < 5; ++i) CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-12));
}

TEST_CASE("mpjpe") {
  auto t = SkeletonTopology::default17();
  (void)t;
  Pose a(17), b(17);
  CHECK(mpjpe(a, b) == 0.0);

  // One joint off by a 3-4-5 triangle leg: distance 5, mean 5/17.
  b.joints[4] = {3, 0, 4};
  CHECK(mpjpe(a, b) == doctest::Approx(5.0 / 17.0).epsilon(1e-15));

  SUBCASE("rotation invariance") {
    Rng rng(3);
    Pose p(17), q(17);
    for (auto& j : p.joints) j = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    for (auto& j : q.joints) j = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto r = random_rotation(rng);
    CHECK(mpjpe(apply_rotation(p, r), apply_rotation(q, r)) ==
          doctest::Approx(mpjpe(p, q)).epsilon(1e-12));
  }

  SUBCASE("metric properties on random triples") {
    Rng rng(17);
    for (int iter = 0; iter < 25; ++iter) {
      Pose p(17), q(17), r(17);
      for (auto& j : p.joints) j = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      for (auto& j : q.joints) j = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      for (auto& j : r.joints) j = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      CHECK(mpjpe(p, q) == doctest::Approx(mpjpe(q, p)).epsilon(1e-15));
      CHECK(mpjpe(p, p) == 0.0);
      CHECK(mpjpe(p, r) <= mpjpe(p, q) + mpjpe(q, r) + 1e-12);
      CHECK(mpjpe(p, q) > 0.0);
    }
  }

  SUBCASE("joint count mismatch is an error") {
    Pose small(5);
    CHECK_THROWS(mpjpe(a, small));
  }
}
