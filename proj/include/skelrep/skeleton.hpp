#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "skelrep/rng.hpp"

namespace skelrep {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double norm(const Vec3& a);

// Rooted tree over named joints. Bones are (parent, child) pairs listed in
// ascending child-index order; symmetry pairs index into that bone list.
struct SkeletonTopology {
  std::vector<std::string> joint_names;
  std::vector<int> parent;  // -1 at the root
  std::vector<std::pair<int, int>> symmetry_pairs;  // (bone, bone)

  int root = 0;
  std::vector<std::pair<int, int>> bones;       // derived
  std::vector<std::vector<int>> children;       // derived, ascending child index
  std::vector<int> bone_of_joint;               // joint -> bone index, -1 at root

  int joint_count() const { return static_cast<int>(parent.size()); }
  int bone_count() const { return static_cast<int>(bones.size()); }

  // Fills the derived fields and checks tree shape (single root, no cycles).
  void finalize();

  // Children counts histogram entry: how many joints have exactly n children.
  int joints_with_child_count(int n) const;

  // 17-joint human layout: pelvis root, spine chain, two arms off the thorax,
  // two legs off the pelvis. Census: 5 leaf joints, 10 one-child, 2 three-child.
  static SkeletonTopology default17();

  static SkeletonTopology from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Pose {
  std::vector<Vec3> joints;

  Pose() = default;
  explicit Pose(std::size_t n) : joints(n, Vec3{0, 0, 0}) {}
};

// Row-major 3x3 rotation matrix.
struct Rotation {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 apply(const Vec3& p) const {
    return {m[0] * p[0] + m[1] * p[1] + m[2] * p[2],
            m[3] * p[0] + m[4] * p[1] + m[5] * p[2],
            m[6] * p[0] + m[7] * p[1] + m[8] * p[2]};
  }
  Rotation transposed() const {
    return Rotation{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
  double det() const;
  // max |R^T R - I| entry
  double orthonormality_error() const;
  // Rotation angle in [0, pi].
  double angle() const;

  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation about_y(double angle);
  static Rotation about_x(double angle);
  // Intrinsic ZYX composition used by the pose sampler.
  static Rotation from_euler_zyx(double az, double ay, double ax);
  Rotation compose(const Rotation& rhs) const;  // this * rhs
};

// Uniform over SO(3) via a unit random quaternion (3 uniform draws).
Rotation random_rotation(Rng& rng);

// Translates so the root lands at the origin; returns the removed translation.
std::pair<Pose, Vec3> center_root(const Pose& p, const SkeletonTopology& topo);

// Rotates every joint about the origin. Rejects non-rotations (1e-6 tolerance
// on orthonormality and determinant).
Pose apply_rotation(const Pose& p, const Rotation& r);

// Euclidean length per bone, in bone-list order.
std::vector<double> bone_lengths(const Pose& p, const SkeletonTopology& topo);

// |len(bone_a) - len(bone_b)| per symmetry pair.
std::vector<double> symmetry_residuals(const Pose& p, const SkeletonTopology& topo);

// Mean per-joint Euclidean distance. Poses must have equal joint counts.
double mpjpe(const Pose& a, const Pose& b);

// Row-major [x0,y0,z0, x1,y1,z1, ...] view used to feed poses into graphs.
std::vector<double> flatten(const Pose& p);
Pose unflatten(const std::vector<double>& v);

}  // namespace skelrep
