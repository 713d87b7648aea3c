#include "skelrep/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace skelrep {

double norm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }

void SkeletonTopology::finalize() {
  const int n = joint_count();
  if (n < 1) throw std::invalid_argument("topology: need at least 1 joint");
  if (joint_names.size() != parent.size())
    throw std::invalid_argument("topology: joint_names/parent size mismatch");

  root = -1;
  for (int j = 0; j < n; ++j) {
    if (parent[j] < 0) {
      if (root >= 0) throw std::invalid_argument("topology: multiple roots");
      root = j;
    } else if (parent[j] >= n) {
      throw std::invalid_argument("topology: parent index out of range");
    }
  }
  if (root < 0) throw std::invalid_argument("topology: no root");

  children.assign(n, {});
  for (int j = 0; j < n; ++j)
    if (j != root) children[parent[j]].push_back(j);

  // Reachability from the root doubles as the cycle check.
  std::vector<char> seen(n, 0);
  std::vector<int> stack{root};
  int reached = 0;
  while (!stack.empty()) {
    int j = stack.back();
    stack.pop_back();
    if (seen[j]) throw std::invalid_argument("topology: cycle");
    seen[j] = 1;
    ++reached;
    for (int c : children[j]) stack.push_back(c);
  }
  if (reached != n) throw std::invalid_argument("topology: disconnected joints");

  bones.clear();
  bone_of_joint.assign(n, -1);
  for (int j = 0; j < n; ++j) {
    if (j == root) continue;
    bone_of_joint[j] = static_cast<int>(bones.size());
    bones.emplace_back(parent[j], j);
  }

  for (auto [a, b] : symmetry_pairs)
    if (a < 0 || b < 0 || a >= bone_count() || b >= bone_count())
      throw std::invalid_argument("topology: symmetry pair bone index out of range");
}

int SkeletonTopology::joints_with_child_count(int n) const {
  int k = 0;
  for (const auto& c : children)
    if (static_cast<int>(c.size()) == n) ++k;
  return k;
}

SkeletonTopology SkeletonTopology::default17() {
  SkeletonTopology t;
  t.joint_names = {"pelvis",     "spine",      "thorax",  "neck",      "head",
                   "l_shoulder", "l_elbow",    "l_wrist", "r_shoulder", "r_elbow",
                   "r_wrist",    "l_hip",      "l_knee",  "l_ankle",   "r_hip",
                   "r_knee",     "r_ankle"};
  t.parent = {-1, 0, 1, 2, 3, 2, 5, 6, 2, 8, 9, 0, 11, 12, 0, 14, 15};
  t.finalize();
  // Bone index of joint j is j-1 here (root is joint 0).
  auto bone = [&](int child_joint) { return t.bone_of_joint[child_joint]; };
  t.symmetry_pairs = {
      {bone(11), bone(14)},  // hips
      {bone(12), bone(15)},  // thighs
      {bone(13), bone(16)},  // shins
      {bone(5), bone(8)},    // clavicles
      {bone(6), bone(9)},    // upper arms
      {bone(7), bone(10)},   // forearms
  };
  return t;
}

SkeletonTopology SkeletonTopology::from_json(const nlohmann::json& j) {
  SkeletonTopology t;
  t.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  t.parent = j.at("parent").get<std::vector<int>>();
  t.finalize();
  if (j.contains("symmetry_pairs")) {
    // File format: quadruples (parentA, childA, parentB, childB).
    for (const auto& q : j.at("symmetry_pairs")) {
      if (!q.is_array() || q.size() != 4)
        throw std::invalid_argument("topology: symmetry pair must be an index quadruple");
      int pa = q[0], ca = q[1], pb = q[2], cb = q[3];
      auto check = [&](int p, int c) {
        if (c < 0 || c >= t.joint_count() || t.parent[c] != p)
          throw std::invalid_argument("topology: symmetry quadruple is not a bone");
        return t.bone_of_joint[c];
      };
      t.symmetry_pairs.emplace_back(check(pa, ca), check(pb, cb));
    }
  }
  t.finalize();
  return t;
}

nlohmann::json SkeletonTopology::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (auto [a, b] : symmetry_pairs)
    pairs.push_back({bones[a].first, bones[a].second, bones[b].first, bones[b].second});
  return {{"joint_names", joint_names}, {"parent", parent}, {"symmetry_pairs", pairs}};
}

double Rotation::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

double Rotation::orthonormality_error() const {
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 3; ++k) dot += m[k * 3 + i] * m[k * 3 + j];
      worst = std::max(worst, std::abs(dot - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

double Rotation::angle() const {
  double c = (m[0] + m[4] + m[8] - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n, x /= n, y /= n, z /= n;
  return Rotation{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
                   2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
                   2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
}

Rotation Rotation::about_y(double a) {
  double c = std::cos(a), s = std::sin(a);
  return Rotation{{c, 0, s, 0, 1, 0, -s, 0, c}};
}

Rotation Rotation::about_x(double a) {
  double c = std::cos(a), s = std::sin(a);
  return Rotation{{1, 0, 0, 0, c, -s, 0, s, c}};
}

Rotation Rotation::compose(const Rotation& r) const {
  Rotation out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * r.m[k * 3 + j];
      out.m[i * 3 + j] = s;
    }
  return out;
}

Rotation Rotation::from_euler_zyx(double az, double ay, double ax) {
  double cz = std::cos(az), sz = std::sin(az);
  Rotation rz{{cz, -sz, 0, sz, cz, 0, 0, 0, 1}};
  return rz.compose(about_y(ay)).compose(about_x(ax));
}

Rotation random_rotation(Rng& rng) {
  // Uniform unit quaternion (Shoemake): three uniforms, fixed draw count.
  double u0 = rng.uniform(), u1 = rng.uniform(), u2 = rng.uniform();
  double r0 = std::sqrt(1.0 - u0), r1 = std::sqrt(u0);
  double t1 = 2.0 * M_PI * u1, t2 = 2.0 * M_PI * u2;
  return Rotation::from_quaternion(r0 * std::sin(t1), r0 * std::cos(t1),
                                   r1 * std::sin(t2), r1 * std::cos(t2));
}

std::pair<Pose, Vec3> center_root(const Pose& p, const SkeletonTopology& topo) {
  if (p.joints.size() != static_cast<std::size_t>(topo.joint_count()))
    throw std::invalid_argument("center_root: joint count mismatch");
  Vec3 t = p.joints[topo.root];
  Pose out(p.joints.size());
  for (std::size_t j = 0; j < p.joints.size(); ++j) out.joints[j] = p.joints[j] - t;
  return {out, t};
}

Pose apply_rotation(const Pose& p, const Rotation& r) {
  if (r.orthonormality_error() > 1e-6 || std::abs(r.det() - 1.0) > 1e-6)
    throw std::invalid_argument("apply_rotation: matrix is not a rotation");
  Pose out(p.joints.size());
  for (std::size_t j = 0; j < p.joints.size(); ++j) out.joints[j] = r.apply(p.joints[j]);
  return out;
}

std::vector<double> bone_lengths(const Pose& p, const SkeletonTopology& topo) {
  if (p.joints.size() != static_cast<std::size_t>(topo.joint_count()))
    throw std::invalid_argument("bone_lengths: joint count mismatch");
  std::vector<double> out(topo.bones.size());
  for (std::size_t b = 0; b < topo.bones.size(); ++b)
    out[b] = norm(p.joints[topo.bones[b].second] - p.joints[topo.bones[b].first]);
  return out;
}

std::vector<double> symmetry_residuals(const Pose& p, const SkeletonTopology& topo) {
  auto len = bone_lengths(p, topo);
  std::vector<double> out(topo.symmetry_pairs.size());
  for (std::size_t i = 0; i < topo.symmetry_pairs.size(); ++i)
    out[i] = std::abs(len[topo.symmetry_pairs[i].first] - len[topo.symmetry_pairs[i].second]);
  return out;
}

double mpjpe(const Pose& a, const Pose& b) {
  if (a.joints.size() != b.joints.size() || a.joints.empty())
    throw std::invalid_argument("mpjpe: joint count mismatch");
  double s = 0;
  for (std::size_t j = 0; j < a.joints.size(); ++j) s += norm(a.joints[j] - b.joints[j]);
  return s / static_cast<double>(a.joints.size());
}

std::vector<double> flatten(const Pose& p) {
  std::vector<double> v;
  v.reserve(p.joints.size() * 3);
  for (const auto& j : p.joints) v.insert(v.end(), j.begin(), j.end());
  return v;
}

Pose unflatten(const std::vector<double>& v) {
  if (v.size() % 3 != 0) throw std::invalid_argument("unflatten: size not a multiple of 3");
  Pose p(v.size() / 3);
  for (std::size_t j = 0; j < p.joints.size(); ++j)
    p.joints[j] = {v[3 * j], v[3 * j + 1], v[3 * j + 2]};
  return p;
}

}  // namespace skelrep
