#include "skelrep/synth.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace skelrep {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

Vec3 scaled(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

double smoothstep01(double u) {
  if (u <= 0) return 0;
  if (u >= 1) return 1;
  return u * u * (3 - 2 * u);
}

void check_open(const std::ofstream& f, const std::string& path) {
  if (!f) throw std::runtime_error("cannot write " + path);
}

nlohmann::json parse_line(const std::string& line, const std::string& path, std::size_t lineno) {
  try {
    return nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

nlohmann::json read_header(std::istream& in, const std::string& path, const char* kind) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
  auto h = parse_line(line, path, 1);
  if (!h.contains("kind") || h["kind"] != kind)
    throw std::runtime_error(path + ": not a " + std::string(kind) + " file");
  if (!h.contains("format_version") || h["format_version"] != 1)
    throw std::runtime_error(path + ": unsupported format_version");
  return h;
}

std::vector<double> pose_array(const nlohmann::json& j, const char* key, const std::string& path,
                               std::size_t lineno) {
  if (!j.contains(key))
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing " + key);
  auto v = j[key].get<std::vector<double>>();
  if (v.empty() || v.size() % 3 != 0)
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad pose length");
  return v;
}

}  // namespace

PoseSampler PoseSampler::default_human() {
  PoseSampler s;
  s.topo_ = SkeletonTopology::default17();
  int J = s.topo_.joint_count();
  s.dir_.assign(J, Vec3{0, 0, 0});
  s.len_.assign(J, 0.0);
  s.lo_.assign(J, Vec3{0, 0, 0});
  s.hi_.assign(J, Vec3{0, 0, 0});

  auto bone = [&](int j, Vec3 dir, double len) { s.dir_[j] = dir; s.len_[j] = len; };
  auto range = [&](int j, Vec3 lo, Vec3 hi) { s.lo_[j] = lo; s.hi_[j] = hi; };

  // Spine chain points up.
  bone(1, {0, 1, 0}, 0.20);   // spine
  bone(2, {0, 1, 0}, 0.20);   // thorax
  bone(3, {0, 1, 0}, 0.15);   // neck
  bone(4, {0, 1, 0}, 0.12);   // head
  // Arms: clavicles sideways, upper arm and forearm hang down at rest.
  bone(5, {1, 0, 0}, 0.18);
  bone(6, {0, -1, 0}, 0.28);
  bone(7, {0, -1, 0}, 0.25);
  bone(8, {-1, 0, 0}, 0.18);
  bone(9, {0, -1, 0}, 0.28);
  bone(10, {0, -1, 0}, 0.25);
  // Legs: hips sideways, thigh and shin down.
  bone(11, {1, 0, 0}, 0.11);
  bone(12, {0, -1, 0}, 0.42);
  bone(13, {0, -1, 0}, 0.40);
  bone(14, {-1, 0, 0}, 0.11);
  bone(15, {0, -1, 0}, 0.42);
  bone(16, {0, -1, 0}, 0.40);

  // Euler zyx ranges for the rotation held at each joint (it orients the
  // bones leaving that joint, so leaves keep zero ranges). Poses are stored
  // in a canonical heading: viewpoint variation comes from the whole-pose
  // rotations applied downstream (Siamese stream, action views), so the
  // sampler spends its variation budget on articulation, not on spinning
  // the body.
  range(0, {-0.12, -0.22, -0.12}, {0.12, 0.22, 0.12}); // pelvis: bounded yaw
  range(1, {-0.15, -0.15, -0.15}, {0.15, 0.15, 0.15}); // spine
  range(2, {-0.15, -0.15, -0.15}, {0.15, 0.15, 0.15}); // thorax
  range(3, {-0.22, -0.22, -0.22}, {0.22, 0.22, 0.22}); // neck
  range(5, {-0.6, -0.3, -0.6}, {0.6, 0.3, 0.6});       // shoulders
  range(8, {-0.6, -0.3, -0.6}, {0.6, 0.3, 0.6});
  range(6, {0, -0.15, -1.25}, {0, 0.15, 0});           // elbows: one-way flexion
  range(9, {0, -0.15, -1.25}, {0, 0.15, 0});
  range(11, {-0.28, -0.22, -0.6}, {0.28, 0.22, 0.28}); // hips
  range(14, {-0.28, -0.22, -0.6}, {0.28, 0.22, 0.28});
  range(12, {0, 0, 0}, {0, 0, 1.2});                   // knees: one-way flexion
  range(15, {0, 0, 0}, {0, 0, 1.2});

  s.torso_ = s.len_[1] + s.len_[2];
  for (int j = 0; j < J; ++j)
    if (s.topo_.parent[j] >= j) throw std::logic_error("template joints not in parent order");
  return s;
}

Pose PoseSampler::template_pose() const {
  return posed(std::vector<Vec3>(topo_.joint_count(), Vec3{0, 0, 0}), {0, 0, 0});
}

std::vector<Vec3> PoseSampler::sample_angles(Rng& rng) const {
  std::vector<Vec3> a(topo_.joint_count());
  for (std::size_t j = 0; j < a.size(); ++j)
    for (int k = 0; k < 3; ++k) a[j][k] = rng.uniform(lo_[j][k], hi_[j][k]);
  return a;
}

Pose PoseSampler::posed(const std::vector<Vec3>& angles, const Vec3& root_pos) const {
  int J = topo_.joint_count();
  if (static_cast<int>(angles.size()) != J)
    throw std::invalid_argument("posed: angle count mismatch");
  Pose p(J);
  std::vector<Rotation> frame(J);
  for (int j = 0; j < J; ++j) {
    Rotation local = Rotation::from_euler_zyx(angles[j][0], angles[j][1], angles[j][2]);
    int par = topo_.parent[j];
    if (par < 0) {
      frame[j] = local;
      p.joints[j] = root_pos;
    } else {
      frame[j] = frame[par].compose(local);
      p.joints[j] = p.joints[par] + frame[par].apply(scaled(dir_[j], len_[j]));
    }
  }
  return p;
}

Pose PoseSampler::sample(Rng& rng) const { return posed(sample_angles(rng), {0, 0, 0}); }

Pose corrupt_pose(const Pose& clean, double torso_len, const CorruptionSpec& spec, Rng& rng,
                  std::vector<int>* moved, std::vector<double>* magnitudes) {
  int J = static_cast<int>(clean.joints.size());
  if (spec.k_min < 1 || spec.k_max < spec.k_min || spec.k_max > J)
    throw std::invalid_argument("corrupt_pose: bad joint count range");
  if (spec.disp_min_torso <= 0 || spec.disp_max_torso < spec.disp_min_torso)
    throw std::invalid_argument("corrupt_pose: bad displacement range");

  int k = spec.k_min + static_cast<int>(rng.uniform_int(
              static_cast<std::uint64_t>(spec.k_max - spec.k_min + 1)));
  // Partial Fisher-Yates for k distinct joints, then ascending order.
  std::vector<int> idx(J);
  for (int j = 0; j < J; ++j) idx[j] = j;
  for (int i = 0; i < k; ++i) {
    int r = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(J - i)));
    std::swap(idx[i], idx[r]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());

  Pose out = clean;
  if (moved) moved->clear();
  if (magnitudes) magnitudes->clear();
  for (int j : idx) {
    double d = torso_len * rng.uniform(spec.disp_min_torso, spec.disp_max_torso);
    double z = rng.uniform(-1.0, 1.0);
    double phi = rng.uniform(0.0, 2 * kPi);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    Vec3 dir{r * std::cos(phi), r * std::sin(phi), z};
    out.joints[j] = out.joints[j] + scaled(dir, d);
    if (moved) moved->push_back(j);
    if (magnitudes) magnitudes->push_back(d);
  }
  return out;
}

PoseRecord make_pose_record(const PoseSampler& sampler, const CorruptionSpec& spec,
                            std::uint64_t seed, std::uint64_t index) {
  Rng rng = Rng::substream(seed, index);
  PoseRecord r;
  r.clean = sampler.sample(rng);
  r.corrupt = corrupt_pose(r.clean, sampler.torso_length(), spec, rng, &r.moved, nullptr);
  return r;
}

PoseDataset generate_pose_dataset(const PoseSampler& sampler, int n, std::uint64_t seed,
                                  const CorruptionSpec& spec, const nlohmann::json& config_echo,
                                  const std::string& path, int threads) {
  if (n <= 0) throw std::invalid_argument("generate_pose_dataset: n must be positive");
  PoseDataset ds;
  ds.config = config_echo;
  ds.records.resize(n);
  if (threads == 1) {
    for (int i = 0; i < n; ++i) ds.records[i] = make_pose_record(sampler, spec, seed, i);
  } else {
    int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int i = 0; i < n; ++i) ds.records[i] = make_pose_record(sampler, spec, seed, i);
  }
  if (!path.empty()) {
    std::ofstream f(path);
    check_open(f, path);
    nlohmann::json header = {{"kind", "pose_dataset"},
                             {"format_version", 1},
                             {"count", n},
                             {"config", config_echo}};
    f << header.dump() << "\n";
    for (const auto& r : ds.records) {
      nlohmann::json j = {
          {"clean", flatten(r.clean)}, {"corrupt", flatten(r.corrupt)}, {"moved", r.moved}};
      f << j.dump() << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
  }
  return ds;
}

PoseDataset load_pose_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  auto header = read_header(f, path, "pose_dataset");
  PoseDataset ds;
  ds.config = header.value("config", nlohmann::json::object());
  std::size_t count = header.at("count").get<std::size_t>();
  std::string line;
  std::size_t lineno = 1, dims = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto j = parse_line(line, path, lineno);
    PoseRecord r;
    auto cv = pose_array(j, "clean", path, lineno);
    auto xv = pose_array(j, "corrupt", path, lineno);
    if (dims == 0) dims = cv.size();
    if (cv.size() != dims || xv.size() != dims)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": inconsistent pose size");
    r.clean = unflatten(cv);
    r.corrupt = unflatten(xv);
    r.moved = j.value("moved", std::vector<int>{});
    ds.records.push_back(std::move(r));
  }
  if (ds.records.size() != count)
    throw std::runtime_error(path + ": header count " + std::to_string(count) + " but " +
                             std::to_string(ds.records.size()) + " records");
  return ds;
}

int action_class_count() { return 3; }

const char* action_class_name(int label) {
  switch (label) {
    case 0: return "walk_swing";
    case 1: return "arm_raise";
    case 2: return "squat";
    default: throw std::out_of_range("action label");
  }
}

std::vector<Pose> make_action_frames(const PoseSampler& sampler, int label, int len, Rng& rng) {
  if (label < 0 || label >= action_class_count()) throw std::out_of_range("action label");
  if (len < 2) throw std::invalid_argument("sequence length must be at least 2");

  // Per-sequence style: a mild random stance plus a shared horizontal drift,
  // so translation alone does not separate the walk from the arm raise.
  auto base = sampler.sample_angles(rng);
  for (auto& a : base) a = scaled(a, 0.15);
  double speed = rng.uniform(0.0, 0.02);
  double heading = rng.uniform(0.0, 2 * kPi);
  Vec3 drift{speed * std::sin(heading), 0, speed * std::cos(heading)};

  struct Walk { double f, phi, arm, leg, knee; };
  struct Raise { double amount, elbow; };
  struct Squat { double depth, f; };
  Walk w{};
  Raise a{};
  Squat q{};
  if (label == 0)
    w = {rng.uniform(0.06, 0.10), rng.uniform(0.0, 2 * kPi), rng.uniform(0.3, 0.6),
         rng.uniform(0.4, 0.7), rng.uniform(0.5, 0.9)};
  else if (label == 1)
    a = {rng.uniform(1.8, 2.6), rng.uniform(0.1, 0.5)};
  else
    q = {rng.uniform(0.15, 0.30), rng.uniform(0.04, 0.08)};

  std::vector<Pose> frames;
  frames.reserve(len);
  for (int t = 0; t < len; ++t) {
    auto ang = base;
    Vec3 root = scaled(drift, static_cast<double>(t));
    if (label == 0) {
      double th = 2 * kPi * w.f * t + w.phi;
      double s = std::sin(th);
      ang[5][2] += w.arm * s;            // left/right arms counterswing
      ang[8][2] -= w.arm * s;
      ang[11][2] -= w.leg * s;           // legs antiphase with same-side arm
      ang[14][2] += w.leg * s;
      ang[12][2] += w.knee * (1 + std::cos(th)) / 2;
      ang[15][2] += w.knee * (1 - std::cos(th)) / 2;
      ang[1][0] += 0.05 * s;
    } else if (label == 1) {
      double s = smoothstep01(static_cast<double>(t) / (len - 1));
      ang[5][0] += a.amount * s;         // lateral raise, mirrored
      ang[8][0] -= a.amount * s;
      ang[6][2] -= a.elbow * s;
      ang[9][2] -= a.elbow * s;
    } else {
      double c = (1 - std::cos(2 * kPi * q.f * t)) / 2;
      double bend = 4.0 * q.depth;
      root[1] -= q.depth * c;
      ang[11][2] -= bend * c;
      ang[14][2] -= bend * c;
      ang[12][2] += 2 * bend * c;
      ang[15][2] += 2 * bend * c;
      ang[5][2] -= 0.5 * c;              // arms forward for balance
      ang[8][2] -= 0.5 * c;
    }
    frames.push_back(sampler.posed(ang, root));
  }
  return frames;
}

ActionSequence make_action_sequence(const PoseSampler& sampler, const ActionSpec& spec, int label,
                                    bool train_split, std::uint64_t seed, std::uint64_t index) {
  Rng rng = Rng::substream(seed ^ fnv1a("actions"), index);
  ActionSequence s;
  s.label = label;
  s.train_split = train_split;
  s.frames = make_action_frames(sampler, label, spec.seq_len, rng);
  double lo = train_split ? spec.train_azimuth_lo : spec.test_azimuth_lo;
  double hi = train_split ? spec.train_azimuth_hi : spec.test_azimuth_hi;
  s.azimuth_deg = rng.uniform(lo, hi);
  double tilt = rng.uniform(-spec.tilt_max, spec.tilt_max);
  Rotation view = Rotation::about_y(s.azimuth_deg * kPi / 180.0).compose(Rotation::about_x(tilt));
  for (auto& fr : s.frames) fr = apply_rotation(fr, view);
  return s;
}

ActionDataset generate_action_dataset(const PoseSampler& sampler, const ActionSpec& spec,
                                      std::uint64_t seed, const nlohmann::json& config_echo,
                                      const std::string& path, int threads) {
  if (spec.train_per_class < 1 || spec.test_per_class < 1)
    throw std::invalid_argument("generate_action_dataset: per-class counts must be positive");
  std::vector<std::pair<int, bool>> plan;  // (label, train_split), train block first
  for (int c = 0; c < action_class_count(); ++c)
    for (int i = 0; i < spec.train_per_class; ++i) plan.emplace_back(c, true);
  for (int c = 0; c < action_class_count(); ++c)
    for (int i = 0; i < spec.test_per_class; ++i) plan.emplace_back(c, false);

  ActionDataset ds;
  ds.config = config_echo;
  ds.seqs.resize(plan.size());
  int n = static_cast<int>(plan.size());
  if (threads == 1) {
    for (int i = 0; i < n; ++i)
      ds.seqs[i] = make_action_sequence(sampler, spec, plan[i].first, plan[i].second, seed, i);
  } else {
    int nt = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (int i = 0; i < n; ++i)
      ds.seqs[i] = make_action_sequence(sampler, spec, plan[i].first, plan[i].second, seed, i);
  }

  if (!path.empty()) {
    std::ofstream f(path);
    check_open(f, path);
    nlohmann::json header = {{"kind", "action_dataset"},
                             {"format_version", 1},
                             {"count", n},
                             {"classes", action_class_count()},
                             {"config", config_echo}};
    f << header.dump() << "\n";
    for (const auto& s : ds.seqs) {
      nlohmann::json fr = nlohmann::json::array();
      for (const auto& p : s.frames) fr.push_back(flatten(p));
      nlohmann::json j = {{"label", s.label},
                          {"split", s.train_split ? "train" : "test"},
                          {"azimuth_deg", s.azimuth_deg},
                          {"frames", fr}};
      f << j.dump() << "\n";
    }
    if (!f) throw std::runtime_error("write failed: " + path);
  }
  return ds;
}

ActionDataset load_action_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  auto header = read_header(f, path, "action_dataset");
  ActionDataset ds;
  ds.config = header.value("config", nlohmann::json::object());
  std::size_t count = header.at("count").get<std::size_t>();
  std::string line;
  std::size_t lineno = 1, dims = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto j = parse_line(line, path, lineno);
    ActionSequence s;
    s.label = j.at("label").get<int>();
    if (s.label < 0 || s.label >= action_class_count())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad label");
    std::string split = j.at("split").get<std::string>();
    if (split != "train" && split != "test")
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad split");
    s.train_split = split == "train";
    s.azimuth_deg = j.at("azimuth_deg").get<double>();
    for (const auto& fr : j.at("frames")) {
      auto v = fr.get<std::vector<double>>();
      if (v.empty() || v.size() % 3 != 0)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad frame length");
      if (dims == 0) dims = v.size();
      if (v.size() != dims)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": inconsistent frame");
      s.frames.push_back(unflatten(v));
    }
    if (s.frames.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty sequence");
    ds.seqs.push_back(std::move(s));
  }
  if (ds.seqs.size() != count)
    throw std::runtime_error(path + ": header count mismatch");
  return ds;
}

}  // namespace skelrep
