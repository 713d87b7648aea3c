#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "skelrep/rng.hpp"
#include "skelrep/skeleton.hpp"

namespace skelrep {

// Forward-kinematics pose generator over a fixed body template: per-joint
// rest directions (in the parent frame), bone lengths, and Euler angle
// ranges. A joint's rotation orients the bones leaving that joint, so every
// sampled pose has exactly the template's bone lengths.
class PoseSampler {
 public:
  // 17-joint human template, y up, lengths in meters. Torso (pelvis to
  // thorax) is 0.40 m; symmetric limbs share lengths and angle ranges.
  static PoseSampler default_human();

  const SkeletonTopology& topology() const { return topo_; }
  double torso_length() const { return torso_; }
  const std::vector<double>& lengths() const { return len_; }

  // Rest pose (all angles zero), root at the origin.
  Pose template_pose() const;

  // Euler zyx angles per joint, each axis uniform in its range.
  std::vector<Vec3> sample_angles(Rng& rng) const;

  // Forward kinematics for explicit angles.
  Pose posed(const std::vector<Vec3>& angles, const Vec3& root_pos) const;

  // Random pose, root at the origin.
  Pose sample(Rng& rng) const;

 private:
  SkeletonTopology topo_;
  std::vector<Vec3> dir_;   // bone direction from parent, unit, unused at root
  std::vector<double> len_; // bone length, 0 at root
  std::vector<Vec3> lo_, hi_;
  double torso_ = 0;
};

// --- pose denoising corpus ---------------------------------------------------

struct CorruptionSpec {
  int k_min = 1, k_max = 5;             // joints moved per pose (root included)
  double disp_min_torso = 0.3;          // displacement range as torso multiples
  double disp_max_torso = 1.0;
};

// Moves k random joints (k uniform in [k_min, k_max], joints distinct) by a
// uniform-direction offset whose length is uniform in
// [disp_min, disp_max] * torso_len. The result is not re-centered, so a moved
// root stays moved. Optionally reports which joints moved and how far.
Pose corrupt_pose(const Pose& clean, double torso_len, const CorruptionSpec& spec, Rng& rng,
                  std::vector<int>* moved = nullptr, std::vector<double>* magnitudes = nullptr);

struct PoseRecord {
  Pose clean;
  Pose corrupt;
  std::vector<int> moved;  // ascending joint indices
};

struct PoseDataset {
  nlohmann::json config;
  std::vector<PoseRecord> records;
};

// Record `index` of the corpus for `seed`. Each record runs on its own
// substream, so the corpus is independent of generation order and thread
// count.
PoseRecord make_pose_record(const PoseSampler& sampler, const CorruptionSpec& spec,
                            std::uint64_t seed, std::uint64_t index);

// Generates n records (OpenMP across records unless threads == 1) and, when
// path is non-empty, writes JSONL: one header line carrying config_echo, then
// one record per line. Identical seeds give byte-identical files at any
// thread count.
PoseDataset generate_pose_dataset(const PoseSampler& sampler, int n, std::uint64_t seed,
                                  const CorruptionSpec& spec, const nlohmann::json& config_echo,
                                  const std::string& path, int threads);
PoseDataset load_pose_dataset(const std::string& path);

// --- action sequence corpus --------------------------------------------------

// Three motion archetypes with distinct pose dynamics. Every class drifts
// horizontally with a random heading; only the squat moves the root
// vertically.
int action_class_count();
const char* action_class_name(int label);  // walk_swing, arm_raise, squat

struct ActionSpec {
  int seq_len = 24;
  int train_per_class = 40;
  int test_per_class = 20;
  // View azimuths (degrees, about y) per split; disjoint by default so
  // classifiers are scored across unseen viewpoints. Tilt is a small random
  // rotation about x.
  double train_azimuth_lo = 0, train_azimuth_hi = 120;
  double test_azimuth_lo = 180, test_azimuth_hi = 300;
  double tilt_max = 0.15;
};

// World-frame sequence (translation included, no view rotation applied).
std::vector<Pose> make_action_frames(const PoseSampler& sampler, int label, int len, Rng& rng);

struct ActionSequence {
  int label = 0;
  bool train_split = true;
  double azimuth_deg = 0;
  std::vector<Pose> frames;  // world frames after view rotation
};

struct ActionDataset {
  nlohmann::json config;
  std::vector<ActionSequence> seqs;
};

ActionSequence make_action_sequence(const PoseSampler& sampler, const ActionSpec& spec, int label,
                                    bool train_split, std::uint64_t seed, std::uint64_t index);

// Train sequences first (class-major), then test. Same determinism contract
// as generate_pose_dataset.
ActionDataset generate_action_dataset(const PoseSampler& sampler, const ActionSpec& spec,
                                      std::uint64_t seed, const nlohmann::json& config_echo,
                                      const std::string& path, int threads);
ActionDataset load_action_dataset(const std::string& path);

}  // namespace skelrep
