#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "skelrep/synth.hpp"

using namespace skelrep;
namespace fs = std::filesystem;

static std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

static std::string tmp(const char* name) { return (fs::temp_directory_path() / name).string(); }

TEST_CASE("template pose matches hand geometry") {
  auto s = PoseSampler::default_human();
  CHECK(s.torso_length() == doctest::Approx(0.40).epsilon(1e-15));
  auto p = s.template_pose();
  auto at = [&](const char* name) {
    const auto& names = s.topology().joint_names;
    auto it = std::find(names.begin(), names.end(), name);
    REQUIRE(it != names.end());
    return p.joints[it - names.begin()];
  };
  CHECK(at("pelvis") == Vec3{0, 0, 0});
  CHECK(norm(at("head") - Vec3{0, 0.67, 0}) < 1e-12);
  CHECK(norm(at("thorax") - Vec3{0, 0.40, 0}) < 1e-12);
  CHECK(norm(at("l_shoulder") - Vec3{0.18, 0.40, 0}) < 1e-12);
  CHECK(norm(at("l_wrist") - Vec3{0.18, -0.13, 0}) < 1e-12);
  CHECK(norm(at("r_wrist") - Vec3{-0.18, -0.13, 0}) < 1e-12);
  CHECK(norm(at("l_ankle") - Vec3{0.11, -0.82, 0}) < 1e-12);
  CHECK(norm(at("r_knee") - Vec3{-0.11, -0.42, 0}) < 1e-12);
}

TEST_CASE("sampled poses keep template bone lengths and symmetry") {
  auto s = PoseSampler::default_human();
  auto tmpl_len = bone_lengths(s.template_pose(), s.topology());
  Rng rng(404);
  for (int i = 0; i < 100; ++i) {
    auto p = s.sample(rng);
    CHECK(p.joints[0] == Vec3{0, 0, 0});
    auto len = bone_lengths(p, s.topology());
    for (std::size_t b = 0; b < len.size(); ++b)
      CHECK(len[b] == doctest::Approx(tmpl_len[b]).epsilon(1e-12));
    for (double r : symmetry_residuals(p, s.topology())) CHECK(r < 1e-12);
  }
}

TEST_CASE("pose sampling is seed deterministic and seed sensitive") {
  auto s = PoseSampler::default_human();
  Rng a(7), b(7), c(8);
  auto pa = s.sample(a), pb = s.sample(b), pc = s.sample(c);
  CHECK(flatten(pa) == flatten(pb));
  CHECK(flatten(pa) != flatten(pc));
  // Poses actually vary between draws.
  auto pa2 = s.sample(a);
  CHECK(mpjpe(pa, pa2) > 0.01);
}

TEST_CASE("corruption invariants") {
  auto s = PoseSampler::default_human();
  CorruptionSpec spec;
  Rng rng(99);
  auto clean = s.sample(rng);
  auto clean_copy = flatten(clean);

  std::set<int> ks;
  bool root_moved = false;
  for (int i = 0; i < 300; ++i) {
    std::vector<int> moved;
    std::vector<double> mags;
    auto bad = corrupt_pose(clean, s.torso_length(), spec, rng, &moved, &mags);
    CHECK(flatten(clean) == clean_copy);  // input untouched

    REQUIRE(moved.size() == mags.size());
    REQUIRE(static_cast<int>(moved.size()) >= spec.k_min);
    REQUIRE(static_cast<int>(moved.size()) <= spec.k_max);
    ks.insert(static_cast<int>(moved.size()));
    CHECK(std::is_sorted(moved.begin(), moved.end()));
    CHECK(std::adjacent_find(moved.begin(), moved.end()) == moved.end());

    std::set<int> moved_set(moved.begin(), moved.end());
    if (moved_set.count(0)) {
      root_moved = true;
      CHECK(norm(bad.joints[0]) > 0.1);  // not re-centered
    }
    for (int j = 0; j < s.topology().joint_count(); ++j) {
      double d = norm(bad.joints[j] - clean.joints[j]);
      if (moved_set.count(j)) {
        auto it = std::find(moved.begin(), moved.end(), j);
        CHECK(d == doctest::Approx(mags[it - moved.begin()]).epsilon(1e-12));
        CHECK(d >= 0.3 * s.torso_length() - 1e-12);
        CHECK(d <= 1.0 * s.torso_length() + 1e-12);
      } else {
        CHECK(d == 0.0);  // bitwise untouched
      }
    }
  }
  // All of k = 1..5 appear, and the root is eligible.
  CHECK(ks == std::set<int>{1, 2, 3, 4, 5});
  CHECK(root_moved);

  SUBCASE("bad spec rejected") {
    CorruptionSpec b1;
    b1.k_min = 0;
    CHECK_THROWS(corrupt_pose(clean, 0.4, b1, rng));
    CorruptionSpec b2;
    b2.k_max = 99;
    CHECK_THROWS(corrupt_pose(clean, 0.4, b2, rng));
    CorruptionSpec b3;
    b3.disp_min_torso = 0.9;
    b3.disp_max_torso = 0.3;
    CHECK_THROWS(corrupt_pose(clean, 0.4, b3, rng));
  }
}

TEST_CASE("corruption directions are not biased") {
  auto s = PoseSampler::default_human();
  CorruptionSpec spec;
  Rng rng(2024);
  auto clean = s.template_pose();
  Vec3 mean{0, 0, 0};
  int n = 0;
  for (int i = 0; i < 2000; ++i) {
    std::vector<int> moved;
    auto bad = corrupt_pose(clean, s.torso_length(), spec, rng, &moved, nullptr);
    for (int j : moved) {
      Vec3 d = bad.joints[j] - clean.joints[j];
      mean = mean + (1.0 / norm(d)) * d;
      ++n;
    }
  }
  REQUIRE(n > 3000);
  // Mean of n uniform unit vectors concentrates near 0 at rate ~1/sqrt(n).
  CHECK(norm((1.0 / n) * mean) < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("pose dataset file round trip and determinism") {
  auto s = PoseSampler::default_human();
  CorruptionSpec spec;
  nlohmann::json cfg = {{"seed", 11}, {"note", "round-trip"}};
  auto p1 = tmp("skelrep_poses_1.jsonl");
  auto p2 = tmp("skelrep_poses_2.jsonl");
  auto p3 = tmp("skelrep_poses_3.jsonl");

  auto ds = generate_pose_dataset(s, 50, 11, spec, cfg, p1, 1);
  REQUIRE(ds.records.size() == 50);
  auto back = load_pose_dataset(p1);
  CHECK(back.config == cfg);
  REQUIRE(back.records.size() == 50);
  for (int i = 0; i < 50; ++i) {
    CHECK(flatten(back.records[i].clean) == flatten(ds.records[i].clean));    // bitwise
    CHECK(flatten(back.records[i].corrupt) == flatten(ds.records[i].corrupt));
    CHECK(back.records[i].moved == ds.records[i].moved);
  }

  // Same seed, any thread count: byte-identical files.
  generate_pose_dataset(s, 50, 11, spec, cfg, p2, 4);
  CHECK(slurp(p1) == slurp(p2));
  generate_pose_dataset(s, 50, 12, spec, cfg, p3, 1);
  CHECK(slurp(p1) != slurp(p3));

  // Records depend only on their index, not on dataset size.
  auto small = generate_pose_dataset(s, 10, 11, spec, cfg, "", 1);
  CHECK(flatten(small.records[9].clean) == flatten(ds.records[9].clean));

  SUBCASE("loader rejects tampering") {
    auto text = slurp(p1);
    std::ofstream f(p1, std::ios::binary);
    f << text.substr(0, text.find('\n') + 1);  // header only, count now wrong
    f.close();
    CHECK_THROWS(load_pose_dataset(p1));
    CHECK_THROWS(load_pose_dataset(tmp("skelrep_missing.jsonl")));
  }
  fs::remove(p1);
  fs::remove(p2);
  fs::remove(p3);
}

TEST_CASE("action class signatures before view rotation") {
  auto s = PoseSampler::default_human();
  const int L = 24;

  auto root_y_range = [&](const std::vector<Pose>& fr) {
    double lo = 1e9, hi = -1e9;
    for (const auto& p : fr) {
      lo = std::min(lo, p.joints[0][1]);
      hi = std::max(hi, p.joints[0][1]);
    }
    return hi - lo;
  };
  auto wrist_heights = [&](const Pose& p) {
    // Above root, averaged over both wrists.
    return ((p.joints[7][1] - p.joints[0][1]) + (p.joints[10][1] - p.joints[0][1])) / 2;
  };

  for (std::uint64_t trial = 0; trial < 8; ++trial) {
    Rng r0 = Rng::substream(5000, trial);
    auto walk = make_action_frames(s, 0, L, r0);
    auto raise = make_action_frames(s, 1, L, r0);
    auto squat = make_action_frames(s, 2, L, r0);
    REQUIRE(walk.size() == L);
    REQUIRE(raise.size() == L);
    REQUIRE(squat.size() == L);

    // Bone lengths survive articulation in every frame.
    auto tmpl_len = bone_lengths(s.template_pose(), s.topology());
    for (const auto& p : walk) {
      auto len = bone_lengths(p, s.topology());
      for (std::size_t b = 0; b < len.size(); ++b)
        CHECK(len[b] == doctest::Approx(tmpl_len[b]).epsilon(1e-12));
    }

    // Only the squat moves the root vertically.
    CHECK(root_y_range(walk) == 0.0);
    CHECK(root_y_range(raise) == 0.0);
    CHECK(root_y_range(squat) > 0.10);

    // The arm raise ends with wrists far above where they started.
    CHECK(wrist_heights(raise.back()) - wrist_heights(raise.front()) > 0.5);

    // The walk keeps moving its ankles relative to the root; the raise barely.
    auto ankle_motion = [&](const std::vector<Pose>& fr) {
      double m = 0;
      for (std::size_t t = 1; t < fr.size(); ++t) {
        Vec3 a = fr[t].joints[13] - fr[t].joints[0];
        Vec3 b = fr[t - 1].joints[13] - fr[t - 1].joints[0];
        m += norm(a - b);
      }
      return m;
    };
    CHECK(ankle_motion(walk) > 5 * ankle_motion(raise));

    // Horizontal drift stays in the ground plane for every class.
    for (const auto* fr : {&walk, &raise}) {
      Vec3 d = fr->back().joints[0] - fr->front().joints[0];
      CHECK(d[1] == 0.0);
    }
  }
}

TEST_CASE("action dataset split, rotation rigidity, and file round trip") {
  auto s = PoseSampler::default_human();
  ActionSpec spec;
  spec.seq_len = 12;
  spec.train_per_class = 4;
  spec.test_per_class = 2;
  nlohmann::json cfg = {{"seed", 31}};
  auto p1 = tmp("skelrep_actions_1.jsonl");
  auto p2 = tmp("skelrep_actions_2.jsonl");

  auto ds = generate_action_dataset(s, spec, 31, cfg, p1, 1);
  REQUIRE(ds.seqs.size() == 3 * (4 + 2));

  int train_per[3] = {0, 0, 0}, test_per[3] = {0, 0, 0};
  auto tmpl_len = bone_lengths(s.template_pose(), s.topology());
  for (const auto& q : ds.seqs) {
    (q.train_split ? train_per : test_per)[q.label]++;
    REQUIRE(q.frames.size() == 12);
    if (q.train_split) {
      CHECK(q.azimuth_deg >= 0);
      CHECK(q.azimuth_deg < 120);
    } else {
      CHECK(q.azimuth_deg >= 180);
      CHECK(q.azimuth_deg < 300);
    }
    // View rotation is rigid: bone lengths unchanged.
    auto len = bone_lengths(q.frames[5], s.topology());
    for (std::size_t b = 0; b < len.size(); ++b)
      CHECK(len[b] == doctest::Approx(tmpl_len[b]).epsilon(1e-9));
  }
  for (int c = 0; c < 3; ++c) {
    CHECK(train_per[c] == 4);
    CHECK(test_per[c] == 2);
  }

  auto back = load_action_dataset(p1);
  REQUIRE(back.seqs.size() == ds.seqs.size());
  for (std::size_t i = 0; i < ds.seqs.size(); ++i) {
    CHECK(back.seqs[i].label == ds.seqs[i].label);
    CHECK(back.seqs[i].train_split == ds.seqs[i].train_split);
    CHECK(back.seqs[i].azimuth_deg == ds.seqs[i].azimuth_deg);
    REQUIRE(back.seqs[i].frames.size() == ds.seqs[i].frames.size());
    for (std::size_t t = 0; t < ds.seqs[i].frames.size(); ++t)
      CHECK(flatten(back.seqs[i].frames[t]) == flatten(ds.seqs[i].frames[t]));
  }

  generate_action_dataset(s, spec, 31, cfg, p2, 3);
  CHECK(slurp(p1) == slurp(p2));
  fs::remove(p1);
  fs::remove(p2);
}
