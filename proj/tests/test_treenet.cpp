#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "skelrep/treenet.hpp"

using namespace skelrep;

namespace {

SkeletonTopology single_joint() {
  SkeletonTopology t;
  t.joint_names = {"j0"};
  t.parent = {-1};
  t.finalize();
  return t;
}

SkeletonTopology chain(int n) {
  SkeletonTopology t;
  for (int i = 0; i < n; ++i) {
    t.joint_names.push_back("j" + std::to_string(i));
    t.parent.push_back(i - 1);
  }
  t.finalize();
  return t;
}

SkeletonTopology star3() {
  SkeletonTopology t;
  t.joint_names = {"hub", "a", "b", "c"};
  t.parent = {-1, 0, 0, 0};
  t.finalize();
  return t;
}

// Scalar (m = 1) reimplementation of one cell, reading the same parameters.
struct Cell1 {
  std::vector<double> w_r, w_u, w_c;
  double u_r, u_u, u_c, b_r, b_u, b_c, w_out, b_out;

  static Cell1 from(const ParameterStore& s, const std::string& base) {
    Cell1 c;
    c.w_r = s.tensor(base + "w_r").v;
    c.w_u = s.tensor(base + "w_u").v;
    c.w_c = s.tensor(base + "w_c").v;
    c.u_r = s.tensor(base + "u_r").v[0];
    c.u_u = s.tensor(base + "u_u").v[0];
    c.u_c = s.tensor(base + "u_c").v[0];
    c.b_r = s.tensor(base + "b_r").v[0];
    c.b_u = s.tensor(base + "b_u").v[0];
    c.b_c = s.tensor(base + "b_c").v[0];
    c.w_out = s.tensor(base + "w_out").v[0];
    c.b_out = s.tensor(base + "b_out").v[0];
    return c;
  }

  static double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }
  static double dot(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
  }

  double step(const std::vector<double>& x, double h) const {
    double r = sig(dot(w_r, x) + u_r * h + b_r);
    double u = sig(dot(w_u, x) + u_u * h + b_u);
    double c = std::tanh(dot(w_c, x) + u_c * (r * h) + b_c);
    return u * h + (1 - u) * c;
  }
  double out(double h) const { return std::tanh(w_out * h + b_out); }
};

Tensor run_feature(const ParameterStore& s, const SkeletonTopology& topo,
                   const TreeNetConfig& cfg, const std::vector<double>& pose) {
  Graph g(&s);
  auto in = g.input({pose.size()}, "pose");
  auto f = build_treenet(g, topo, cfg, "t.", in);
  g.bind(in, pose);
  g.forward();
  return g.value(f);
}

}  // namespace

TEST_CASE("single joint cell matches the scalar recurrence") {
  auto topo = single_joint();
  TreeNetConfig cfg;
  cfg.hidden = 1;
  std::vector<double> pose{0.4, -0.5, 0.25};

  SUBCASE("recursive only, several pass depths") {
    cfg.variant = TreeVariant::recursive_only;
    for (int T : {1, 2, 5}) {
      cfg.passes = T;
      ParameterStore s;
      add_treenet_params(s, topo, cfg, "t.", 42);
      auto c = Cell1::from(s, "t.r.node0.");
      double h = 0;
      for (int t = 0; t < T; ++t) h = c.step(pose, h);
      auto f = run_feature(s, topo, cfg, pose);
      REQUIRE(f.v.size() == 1);
      CHECK(f.v[0] == doctest::Approx(c.out(h)).epsilon(1e-12));
    }
  }

  SUBCASE("bidirectional interleaves the two cells on one state") {
    cfg.variant = TreeVariant::bidirectional;
    cfg.passes = 2;
    ParameterStore s;
    add_treenet_params(s, topo, cfg, "t.", 43);
    auto cr = Cell1::from(s, "t.r.node0.");
    auto cd = Cell1::from(s, "t.d.node0.");
    double h = 0;
    for (int t = 0; t < 2; ++t) {
      h = cr.step(pose, h);
      h = cd.step(pose, h);
    }
    auto f = run_feature(s, topo, cfg, pose);
    REQUIRE(f.v.size() == 1);
    CHECK(f.v[0] == doctest::Approx(cd.out(h)).epsilon(1e-12));
  }

  SUBCASE("concatenated runs private states") {
    cfg.variant = TreeVariant::concatenated;
    cfg.passes = 2;
    ParameterStore s;
    add_treenet_params(s, topo, cfg, "t.", 44);
    auto cr = Cell1::from(s, "t.r.node0.");
    auto cd = Cell1::from(s, "t.d.node0.");
    double hr = 0, hd = 0;
    for (int t = 0; t < 2; ++t) hr = cr.step(pose, hr);
    for (int t = 0; t < 2; ++t) hd = cd.step(pose, hd);
    auto f = run_feature(s, topo, cfg, pose);
    REQUIRE(f.v.size() == 2);
    CHECK(f.v[0] == doctest::Approx(cr.out(hr)).epsilon(1e-12));
    CHECK(f.v[1] == doctest::Approx(cd.out(hd)).epsilon(1e-12));
  }
}

TEST_CASE("three joint chain matches a hand-rolled double sweep") {
  auto topo = chain(3);
  TreeNetConfig cfg;
  cfg.hidden = 1;
  cfg.passes = 1;
  cfg.variant = TreeVariant::bidirectional;
  ParameterStore s;
  add_treenet_params(s, topo, cfg, "t.", 7);

  std::vector<double> pose{0.1, 0.2, -0.3, -0.4, 0.5, 0.6, 0.7, -0.8, 0.9};
  auto x = [&](int j) {
    return std::vector<double>{pose[3 * j], pose[3 * j + 1], pose[3 * j + 2]};
  };
  auto xh = [&](int j, double h) {
    auto v = x(j);
    v.push_back(h);
    return v;
  };

  Cell1 r0 = Cell1::from(s, "t.r.node0."), r1 = Cell1::from(s, "t.r.node1."),
        r2 = Cell1::from(s, "t.r.node2.");
  Cell1 d0 = Cell1::from(s, "t.d.node0."), d1 = Cell1::from(s, "t.d.node1."),
        d2 = Cell1::from(s, "t.d.node2.");

  // Upward: leaf to root, each parent reading its child's fresh state.
  double h2 = r2.step(x(2), 0);
  double h1 = r1.step(xh(1, h2), 0);
  double h0 = r0.step(xh(0, h1), 0);
  // Downward: root to leaf on the same state vector.
  h0 = d0.step(x(0), h0);
  h1 = d1.step(xh(1, h0), h1);
  h2 = d2.step(xh(2, h1), h2);

  auto f = run_feature(s, topo, cfg, pose);
  REQUIRE(f.v.size() == 3);
  CHECK(f.v[0] == doctest::Approx(d0.out(h0)).epsilon(1e-12));
  CHECK(f.v[1] == doctest::Approx(d1.out(h1)).epsilon(1e-12));
  CHECK(f.v[2] == doctest::Approx(d2.out(h2)).epsilon(1e-12));
}

TEST_CASE("information flows along the tree direction") {
  auto topo = SkeletonTopology::default17();
  TreeNetConfig cfg;
  cfg.hidden = 2;
  cfg.passes = 1;
  const int m = cfg.hidden;
  const int head = 4, wrist = 7, pelvis = 0;

  auto with_pose_change = [&](TreeVariant v, int moved_joint) {
    cfg.variant = v;
    ParameterStore s;
    add_treenet_params(s, topo, cfg, "t.", 11);
    std::vector<double> pose(51, 0.1);
    for (std::size_t i = 0; i < pose.size(); ++i) pose[i] = 0.05 * static_cast<double>(i % 7) - 0.1;
    auto base = run_feature(s, topo, cfg, pose);
    auto moved = pose;
    moved[3 * moved_joint] += 0.5;
    auto changed = run_feature(s, topo, cfg, moved);
    return std::make_pair(base.v, changed.v);
  };
  auto joint_slice = [&](const std::vector<double>& f, int j) {
    return std::vector<double>(f.begin() + j * m, f.begin() + (j + 1) * m);
  };

  SUBCASE("recursive only: leaves never see the root") {
    auto [base, changed] = with_pose_change(TreeVariant::recursive_only, pelvis);
    CHECK(joint_slice(base, head) == joint_slice(changed, head));      // bitwise
    CHECK(joint_slice(base, wrist) == joint_slice(changed, wrist));
    CHECK(joint_slice(base, pelvis) != joint_slice(changed, pelvis));
  }
  SUBCASE("recursive only: siblings never see each other") {
    auto [base, changed] = with_pose_change(TreeVariant::recursive_only, head);
    CHECK(joint_slice(base, wrist) == joint_slice(changed, wrist));
    CHECK(joint_slice(base, pelvis) != joint_slice(changed, pelvis));
  }
  SUBCASE("diffuse only: the root never sees a leaf") {
    auto [base, changed] = with_pose_change(TreeVariant::diffuse_only, head);
    CHECK(joint_slice(base, pelvis) == joint_slice(changed, pelvis));
    CHECK(joint_slice(base, head) != joint_slice(changed, head));
  }
  SUBCASE("one bidirectional pass reaches every joint from a leaf") {
    auto [base, changed] = with_pose_change(TreeVariant::bidirectional, head);
    for (int j = 0; j < topo.joint_count(); ++j) {
      INFO("joint " << j);
      CHECK(joint_slice(base, j) != joint_slice(changed, j));
    }
  }
}

TEST_CASE("visit orders are a proper post- and pre-order") {
  auto topo = SkeletonTopology::default17();
  auto rec = recursive_order(topo);
  auto dif = diffuse_order(topo);
  REQUIRE(rec.size() == 17);
  REQUIRE(dif.size() == 17);
  std::vector<int> seen(17, 0);
  for (std::size_t i = 0; i < rec.size(); ++i) {
    for (int c : topo.children[rec[i]]) {
      // Children appear before their parent in the recursive order.
      CHECK(std::find(rec.begin(), rec.begin() + i, c) != rec.begin() + i);
    }
    seen[rec[i]]++;
  }
  for (int c : seen) CHECK(c == 1);
  CHECK(dif.front() == 0);
  for (std::size_t i = 1; i < dif.size(); ++i) {
    int p = topo.parent[dif[i]];
    CHECK(std::find(dif.begin(), dif.begin() + i, p) != dif.begin() + i);
  }
}

TEST_CASE("parameter counts match the closed forms") {
  auto topo = SkeletonTopology::default17();
  TreeNetConfig cfg;
  cfg.hidden = 32;

  SUBCASE("published formula per degree") {
    TreeNetConfig c1;
    c1.hidden = 32;
    c1.variant = TreeVariant::recursive_only;
    CHECK(nominal_param_count(single_joint(), c1) == 4416);           // degree 0
    CHECK(nominal_param_count(chain(2), c1) == 4416 + 7488);          // degrees 0,1
    CHECK(nominal_param_count(star3(), c1) == 3 * 4416 + 13632);      // three children
    cfg.variant = TreeVariant::bidirectional;
    CHECK(nominal_param_count(topo, cfg) == 248448);
  }

  SUBCASE("registered count adds three gate biases per cell") {
    cfg.variant = TreeVariant::bidirectional;
    CHECK(treenet_param_count(topo, cfg) == 251712);
    cfg.variant = TreeVariant::recursive_only;
    CHECK(treenet_param_count(topo, cfg) == 125856);
    cfg.variant = TreeVariant::diffuse_only;
    CHECK(treenet_param_count(topo, cfg) == 125856);
    cfg.variant = TreeVariant::concatenated;
    CHECK(treenet_param_count(topo, cfg) == 251712);

    // The store agrees with the closed form.
    cfg.variant = TreeVariant::bidirectional;
    ParameterStore s;
    add_treenet_params(s, topo, cfg, "enc.", 1);
    CHECK(s.flat_size() == 251712);
    CHECK(s.tensor("enc.r.node0.w_r").shape == std::vector<std::size_t>{32, 99});  // 3 children
    CHECK(s.tensor("enc.r.node4.w_r").shape == std::vector<std::size_t>{32, 3});   // leaf
    CHECK(s.tensor("enc.d.node0.w_r").shape == std::vector<std::size_t>{32, 3});   // root
    CHECK(s.tensor("enc.d.node4.w_r").shape == std::vector<std::size_t>{32, 35});
  }

  SUBCASE("feature dims") {
    cfg.variant = TreeVariant::bidirectional;
    CHECK(treenet_feature_dim(topo, cfg) == 544);
    cfg.variant = TreeVariant::recursive_only;
    CHECK(treenet_feature_dim(topo, cfg) == 544);
    cfg.variant = TreeVariant::concatenated;
    CHECK(treenet_feature_dim(topo, cfg) == 1088);

    cfg.variant = TreeVariant::bidirectional;
    ParameterStore s;
    add_treenet_params(s, topo, cfg, "t.", 3);
    std::vector<double> pose(51, 0.2);
    CHECK(run_feature(s, topo, cfg, pose).v.size() == 544);
  }
}

TEST_CASE("two builds with one prefix share parameters") {
  auto topo = chain(3);
  TreeNetConfig cfg;
  cfg.hidden = 2;
  ParameterStore s;
  add_treenet_params(s, topo, cfg, "t.", 5);

  Graph g(&s);
  auto in1 = g.input({9}, "pose1");
  auto in2 = g.input({9}, "pose2");
  auto f1 = build_treenet(g, topo, cfg, "t.", in1);
  auto f2 = build_treenet(g, topo, cfg, "t.", in2);
  CHECK(g.param_use_count("t.r.node0.w_r") == 1);
  CHECK(g.param_use_count("t.d.node2.b_out") == 1);

  std::vector<double> a(9, 0.3), b(9, -0.2);
  g.bind(in1, a);
  g.bind(in2, b);
  g.forward();
  CHECK(g.value(f1).v != g.value(f2).v);
  g.bind(in2, a);
  g.forward();
  CHECK(g.value(f1).v == g.value(f2).v);  // same params, same input, bitwise
}

TEST_CASE("extra passes change the function") {
  auto topo = chain(3);
  TreeNetConfig c1, c2;
  c1.hidden = c2.hidden = 3;
  c1.passes = 1;
  c2.passes = 2;
  ParameterStore s;
  add_treenet_params(s, topo, c1, "t.", 9);
  std::vector<double> pose(9, 0.25);
  auto f1 = run_feature(s, topo, c1, pose);
  auto f2 = run_feature(s, topo, c2, pose);
  REQUIRE(f1.v.size() == f2.v.size());
  CHECK(f1.v != f2.v);
}

TEST_CASE("treenet gradients pass central differences") {
  auto topo = chain(3);
  TreeNetConfig cfg;
  cfg.hidden = 2;
  cfg.passes = 2;
  std::vector<double> pose{0.1, -0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8, 0.09};

  for (auto v : {TreeVariant::bidirectional, TreeVariant::concatenated}) {
    cfg.variant = v;
    ParameterStore s;
    add_treenet_params(s, topo, cfg, "t.", 21);
    GraphLoss loss(&s, [&](Graph& g) {
      auto in = g.constant(Tensor({9}, pose));
      return g.frobenius_sq(build_treenet(g, topo, cfg, "t.", in));
    });
    auto rep = grad_check(loss, s, 1e-5, 1000);
    INFO(to_string(v) << ": worst " << rep.worst_param << " analytic " << rep.analytic_at_worst
                      << " numeric " << rep.numeric_at_worst);
    CHECK(rep.max_rel_err < 1e-4);
    CHECK(rep.coords == s.flat_size());  // whole store sampled
  }
}

TEST_CASE("variant names round trip") {
  for (auto v : {TreeVariant::bidirectional, TreeVariant::recursive_only,
                 TreeVariant::diffuse_only, TreeVariant::concatenated})
    CHECK(tree_variant_from_string(to_string(v)) == v);
  CHECK_THROWS(tree_variant_from_string("sideways"));
}
