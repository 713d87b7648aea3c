#include "skelrep/treenet.hpp"

#include <stdexcept>

namespace skelrep {

namespace {

bool uses_recursive(TreeVariant v) { return v != TreeVariant::diffuse_only; }
bool uses_diffuse(TreeVariant v) { return v != TreeVariant::recursive_only; }

std::string cell_base(const std::string& prefix, char subnet, int joint) {
  return prefix + subnet + ".node" + std::to_string(joint) + ".";
}

void dfs_orders(const SkeletonTopology& topo, int j, std::vector<int>& pre,
                std::vector<int>& post) {
  pre.push_back(j);
  for (int c : topo.children[j]) dfs_orders(topo, c, pre, post);
  post.push_back(j);
}

void check_cfg(const TreeNetConfig& cfg) {
  if (cfg.hidden < 1) throw std::invalid_argument("treenet: hidden must be positive");
  if (cfg.passes < 1) throw std::invalid_argument("treenet: passes must be positive");
}

// Neighbor-state count per cell: children for the recursive direction, the
// parent (0 at the root) for the diffuse direction.
int neighbor_count(const SkeletonTopology& topo, char subnet, int joint) {
  if (subnet == 'r') return static_cast<int>(topo.children[joint].size());
  return topo.parent[joint] >= 0 ? 1 : 0;
}

}  // namespace

TreeVariant tree_variant_from_string(std::string_view s) {
  if (s == "bidirectional") return TreeVariant::bidirectional;
  if (s == "recursive_only") return TreeVariant::recursive_only;
  if (s == "diffuse_only") return TreeVariant::diffuse_only;
  if (s == "concatenated") return TreeVariant::concatenated;
  throw std::invalid_argument("unknown tree variant: " + std::string(s));
}

const char* to_string(TreeVariant v) {
  switch (v) {
    case TreeVariant::bidirectional: return "bidirectional";
    case TreeVariant::recursive_only: return "recursive_only";
    case TreeVariant::diffuse_only: return "diffuse_only";
    case TreeVariant::concatenated: return "concatenated";
  }
  throw std::logic_error("tree variant");
}

std::vector<int> recursive_order(const SkeletonTopology& topo) {
  std::vector<int> pre, post;
  dfs_orders(topo, topo.root, pre, post);
  return post;
}

std::vector<int> diffuse_order(const SkeletonTopology& topo) {
  std::vector<int> pre, post;
  dfs_orders(topo, topo.root, pre, post);
  return pre;
}

void add_treenet_params(ParameterStore& store, const SkeletonTopology& topo,
                        const TreeNetConfig& cfg, const std::string& prefix, std::uint64_t seed) {
  check_cfg(cfg);
  const std::size_t m = static_cast<std::size_t>(cfg.hidden);
  auto add_cell = [&](char subnet, int joint) {
    std::size_t n_in = 3 + m * neighbor_count(topo, subnet, joint);
    std::string base = cell_base(prefix, subnet, joint);
    for (const char* gate : {"r", "u", "c"}) {
      add_kernel(store, base + "w_" + gate, m, n_in, seed);
      add_kernel(store, base + "u_" + gate, m, m, seed);
      add_bias(store, base + "b_" + gate, m);
    }
    add_kernel(store, base + "w_out", m, m, seed);
    add_bias(store, base + "b_out", m);
  };
  for (int j = 0; j < topo.joint_count(); ++j) {
    if (uses_recursive(cfg.variant)) add_cell('r', j);
    if (uses_diffuse(cfg.variant)) add_cell('d', j);
  }
}

NodeId build_treenet(Graph& g, const SkeletonTopology& topo, const TreeNetConfig& cfg,
                     const std::string& prefix, NodeId pose) {
  check_cfg(cfg);
  const int J = topo.joint_count();
  const std::size_t m = static_cast<std::size_t>(cfg.hidden);
  if (g.shape(pose) != std::vector<std::size_t>{static_cast<std::size_t>(3 * J)})
    throw std::invalid_argument("treenet: pose node must be [3J]");

  std::vector<NodeId> pos(J);
  for (int j = 0; j < J; ++j) pos[j] = g.slice(pose, 3 * j, 3);
  NodeId zero = g.constant(Tensor({m}), prefix + "h0");
  NodeId ones = g.constant(Tensor({m}, std::vector<double>(m, 1.0)), prefix + "ones");

  auto cell = [&](char subnet, int joint, const std::vector<NodeId>& inputs, NodeId h_prev) {
    std::string base = cell_base(prefix, subnet, joint);
    auto P = [&](const char* leaf) { return g.parameter(base + leaf); };
    NodeId x = inputs.size() == 1 ? inputs[0] : g.concat(inputs);
    NodeId r = g.sigmoid(g.add(g.add(g.matmul(P("w_r"), x), g.matmul(P("u_r"), h_prev)), P("b_r")));
    NodeId u = g.sigmoid(g.add(g.add(g.matmul(P("w_u"), x), g.matmul(P("u_u"), h_prev)), P("b_u")));
    NodeId cand = g.tanh(
        g.add(g.add(g.matmul(P("w_c"), x), g.matmul(P("u_c"), g.hadamard(r, h_prev))), P("b_c")));
    return g.add(g.hadamard(u, h_prev), g.hadamard(g.add(ones, g.scale(u, -1.0)), cand));
  };

  auto rec_order = recursive_order(topo);
  auto dif_order = diffuse_order(topo);
  int sweep_id = 0;

  // `written` guards the fresh-state contract: a recursive cell may only read
  // children already updated in the current sweep, a diffuse cell its parent.
  auto rec_sweep = [&](std::vector<NodeId>& h, std::vector<int>& written) {
    ++sweep_id;
    for (int j : rec_order) {
      std::vector<NodeId> in{pos[j]};
      for (int c : topo.children[j]) {
        if (written[c] != sweep_id) throw std::logic_error("treenet: child state is stale");
        in.push_back(h[c]);
      }
      h[j] = cell('r', j, in, h[j]);
      written[j] = sweep_id;
    }
  };
  auto dif_sweep = [&](std::vector<NodeId>& h, std::vector<int>& written) {
    ++sweep_id;
    for (int j : dif_order) {
      std::vector<NodeId> in{pos[j]};
      int p = topo.parent[j];
      if (p >= 0) {
        if (written[p] != sweep_id) throw std::logic_error("treenet: parent state is stale");
        in.push_back(h[p]);
      }
      h[j] = cell('d', j, in, h[j]);
      written[j] = sweep_id;
    }
  };

  auto heads = [&](char subnet, const std::vector<NodeId>& h) {
    std::vector<NodeId> out(J);
    for (int j = 0; j < J; ++j) {
      std::string base = cell_base(prefix, subnet, j);
      out[j] = g.tanh(g.add(g.matmul(g.parameter(base + "w_out"), h[j]),
                            g.parameter(base + "b_out")));
    }
    return out;
  };

  std::vector<NodeId> feature_parts;
  if (cfg.variant == TreeVariant::concatenated) {
    std::vector<NodeId> hr(J, zero), hd(J, zero);
    std::vector<int> wr(J, -1), wd(J, -1);
    for (int t = 0; t < cfg.passes; ++t) rec_sweep(hr, wr);
    for (int t = 0; t < cfg.passes; ++t) dif_sweep(hd, wd);
    feature_parts = heads('r', hr);
    auto dparts = heads('d', hd);
    feature_parts.insert(feature_parts.end(), dparts.begin(), dparts.end());
  } else {
    std::vector<NodeId> h(J, zero);
    std::vector<int> written(J, -1);
    for (int t = 0; t < cfg.passes; ++t) {
      if (uses_recursive(cfg.variant)) rec_sweep(h, written);
      if (uses_diffuse(cfg.variant)) dif_sweep(h, written);
    }
    feature_parts = heads(uses_diffuse(cfg.variant) ? 'd' : 'r', h);
  }
  NodeId feature = g.concat(feature_parts);
  g.set_label(feature, prefix + "feature");
  return feature;
}

std::size_t treenet_feature_dim(const SkeletonTopology& topo, const TreeNetConfig& cfg) {
  std::size_t d = static_cast<std::size_t>(topo.joint_count()) * cfg.hidden;
  return cfg.variant == TreeVariant::concatenated ? 2 * d : d;
}

std::size_t treenet_param_count(const SkeletonTopology& topo, const TreeNetConfig& cfg) {
  check_cfg(cfg);
  const std::size_t m = static_cast<std::size_t>(cfg.hidden);
  std::size_t total = 0;
  for (int j = 0; j < topo.joint_count(); ++j)
    for (char subnet : {'r', 'd'}) {
      if (subnet == 'r' && !uses_recursive(cfg.variant)) continue;
      if (subnet == 'd' && !uses_diffuse(cfg.variant)) continue;
      std::size_t n_in = 3 + m * neighbor_count(topo, subnet, j);
      total += 3 * m * n_in + 4 * m * m + 4 * m;
    }
  return total;
}

std::size_t nominal_param_count(const SkeletonTopology& topo, const TreeNetConfig& cfg) {
  check_cfg(cfg);
  const std::size_t m = static_cast<std::size_t>(cfg.hidden);
  std::size_t total = 0;
  for (int j = 0; j < topo.joint_count(); ++j)
    for (char subnet : {'r', 'd'}) {
      if (subnet == 'r' && !uses_recursive(cfg.variant)) continue;
      if (subnet == 'd' && !uses_diffuse(cfg.variant)) continue;
      std::size_t n = static_cast<std::size_t>(neighbor_count(topo, subnet, j));
      total += (3 * 3 + (3 * n + 4) * m + 1) * m;
    }
  return total;
}

}  // namespace skelrep
