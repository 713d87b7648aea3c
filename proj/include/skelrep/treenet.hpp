#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "skelrep/graph.hpp"
#include "skelrep/params.hpp"
#include "skelrep/skeleton.hpp"

namespace skelrep {

// Tree-structured GRU over a skeleton. Two sweep directions exist, each with
// its own per-joint GRU cell: the recursive sweep runs leaves to root (a
// joint's input is its position plus its children's fresh hidden rows, in
// child order) and the diffuse sweep runs root to leaves (position plus the
// parent's fresh hidden row). All cells read and write one shared J x m
// hidden state, so information crosses the whole tree each round trip.
enum class TreeVariant {
  bidirectional,   // per pass: recursive sweep then diffuse sweep, shared state
  recursive_only,  // upward sweeps only
  diffuse_only,    // downward sweeps only
  concatenated,    // both directions on private states, features concatenated
};

TreeVariant tree_variant_from_string(std::string_view s);
const char* to_string(TreeVariant v);

struct TreeNetConfig {
  int hidden = 32;  // per-joint state width m
  int passes = 1;   // sweep rounds T (the net is unrolled, parameters reused)
  TreeVariant variant = TreeVariant::bidirectional;
};

// Registers every cell parameter under
//   {prefix}{r|d}.node{i}.{w_r,u_r,b_r, w_u,u_u,b_u, w_c,u_c,b_c, w_out,b_out}
// Kernels are fan-in initialized from (seed, name); biases start at zero.
void add_treenet_params(ParameterStore& store, const SkeletonTopology& topo,
                        const TreeNetConfig& cfg, const std::string& prefix, std::uint64_t seed);

// Unrolls the network over a flat [3J] pose node and returns the feature
// node: per-joint outputs tanh(w_out h_i + b_out) of the final sweep,
// concatenated in joint order. Sharing a prefix across two build calls on one
// graph reuses the same parameters (the graph caches parameter nodes).
NodeId build_treenet(Graph& g, const SkeletonTopology& topo, const TreeNetConfig& cfg,
                     const std::string& prefix, NodeId pose);

// Joint visit orders (deterministic DFS, children ascending).
std::vector<int> recursive_order(const SkeletonTopology& topo);  // children before parents
std::vector<int> diffuse_order(const SkeletonTopology& topo);    // parents before children

std::size_t treenet_feature_dim(const SkeletonTopology& topo, const TreeNetConfig& cfg);

// Actual registered parameter count (gate biases included).
std::size_t treenet_param_count(const SkeletonTopology& topo, const TreeNetConfig& cfg);

// Closed-form count [3*3 + (3N+4)m + 1]m summed over cell instances, where N
// is the instance's neighbor-state count. It omits the three gate biases per
// cell, so it undercounts the registered total by 3m per instance; both
// numbers are reported by the parameter-count tool.
std::size_t nominal_param_count(const SkeletonTopology& topo, const TreeNetConfig& cfg);

}  // namespace skelrep
