#pragma once

#include <cstdint>
#include <string>

#include "skelrep/graph.hpp"
#include "skelrep/params.hpp"
#include "skelrep/skeleton.hpp"
#include "skelrep/treenet.hpp"

namespace skelrep {

// Denoising pose autoencoder with a factored latent. The encoder runs the
// tree GRU over a corrupted pose, a tanh trunk compresses the feature, and
// two affine heads emit z x z matrices: h_v for the viewpoint and h_vi for
// the view-invariant pose content. Coupling them (matrix product h_v * h_vi)
// gives the latent the decoder consumes. The decoder predicts a coarse pose,
// refines it with a second tree GRU pass (parameters shared with the encoder
// by default) plus per-joint offsets, and re-centers the root exactly.
//
// Training is Siamese: the same parameters process the pose and a rigidly
// rotated copy. Swapping the two streams' h_v/h_vi across the coupling gives
// the view-transfer reconstructions; penalties keep h_v near orthogonal
// (rigid motions compose inside the latent) and pull the two h_vi together.
struct DaeToggles {
  bool feature_decomposition = true;  // false: one head, latent fed straight in
  bool rotated_stream = true;         // false: single stream, terms below vanish
  bool view_transfer = true;          // cross-coupled reconstructions
  bool loss_feat = true;              // omega3 * ||h_vi1 - h_vi2||_F
  bool loss_orth = true;              // lambda * ||I - h_v^T h_v||_F per stream
};

struct DaeConfig {
  TreeNetConfig tree;
  int z = 18;            // latent factor side; latent dimension is z*z
  int trunk_width = 64;
  bool share_enc_dec_tree = true;
  double omega1 = 0.01;  // transfer reconstruction, plain target
  double omega2 = 0.01;  // transfer reconstruction, rotated target
  double omega3 = 0.1;   // feature consistency
  double lambda_orth = 0.1;
  double l2 = 1e-4;      // kernel weight decay (biases exempt)
  // Output range of the coarse decoder, meters. Generous relative to the
  // ~0.9 m joint radius so the tanh works on its linear stretch: the decode
  // learning rate in pose space grows with the square of this scale, and the
  // warm-start biases stay small.
  double coarse_scale = 2.5;
  // Fixed standardization applied to any pose entering a tree pass (the raw
  // input and the decoder's coarse estimate alike). Joint offsets are around
  // a quarter meter, so the default puts tree pre-activations near unit
  // scale, where the gates actually gate.
  double input_scale = 4.0;
  DaeToggles toggles;
};

// Registers every parameter. Kernels draw from (seed, name); biases are zero
// except two warm starts: head_v.b is a flattened identity so the orthogonal
// penalty starts near its constraint surface instead of the zero saddle, and
// dec.coarse.b is atanh(reference / coarse_scale) so decoding starts at the
// reference pose when one is given.
void add_dae_params(ParameterStore& store, const SkeletonTopology& topo, const DaeConfig& cfg,
                    std::uint64_t seed, const Pose* reference_pose = nullptr);

std::size_t dae_param_count(const SkeletonTopology& topo, const DaeConfig& cfg);

struct EncodeNodes {
  NodeId v = -1;    // [z, z] viewpoint factor (decomposed mode)
  NodeId vi = -1;   // [z, z] pose factor (decomposed mode)
  NodeId raw = -1;  // [z*z] undecomposed latent (raw mode)
};

EncodeNodes build_encoder(Graph& g, const SkeletonTopology& topo, const DaeConfig& cfg,
                          NodeId pose);
// Flat [z*z] latent from the factor product.
NodeId couple(Graph& g, const DaeConfig& cfg, NodeId v, NodeId vi);
// [3J] pose with the root exactly at the origin.
NodeId build_decoder(Graph& g, const SkeletonTopology& topo, const DaeConfig& cfg, NodeId latent);

// Sum over joints of the Euclidean error, plus bone-length error against the
// target, plus the left/right bone-length asymmetry of the prediction.
NodeId reconstruction_loss(Graph& g, const SkeletonTopology& topo, NodeId pred, NodeId target);

struct SiameseNodes {
  NodeId x = -1, xr = -1;  // corrupted pose and its rotated copy
  NodeId t = -1, tr = -1;  // clean targets
  // Weighted objective terms; -1 when the toggle removes the term. total is
  // exactly the sum of the present terms (reg included when requested).
  NodeId l_p1 = -1, l_p2 = -1, l_pt1 = -1, l_pt2 = -1, l_f = -1, l_o = -1, reg = -1;
  NodeId total = -1;
  NodeId p_hat = -1;          // stream-1 reconstruction
  NodeId v1 = -1, vi1 = -1;   // stream-1 factors (decomposed mode)
};

// Builds the full per-sample objective. with_regularizer folds the weight
// decay into the graph; the trainer instead applies the identical term
// analytically after batch reduction, so this flag exists for whole-objective
// derivative checks.
SiameseNodes build_siamese(Graph& g, const SkeletonTopology& topo, const DaeConfig& cfg,
                           bool with_regularizer);

// In-graph weight decay l2 * sum of squared kernel entries (biases exempt).
NodeId build_regularizer(Graph& g, const ParameterStore& store, double l2);

// One reusable pair of graphs (objective + encoder-decoder chain) over a
// parameter store. Rebinding inputs re-runs without allocation, so one
// instance per thread serves a whole training run.
class SiameseModel {
 public:
  SiameseModel(const ParameterStore* store, const SkeletonTopology& topo, const DaeConfig& cfg);

  struct Components {
    double total = 0, l_p1 = 0, l_p2 = 0, l_pt1 = 0, l_pt2 = 0, l_f = 0, l_o = 0;
  };

  // Objective for one sample. rot supplies the second stream's rigid rotation
  // and is required exactly when the rotated stream is enabled.
  Components forward(const Pose& corrupt, const Pose& clean, const Rotation* rot);
  // Same, then accumulates parameter gradients into grad_sink (store layout,
  // caller-zeroed).
  Components forward_backward(const Pose& corrupt, const Pose& clean, const Rotation* rot,
                              double* grad_sink);

  Pose denoised(const Pose& corrupt);
  Tensor pose_feature(const Pose& corrupt);  // h_vi, or the raw latent
  Tensor view_feature(const Pose& corrupt);  // h_v; throws in raw mode

  const DaeConfig& config() const { return cfg_; }

 private:
  const ParameterStore* store_;
  SkeletonTopology topo_;
  DaeConfig cfg_;
  Graph full_, eval_;
  SiameseNodes nodes_;
  NodeId eval_x_ = -1, eval_pose_ = -1;
  EncodeNodes eval_enc_;

  Components run(const Pose& corrupt, const Pose& clean, const Rotation* rot, double* grad_sink);
  void eval_on(const Pose& corrupt);
};

}  // namespace skelrep
