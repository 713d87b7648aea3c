#pragma once

#include <string>
#include <vector>

#include "skelrep/dae.hpp"
#include "skelrep/synth.hpp"

namespace skelrep {

// All sweeps here run one model per thread and fold per-item results in index
// order, so reports are bitwise identical at any thread count.

struct DenoiseReport {
  double mpjpe_input = 0;      // corrupted vs clean, as the model sees it
  double mpjpe_recovered = 0;  // decoded vs clean
  int count = 0;
};
DenoiseReport denoise_eval(const ParameterStore* store, const SkeletonTopology& topo,
                           const DaeConfig& cfg, const std::vector<PoseRecord>& records,
                           int threads = 1);

// Ratio of mean between-pose to mean within-pose feature distance, measured
// over one shared set of random rigid rotations applied to every clean pose.
struct InvarianceReport {
  double inter = 0, intra = 0, score = 0;
  int poses = 0, rotations = 0;
};
InvarianceReport invariance_score(const ParameterStore* store, const SkeletonTopology& topo,
                                  const DaeConfig& cfg, const std::vector<PoseRecord>& records,
                                  int n_rotations, std::uint64_t seed, int threads = 1);

// Mean ||I - h_v^T h_v||_F over the corrupted test inputs: how far the view
// factor sits from an orthonormal matrix. Throws in raw mode (no view factor).
double orthogonality_error_mean(const ParameterStore* store, const SkeletonTopology& topo,
                                const DaeConfig& cfg, const std::vector<PoseRecord>& records,
                                int threads = 1);

// Per-frame classifier inputs: the flattened pose feature of the root-centered
// frame, then the root offset (dim = feature + 3).
struct SequenceFeatures {
  int label = 0;
  bool train_split = true;
  Tensor feats;  // {frames, dim}
};
std::vector<SequenceFeatures> extract_action_features(const ParameterStore* store,
                                                      const SkeletonTopology& topo,
                                                      const DaeConfig& cfg,
                                                      const std::vector<ActionSequence>& seqs,
                                                      int threads = 1);

// Content hash of the flat parameter vector; pins down that a sweep left the
// encoder untouched.
std::uint64_t flat_hash(const ParameterStore& store);

// --- recurrent sequence classifier -------------------------------------------

struct LstmConfig {
  int hidden = 128;
  int epochs = 30;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

// Gate parameters {prefix}{w,u,b}_{i,f,g,o}; the forget bias starts at one.
void add_lstm_params(ParameterStore& s, const std::string& prefix, int feat, int hidden,
                     std::uint64_t seed);
// Unrolls over the bound frame nodes and returns the final hidden state node.
NodeId build_lstm(Graph& g, const std::string& prefix, const std::vector<NodeId>& frames,
                  int hidden);

struct ClassifierReport {
  double train_accuracy = 0, test_accuracy = 0;
  int classes = 0, train_count = 0, test_count = 0;
  std::vector<double> epoch_loss;  // mean train cross-entropy per epoch
};

// One-layer recurrent classifier trained per-sequence with SGD. Owns its
// parameters; the pose model's store is never touched.
class SequenceClassifier {
 public:
  SequenceClassifier(int feat_dim, int n_classes, const LstmConfig& cfg);

  ClassifierReport fit(const std::vector<SequenceFeatures>& data);
  int predict(const Tensor& feats);
  double cross_entropy(const Tensor& feats, int label);
  const ParameterStore& store() const { return store_; }

 private:
  LstmConfig cfg_;
  int feat_ = 0, classes_ = 0, seq_len_ = 0;
  ParameterStore store_;
  Rng rng_;
  Graph g_;
  std::vector<NodeId> frame_in_;
  NodeId label_in_ = -1, logp_ = -1, loss_ = -1;
  std::vector<double> grad_;

  void ensure_graph(int frames);
  void bind_sequence(const Tensor& feats, int label);
};

}  // namespace skelrep
