#pragma once

#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "skelrep/dae.hpp"
#include "skelrep/synth.hpp"

namespace skelrep {

struct TrainConfig {
  double lr = 5e-5;
  int batch = 64;
  long steps = 1000;
  long log_every = 50;        // metrics cadence; first and last step always log
  long checkpoint_every = 0;  // 0 = only at the end (when a path is given)
  std::uint64_t seed = 1;
  int threads = 1;
};

struct TrainResult {
  long step = 0;         // global step counter after the run
  double loss_total = 0; // objective at the last step (fold of components + decay)
  SiameseModel::Components last;  // batch means at the last step
  double reg = 0;                 // weight-decay value at the last step
};

// Minibatch SGD over the siamese objective. Per-element gradients land in
// private buffers and are reduced coordinate-wise in element order, so the
// result is bitwise independent of the thread count. Weight decay is applied
// analytically after the batch reduction (see build_regularizer for the
// in-graph twin used by gradient checks).
class Trainer {
 public:
  Trainer(ParameterStore* store, const SkeletonTopology& topo, const DaeConfig& model_cfg,
          const TrainConfig& cfg);

  // Runs cfg.steps further steps. Appends metrics rows to metrics_path and
  // writes checkpoints (with the train state embedded in the config blob) to
  // checkpoint_path; either path may be empty to skip that artifact.
  // config_echo is merged into the checkpoint config and the metrics header.
  TrainResult run(const PoseDataset& train, const std::string& metrics_path = "",
                  const std::string& checkpoint_path = "",
                  const nlohmann::json& config_echo = nlohmann::json::object());

  long step() const { return step_; }

  // Round-trips the step counter and generator state for bitwise resume.
  nlohmann::json train_state() const;
  void restore(const nlohmann::json& train_state);

 private:
  ParameterStore* store_;
  SkeletonTopology topo_;
  DaeConfig mcfg_;
  TrainConfig cfg_;
  long step_ = 0;
  Rng rng_;
  std::vector<std::unique_ptr<SiameseModel>> models_;
  std::vector<std::vector<double>> bufs_;
  std::vector<SiameseModel::Components> comps_;

  struct StepStats {
    SiameseModel::Components mean;
    double reg = 0;
    double wall_ms = 0;
  };
  StepStats train_step(const std::vector<PoseRecord>& records);
};

}  // namespace skelrep
