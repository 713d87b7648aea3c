#include "skelrep/trainer.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace skelrep {

namespace {

void check_cfg(const TrainConfig& c) {
  if (c.lr <= 0) throw std::invalid_argument("train: lr must be positive");
  if (c.batch < 1) throw std::invalid_argument("train: batch must be >= 1");
  if (c.steps < 0) throw std::invalid_argument("train: steps must be >= 0");
  if (c.threads < 1) throw std::invalid_argument("train: threads must be >= 1");
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

Trainer::Trainer(ParameterStore* store, const SkeletonTopology& topo, const DaeConfig& model_cfg,
                 const TrainConfig& cfg)
    : store_(store), topo_(topo), mcfg_(model_cfg), cfg_(cfg), rng_(cfg.seed) {
  check_cfg(cfg_);
  if (!store_) throw std::invalid_argument("train: null parameter store");
  for (int t = 0; t < cfg_.threads; ++t)
    models_.push_back(std::make_unique<SiameseModel>(store_, topo_, mcfg_));
  bufs_.assign(cfg_.batch, std::vector<double>(store_->flat_size(), 0.0));
  comps_.resize(cfg_.batch);
}

nlohmann::json Trainer::train_state() const {
  return {{"format_version", 1}, {"step", step_}, {"rng", rng_.state()}};
}

void Trainer::restore(const nlohmann::json& s) {
  if (s.at("format_version").get<int>() != 1)
    throw std::runtime_error("train_state: unsupported format_version");
  step_ = s.at("step").get<long>();
  rng_.set_state(s.at("rng").get<std::string>());
}

Trainer::StepStats Trainer::train_step(const std::vector<PoseRecord>& records) {
  const int B = cfg_.batch;
  const std::size_t n = store_->flat_size();
  auto t0 = std::chrono::steady_clock::now();

  // The generator is consumed in a fixed serial order (indices, then one
  // rotation per element, always drawn even when the rotated stream is off)
  // so the stream position is independent of toggles and thread count.
  std::vector<std::size_t> idx(B);
  for (int e = 0; e < B; ++e) idx[e] = rng_.uniform_int(records.size());
  std::vector<Rotation> rots(B);
  for (int e = 0; e < B; ++e) rots[e] = random_rotation(rng_);

  for (auto& b : bufs_) std::fill(b.begin(), b.end(), 0.0);

  auto element = [&](int e) {
    int tid = omp_get_thread_num();
    const PoseRecord& r = records[idx[e]];
    comps_[e] = models_[tid]->forward_backward(r.corrupt, r.clean, &rots[e], bufs_[e].data());
  };
  if (cfg_.threads == 1) {
    for (int e = 0; e < B; ++e) element(e);
  } else {
    std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static) num_threads(cfg_.threads)
    for (int e = 0; e < B; ++e) {
      try {
        element(e);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
  }

  // Decay value at the pre-update parameters, in entry order.
  double reg = 0;
  for (int i = 0; i < store_->count(); ++i) {
    if (!store_->is_kernel(i)) continue;
    for (double x : store_->tensor(i).v) reg += x * x;
  }
  reg *= mcfg_.l2;

  // Coordinate-wise reduction in element order, decay, and the SGD update in
  // one pass. Coordinates are independent, so splitting them across threads
  // cannot change any result bit.
#pragma omp parallel for schedule(static) num_threads(cfg_.threads) if (cfg_.threads > 1)
  for (std::size_t c = 0; c < n; ++c) {
    double acc = 0;
    for (int e = 0; e < B; ++e) acc += bufs_[e][c];
    double g = acc / B;
    double w = store_->get_flat(c);
    auto [entry, k] = store_->entry_at(c);
    (void)k;
    if (store_->is_kernel(entry)) g += 2.0 * mcfg_.l2 * w;
    store_->set_flat(c, w - cfg_.lr * g);
  }

  StepStats s;
  s.reg = reg;
  for (int e = 0; e < B; ++e) {
    s.mean.total += comps_[e].total;
    s.mean.l_p1 += comps_[e].l_p1;
    s.mean.l_p2 += comps_[e].l_p2;
    s.mean.l_pt1 += comps_[e].l_pt1;
    s.mean.l_pt2 += comps_[e].l_pt2;
    s.mean.l_f += comps_[e].l_f;
    s.mean.l_o += comps_[e].l_o;
  }
  s.mean.total /= B;
  s.mean.l_p1 /= B;
  s.mean.l_p2 /= B;
  s.mean.l_pt1 /= B;
  s.mean.l_pt2 /= B;
  s.mean.l_f /= B;
  s.mean.l_o /= B;

  if (!std::isfinite(s.mean.total) || !std::isfinite(s.reg)) {
    char msg[256];
    std::snprintf(msg, sizeof msg,
                  "training diverged at step %ld: total=%g l_p1=%g l_p2=%g l_pt1=%g l_pt2=%g "
                  "l_f=%g l_o=%g reg=%g",
                  step_ + 1, s.mean.total, s.mean.l_p1, s.mean.l_p2, s.mean.l_pt1, s.mean.l_pt2,
                  s.mean.l_f, s.mean.l_o, s.reg);
    throw std::runtime_error(msg);
  }

  s.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

TrainResult Trainer::run(const PoseDataset& train, const std::string& metrics_path,
                         const std::string& checkpoint_path, const nlohmann::json& config_echo) {
  if (train.records.empty()) throw std::invalid_argument("train: empty dataset");
  TrainResult res;
  res.step = step_;
  if (cfg_.steps == 0) return res;

  std::ofstream metrics;
  if (!metrics_path.empty()) {
    bool fresh = !std::filesystem::exists(metrics_path) ||
                 std::filesystem::file_size(metrics_path) == 0;
    metrics.open(metrics_path, std::ios::app);
    if (!metrics) throw std::runtime_error("train: cannot open metrics file " + metrics_path);
    if (fresh) {
      nlohmann::json meta = {{"lr", cfg_.lr},     {"batch", cfg_.batch},
                             {"steps", cfg_.steps}, {"seed", cfg_.seed},
                             {"threads", cfg_.threads}};
      if (!config_echo.empty()) meta["config"] = config_echo;
      metrics << "# config " << meta.dump() << "\n";
      metrics << "step,loss_total,l_p1,l_p2,l_pt1,l_pt2,l_f,l_o,reg,wall_ms\n";
    }
  }

  for (long s = 1; s <= cfg_.steps; ++s) {
    StepStats st = train_step(train.records);
    ++step_;

    // The logged total is the exact fold of the logged columns, so the file
    // is self-consistent in floating point.
    double total = ((((((st.mean.l_p1 + st.mean.l_p2) + st.mean.l_pt1) + st.mean.l_pt2) +
                     st.mean.l_f) +
                    st.mean.l_o) +
                   st.reg);

    if (metrics.is_open() &&
        (s == 1 || s == cfg_.steps || (cfg_.log_every > 0 && step_ % cfg_.log_every == 0))) {
      char wall[32];
      std::snprintf(wall, sizeof wall, "%.3f", st.wall_ms);
      metrics << step_ << ',' << fmt(total) << ',' << fmt(st.mean.l_p1) << ','
              << fmt(st.mean.l_p2) << ',' << fmt(st.mean.l_pt1) << ',' << fmt(st.mean.l_pt2)
              << ',' << fmt(st.mean.l_f) << ',' << fmt(st.mean.l_o) << ',' << fmt(st.reg) << ','
              << wall << '\n';
      metrics.flush();
    }

    if (!checkpoint_path.empty() &&
        ((cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0) || s == cfg_.steps)) {
      nlohmann::json cfgj = config_echo;
      cfgj["train_state"] = train_state();
      save_checkpoint(*store_, cfgj, checkpoint_path);
    }

    if (s == cfg_.steps) {
      res.step = step_;
      res.loss_total = total;
      res.last = st.mean;
      res.reg = st.reg;
    }
  }
  return res;
}

}  // namespace skelrep
