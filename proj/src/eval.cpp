#include "skelrep/eval.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace skelrep {

namespace {

// Runs fn(item, model) over [0, n) with one model per thread; exceptions are
// replayed on the caller thread.
template <typename Fn>
void model_sweep(const ParameterStore* store, const SkeletonTopology& topo, const DaeConfig& cfg,
                 std::size_t n, int threads, Fn&& fn) {
  if (threads < 1) throw std::invalid_argument("eval: threads must be >= 1");
  if (threads == 1) {
    SiameseModel model(store, topo, cfg);
    for (std::size_t i = 0; i < n; ++i) fn(i, model);
    return;
  }
  std::vector<std::unique_ptr<SiameseModel>> models;
  for (int t = 0; t < threads; ++t) models.push_back(std::make_unique<SiameseModel>(store, topo, cfg));
  std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static) num_threads(threads)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      fn(i, *models[omp_get_thread_num()]);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

double feat_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

DenoiseReport denoise_eval(const ParameterStore* store, const SkeletonTopology& topo,
                           const DaeConfig& cfg, const std::vector<PoseRecord>& records,
                           int threads) {
  if (records.empty()) throw std::invalid_argument("denoise_eval: empty record set");
  std::vector<double> in_err(records.size()), out_err(records.size());
  model_sweep(store, topo, cfg, records.size(), threads, [&](std::size_t i, SiameseModel& m) {
    in_err[i] = mpjpe(records[i].corrupt, records[i].clean);
    out_err[i] = mpjpe(m.denoised(records[i].corrupt), records[i].clean);
  });
  DenoiseReport r;
  r.count = static_cast<int>(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    r.mpjpe_input += in_err[i];
    r.mpjpe_recovered += out_err[i];
  }
  r.mpjpe_input /= r.count;
  r.mpjpe_recovered /= r.count;
  return r;
}

InvarianceReport invariance_score(const ParameterStore* store, const SkeletonTopology& topo,
                                  const DaeConfig& cfg, const std::vector<PoseRecord>& records,
                                  int n_rotations, std::uint64_t seed, int threads) {
  if (records.empty()) throw std::invalid_argument("invariance_score: empty record set");
  if (n_rotations < 2) throw std::invalid_argument("invariance_score: need >= 2 rotations");
  const std::size_t N = records.size(), K = n_rotations;

  // One rotation set shared by every pose, so within-pose spread measures
  // exactly the view sensitivity and nothing else.
  Rng rng(seed);
  std::vector<Rotation> rots(K);
  for (auto& r : rots) r = random_rotation(rng);

  std::vector<std::vector<double>> feats(N * K);
  model_sweep(store, topo, cfg, N * K, threads, [&](std::size_t i, SiameseModel& m) {
    const Pose& clean = records[i / K].clean;
    feats[i] = m.pose_feature(apply_rotation(clean, rots[i % K])).v;
  });

  InvarianceReport rep;
  rep.poses = static_cast<int>(N);
  rep.rotations = static_cast<int>(K);
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = k + 1; l < K; ++l) {
        rep.intra += feat_dist(feats[i * K + k], feats[i * K + l]);
        ++n_intra;
      }
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j)
      for (std::size_t k = 0; k < K; ++k) {
        rep.inter += feat_dist(feats[i * K + k], feats[j * K + k]);
        ++n_inter;
      }
  rep.intra /= n_intra;
  rep.inter /= n_inter;
  if (rep.intra == 0)
    rep.score = rep.inter == 0 ? 1.0 : std::numeric_limits<double>::infinity();
  else
    rep.score = rep.inter / rep.intra;
  return rep;
}

double orthogonality_error_mean(const ParameterStore* store, const SkeletonTopology& topo,
                                const DaeConfig& cfg, const std::vector<PoseRecord>& records,
                                int threads) {
  if (records.empty()) throw std::invalid_argument("orthogonality: empty record set");
  const int z = cfg.z;
  std::vector<double> errs(records.size());
  model_sweep(store, topo, cfg, records.size(), threads, [&](std::size_t i, SiameseModel& m) {
    Tensor v = m.view_feature(records[i].corrupt);
    double sum = 0;
    for (int r = 0; r < z; ++r)
      for (int c = 0; c < z; ++c) {
        double dot = 0;  // (v^T v)[r][c] = column r . column c
        for (int k = 0; k < z; ++k) dot += v.at(k, r) * v.at(k, c);
        double d = (r == c ? 1.0 : 0.0) - dot;
        sum += d * d;
      }
    errs[i] = std::sqrt(sum);
  });
  double mean = 0;
  for (double e : errs) mean += e;
  return mean / records.size();
}

std::vector<SequenceFeatures> extract_action_features(const ParameterStore* store,
                                                      const SkeletonTopology& topo,
                                                      const DaeConfig& cfg,
                                                      const std::vector<ActionSequence>& seqs,
                                                      int threads) {
  std::vector<SequenceFeatures> out(seqs.size());
  model_sweep(store, topo, cfg, seqs.size(), threads, [&](std::size_t i, SiameseModel& m) {
    const ActionSequence& s = seqs[i];
    if (s.frames.empty()) throw std::invalid_argument("extract: empty sequence");
    auto first = m.pose_feature(center_root(s.frames[0], topo).first);
    const std::size_t fdim = first.v.size() + 3;
    Tensor rows({s.frames.size(), fdim});
    for (std::size_t t = 0; t < s.frames.size(); ++t) {
      auto [centered, root] = center_root(s.frames[t], topo);
      auto f = t == 0 ? first : m.pose_feature(centered);
      std::copy(f.v.begin(), f.v.end(), rows.v.begin() + t * fdim);
      for (int a = 0; a < 3; ++a) rows.v[t * fdim + f.v.size() + a] = root[a];
    }
    out[i] = SequenceFeatures{s.label, s.train_split, std::move(rows)};
  });
  return out;
}

std::uint64_t flat_hash(const ParameterStore& store) {
  std::vector<double> flat;
  store.copy_flat(flat);
  return fnv1a(std::string_view(reinterpret_cast<const char*>(flat.data()),
                                flat.size() * sizeof(double)));
}

// --- recurrent sequence classifier -------------------------------------------

void add_lstm_params(ParameterStore& s, const std::string& prefix, int feat, int hidden,
                     std::uint64_t seed) {
  if (feat < 1 || hidden < 1) throw std::invalid_argument("lstm: bad dimensions");
  for (const char* gate : {"i", "f", "g", "o"}) {
    add_kernel(s, prefix + "w_" + gate, hidden, feat, seed);
    add_kernel(s, prefix + "u_" + gate, hidden, hidden, seed);
    if (gate[0] == 'f')
      // A unit forget bias keeps early gradients flowing through the chain.
      add_bias(s, prefix + "b_f", std::vector<double>(hidden, 1.0), {static_cast<std::size_t>(hidden)});
    else
      add_bias(s, prefix + std::string("b_") + gate, hidden);
  }
}

NodeId build_lstm(Graph& g, const std::string& prefix, const std::vector<NodeId>& frames,
                  int hidden) {
  if (frames.empty()) throw std::invalid_argument("lstm: no frames");
  auto gate_in = [&](const char* gate, NodeId x, NodeId h) {
    auto wx = g.matmul(g.parameter(prefix + "w_" + gate), x);
    auto uh = g.matmul(g.parameter(prefix + "u_" + gate), h);
    return g.add(g.add(wx, uh), g.parameter(prefix + std::string("b_") + gate));
  };
  Tensor zero({static_cast<std::size_t>(hidden)});
  NodeId h = g.constant(zero), c = g.constant(zero);
  for (NodeId x : frames) {
    auto i = g.sigmoid(gate_in("i", x, h));
    auto f = g.sigmoid(gate_in("f", x, h));
    auto cand = g.tanh(gate_in("g", x, h));
    auto o = g.sigmoid(gate_in("o", x, h));
    c = g.add(g.hadamard(f, c), g.hadamard(i, cand));
    h = g.hadamard(o, g.tanh(c));
  }
  return h;
}

SequenceClassifier::SequenceClassifier(int feat_dim, int n_classes, const LstmConfig& cfg)
    : cfg_(cfg), feat_(feat_dim), classes_(n_classes), rng_(cfg.seed), g_(&store_) {
  if (n_classes < 2) throw std::invalid_argument("classifier: need >= 2 classes");
  if (cfg.hidden < 1 || cfg.epochs < 0 || cfg.lr <= 0)
    throw std::invalid_argument("classifier: bad config");
  add_lstm_params(store_, "lstm.", feat_, cfg_.hidden, cfg_.seed);
  add_kernel(store_, "cls.w", n_classes, cfg_.hidden, cfg_.seed);
  add_bias(store_, "cls.b", n_classes);
  grad_.assign(store_.flat_size(), 0.0);
}

void SequenceClassifier::ensure_graph(int frames) {
  if (seq_len_ == frames) return;
  if (seq_len_ != 0) throw std::invalid_argument("classifier: sequence length mismatch");
  seq_len_ = frames;
  frame_in_.clear();
  for (int t = 0; t < frames; ++t)
    frame_in_.push_back(g_.input({static_cast<std::size_t>(feat_)}, "frame" + std::to_string(t)));
  auto h = build_lstm(g_, "lstm.", frame_in_, cfg_.hidden);
  auto logits = g_.add(g_.matmul(g_.parameter("cls.w"), h), g_.parameter("cls.b"));
  logp_ = g_.log_softmax(logits);
  label_in_ = g_.input({static_cast<std::size_t>(classes_)}, "onehot");
  loss_ = g_.scale(g_.sum(g_.hadamard(logp_, label_in_)), -1.0);
  g_.set_label(loss_, "cross_entropy");
  g_.set_param_grad_sink(grad_.data());
}

void SequenceClassifier::bind_sequence(const Tensor& feats, int label) {
  if (feats.shape.size() != 2 || feats.shape[1] != static_cast<std::size_t>(feat_))
    throw std::invalid_argument("classifier: feature shape mismatch, got " + feats.shape_str());
  if (label < 0 || label >= classes_) throw std::invalid_argument("classifier: label out of range");
  ensure_graph(static_cast<int>(feats.shape[0]));
  for (int t = 0; t < seq_len_; ++t)
    g_.bind(frame_in_[t], feats.v.data() + static_cast<std::size_t>(t) * feat_,
            static_cast<std::size_t>(feat_));
  std::vector<double> onehot(classes_, 0.0);
  onehot[label] = 1.0;
  g_.bind(label_in_, onehot);
}

double SequenceClassifier::cross_entropy(const Tensor& feats, int label) {
  bind_sequence(feats, label);
  g_.forward();
  return g_.scalar(loss_);
}

int SequenceClassifier::predict(const Tensor& feats) {
  bind_sequence(feats, 0);
  g_.forward();
  auto lp = g_.value(logp_);
  return static_cast<int>(std::max_element(lp.v.begin(), lp.v.end()) - lp.v.begin());
}

ClassifierReport SequenceClassifier::fit(const std::vector<SequenceFeatures>& data) {
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].train_split) train_idx.push_back(i);
  if (train_idx.empty()) throw std::invalid_argument("classifier: no training sequences");

  ClassifierReport rep;
  rep.classes = classes_;
  rep.train_count = static_cast<int>(train_idx.size());
  rep.test_count = static_cast<int>(data.size() - train_idx.size());

  std::vector<std::size_t> order = train_idx;
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      std::size_t j = i + rng_.uniform_int(order.size() - i);
      std::swap(order[i], order[j]);
    }
    double ce_sum = 0;
    for (std::size_t idx : order) {
      bind_sequence(data[idx].feats, data[idx].label);
      g_.forward();
      ce_sum += g_.scalar(loss_);
      std::fill(grad_.begin(), grad_.end(), 0.0);
      g_.backward(loss_);
      for (std::size_t c = 0; c < grad_.size(); ++c)
        store_.set_flat(c, store_.get_flat(c) - cfg_.lr * grad_[c]);
    }
    rep.epoch_loss.push_back(ce_sum / order.size());
  }

  int train_hit = 0, test_hit = 0;
  for (const auto& s : data) {
    bool hit = predict(s.feats) == s.label;
    (s.train_split ? train_hit : test_hit) += hit ? 1 : 0;
  }
  rep.train_accuracy = rep.train_count ? static_cast<double>(train_hit) / rep.train_count : 0;
  rep.test_accuracy = rep.test_count ? static_cast<double>(test_hit) / rep.test_count : 0;
  return rep;
}

}  // namespace skelrep
