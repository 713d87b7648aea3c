#include "skelrep/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace skelrep {

namespace {

// Tracks which keys a section consumed; done() flags the rest.
class Section {
 public:
  Section(const nlohmann::json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object())
      throw std::invalid_argument("config: " + (ctx_.empty() ? "document" : ctx_) +
                                  " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw std::invalid_argument("config: bad value at " + path(key));
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const nlohmann::json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void done() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw std::invalid_argument("config: unknown key " + path(k));
  }

  std::string path(const std::string& k) const { return ctx_.empty() ? k : ctx_ + "." + k; }

 private:
  const nlohmann::json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

void get_range(Section& s, const char* key, double& lo, double& hi) {
  if (!s.has(key)) return;
  const auto& a = s.raw(key);
  if (!a.is_array() || a.size() != 2)
    throw std::invalid_argument("config: " + s.path(key) + " must be [lo, hi]");
  lo = a[0].get<double>();
  hi = a[1].get<double>();
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  Section top(j, "");
  int version = 1;
  top.get("format_version", version);
  if (version != 1) throw std::invalid_argument("config: unsupported format_version");
  top.get("seed", c.seed);
  top.get("threads", c.threads);

  if (top.has("topology")) {
    const auto& t = top.raw("topology");
    if (t.is_string()) {
      if (t.get<std::string>() != "builtin17")
        throw std::invalid_argument("config: topology string must be \"builtin17\"");
    } else {
      Section ts(t, "topology");
      ts.get("file", c.topology_file);
      ts.done();
      if (c.topology_file.empty())
        throw std::invalid_argument("config: topology.file must be a path");
    }
  }

  if (top.has("model")) {
    Section m(top.raw("model"), "model");
    m.get("hidden", c.model.tree.hidden);
    m.get("passes", c.model.tree.passes);
    if (m.has("variant")) {
      auto s = m.raw("variant").get<std::string>();
      c.model.tree.variant = tree_variant_from_string(s);
    }
    m.get("z", c.model.z);
    m.get("trunk_width", c.model.trunk_width);
    m.get("share_enc_dec_tree", c.model.share_enc_dec_tree);
    m.get("omega1", c.model.omega1);
    m.get("omega2", c.model.omega2);
    m.get("omega3", c.model.omega3);
    m.get("lambda_orth", c.model.lambda_orth);
    m.get("l2", c.model.l2);
    m.get("coarse_scale", c.model.coarse_scale);
    m.get("input_scale", c.model.input_scale);
    if (m.has("toggles")) {
      Section t(m.raw("toggles"), "model.toggles");
      t.get("feature_decomposition", c.model.toggles.feature_decomposition);
      t.get("rotated_stream", c.model.toggles.rotated_stream);
      t.get("view_transfer", c.model.toggles.view_transfer);
      t.get("loss_feat", c.model.toggles.loss_feat);
      t.get("loss_orth", c.model.toggles.loss_orth);
      t.done();
    }
    m.done();
  }

  if (top.has("train")) {
    Section t(top.raw("train"), "train");
    t.get("lr", c.train.lr);
    t.get("batch", c.train.batch);
    t.get("steps", c.train.steps);
    t.get("log_every", c.train.log_every);
    t.get("checkpoint_every", c.train.checkpoint_every);
    t.done();
  }

  if (top.has("data")) {
    Section d(top.raw("data"), "data");
    d.get("n_train", c.data.n_train);
    d.get("n_test", c.data.n_test);
    d.get("k_min", c.data.corruption.k_min);
    d.get("k_max", c.data.corruption.k_max);
    d.get("displacement_min_torso", c.data.corruption.disp_min_torso);
    d.get("displacement_max_torso", c.data.corruption.disp_max_torso);
    d.done();
  }

  if (top.has("actions")) {
    Section a(top.raw("actions"), "actions");
    a.get("seq_len", c.actions.seq_len);
    a.get("train_per_class", c.actions.train_per_class);
    a.get("test_per_class", c.actions.test_per_class);
    get_range(a, "train_azimuth_deg", c.actions.train_azimuth_lo, c.actions.train_azimuth_hi);
    get_range(a, "test_azimuth_deg", c.actions.test_azimuth_lo, c.actions.test_azimuth_hi);
    a.get("tilt_max", c.actions.tilt_max);
    a.done();
  }

  if (top.has("classifier")) {
    Section k(top.raw("classifier"), "classifier");
    k.get("hidden", c.classifier.hidden);
    k.get("epochs", c.classifier.epochs);
    k.get("lr", c.classifier.lr);
    k.done();
  }

  top.done();
  c.train.seed = c.seed;
  c.train.threads = c.threads;
  c.classifier.seed = c.seed;
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

SkeletonTopology RunConfig::topology() const {
  if (topology_file.empty()) return SkeletonTopology::default17();
  std::ifstream in(topology_file);
  if (!in) throw std::runtime_error("config: cannot open topology file " + topology_file);
  nlohmann::json j;
  in >> j;
  return SkeletonTopology::from_json(j);
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  if (c.topology_file.empty())
    j["topology"] = "builtin17";
  else
    j["topology"] = {{"file", c.topology_file}};
  j["model"] = {{"hidden", c.model.tree.hidden},
                {"passes", c.model.tree.passes},
                {"variant", to_string(c.model.tree.variant)},
                {"z", c.model.z},
                {"trunk_width", c.model.trunk_width},
                {"share_enc_dec_tree", c.model.share_enc_dec_tree},
                {"omega1", c.model.omega1},
                {"omega2", c.model.omega2},
                {"omega3", c.model.omega3},
                {"lambda_orth", c.model.lambda_orth},
                {"l2", c.model.l2},
                {"coarse_scale", c.model.coarse_scale},
                {"input_scale", c.model.input_scale},
                {"toggles",
                 {{"feature_decomposition", c.model.toggles.feature_decomposition},
                  {"rotated_stream", c.model.toggles.rotated_stream},
                  {"view_transfer", c.model.toggles.view_transfer},
                  {"loss_feat", c.model.toggles.loss_feat},
                  {"loss_orth", c.model.toggles.loss_orth}}}};
  j["train"] = {{"lr", c.train.lr},
                {"batch", c.train.batch},
                {"steps", c.train.steps},
                {"log_every", c.train.log_every},
                {"checkpoint_every", c.train.checkpoint_every}};
  j["data"] = {{"n_train", c.data.n_train},
               {"n_test", c.data.n_test},
               {"k_min", c.data.corruption.k_min},
               {"k_max", c.data.corruption.k_max},
               {"displacement_min_torso", c.data.corruption.disp_min_torso},
               {"displacement_max_torso", c.data.corruption.disp_max_torso}};
  j["actions"] = {{"seq_len", c.actions.seq_len},
                  {"train_per_class", c.actions.train_per_class},
                  {"test_per_class", c.actions.test_per_class},
                  {"train_azimuth_deg", {c.actions.train_azimuth_lo, c.actions.train_azimuth_hi}},
                  {"test_azimuth_deg", {c.actions.test_azimuth_lo, c.actions.test_azimuth_hi}},
                  {"tilt_max", c.actions.tilt_max}};
  j["classifier"] = {
      {"hidden", c.classifier.hidden}, {"epochs", c.classifier.epochs}, {"lr", c.classifier.lr}};
  return j;
}

std::uint64_t config_hash(const RunConfig& c) { return fnv1a(to_json(c).dump()); }

}  // namespace skelrep
