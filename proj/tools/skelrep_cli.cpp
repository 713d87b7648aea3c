#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "skelrep/config.hpp"
#include "skelrep/svg.hpp"

using namespace skelrep;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void emit(const json& j, const std::string& out_path) {
  std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) write_text_file(out_path, text);
}

// Per-subcommand common options: config file plus seed/thread overrides.
struct Base {
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run configuration JSON (defaults when omitted)")
        ->check(CLI::ExistingFile);
    seed_opt = cmd->add_option("--seed", seed, "Override the config seed");
    threads_opt = cmd->add_option("--threads", threads, "Override the config thread count");
  }

  RunConfig config() const {
    RunConfig c = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed_opt->count()) {
      c.seed = seed;
      c.train.seed = seed;
      c.classifier.seed = seed;
    }
    if (threads_opt->count()) {
      c.threads = threads;
      c.train.threads = threads;
    }
    return c;
  }
};

json echo_of(const RunConfig& cfg) {
  json e = to_json(cfg);
  e["config_hash"] = hex64(config_hash(cfg));
  return e;
}

void require_builtin(const RunConfig& cfg, const char* what) {
  if (!cfg.topology_file.empty())
    throw std::invalid_argument(std::string(what) +
                                ": only the built-in topology has a body template to sample");
}

// Registers the architecture, warm-starting the coarse decoder from the body
// template when the built-in topology is in play.
ParameterStore make_store(const RunConfig& cfg, const SkeletonTopology& topo) {
  ParameterStore s;
  if (cfg.topology_file.empty()) {
    Pose tmpl = PoseSampler::default_human().template_pose();
    add_dae_params(s, topo, cfg.model, cfg.seed, &tmpl);
  } else {
    add_dae_params(s, topo, cfg.model, cfg.seed, nullptr);
  }
  return s;
}

json load_model(const RunConfig& cfg, const SkeletonTopology& topo, ParameterStore& store,
                const std::string& checkpoint) {
  json ckpt_cfg = load_checkpoint_into(store, checkpoint);
  if (ckpt_cfg.contains("model") && ckpt_cfg.at("model") != to_json(cfg).at("model"))
    throw std::runtime_error("checkpoint " + checkpoint +
                             " was trained with a different model section than this config");
  (void)topo;
  return ckpt_cfg;
}

void check_poses_match(const PoseDataset& d, const SkeletonTopology& topo,
                       const std::string& path) {
  if (d.records.empty()) throw std::runtime_error(path + ": no records");
  if (static_cast<int>(d.records[0].clean.joints.size()) != topo.joint_count())
    throw std::runtime_error(path + ": joint count does not match the configured topology");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-recurrent pose representation workbench: synthetic skeleton corpora, "
               "denoising autoencoder training, and view-invariance evaluation"};
  app.require_subcommand(1);

  // --- gen-data ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "Generate train and test pose corpora (JSONL)");
  Base gen_b;
  gen_b.attach(gen);
  std::string gen_train, gen_test;
  gen->add_option("--out-train", gen_train, "Training corpus path")->required();
  gen->add_option("--out-test", gen_test, "Test corpus path")->required();
  gen->callback([&] {
    RunConfig cfg = gen_b.config();
    require_builtin(cfg, "gen-data");
    auto sampler = PoseSampler::default_human();
    json echo = echo_of(cfg);
    // The held-out corpus runs on a decorrelated seed so records never overlap.
    std::uint64_t test_seed = cfg.seed ^ fnv1a("pose_test_split");
    echo["split"] = "train";
    generate_pose_dataset(sampler, cfg.data.n_train, cfg.seed, cfg.data.corruption, echo,
                          gen_train, cfg.threads);
    echo["split"] = "test";
    generate_pose_dataset(sampler, cfg.data.n_test, test_seed, cfg.data.corruption, echo, gen_test,
                          cfg.threads);
    emit(json{{"train", gen_train},
              {"test", gen_test},
              {"n_train", cfg.data.n_train},
              {"n_test", cfg.data.n_test}},
         "");
  });

  // --- gen-actions ------------------------------------------------------------
  auto* gact = app.add_subcommand("gen-actions", "Generate the action sequence corpus (JSONL)");
  Base gact_b;
  gact_b.attach(gact);
  std::string gact_out;
  gact->add_option("--out", gact_out, "Action corpus path")->required();
  gact->callback([&] {
    RunConfig cfg = gact_b.config();
    require_builtin(cfg, "gen-actions");
    auto sampler = PoseSampler::default_human();
    auto data = generate_action_dataset(sampler, cfg.actions, cfg.seed, echo_of(cfg), gact_out,
                                        cfg.threads);
    emit(json{{"out", gact_out},
              {"sequences", data.seqs.size()},
              {"classes", action_class_count()},
              {"seq_len", cfg.actions.seq_len}},
         "");
  });

  // --- train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train the denoising autoencoder");
  Base train_b;
  train_b.attach(train);
  std::string train_data, train_out_dir, train_resume;
  long train_steps = -1;
  train->add_option("--data", train_data, "Training pose corpus")->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out-dir", train_out_dir, "Artifact directory (metrics.csv, model.ckpt)")
      ->required();
  train->add_option("--resume", train_resume, "Checkpoint to continue from")
      ->check(CLI::ExistingFile);
  train->add_option("--steps", train_steps, "Override train.steps");
  train->callback([&] {
    RunConfig cfg = train_b.config();
    if (train_steps >= 0) cfg.train.steps = train_steps;
    auto topo = cfg.topology();
    auto data = load_pose_dataset(train_data);
    check_poses_match(data, topo, train_data);

    ParameterStore store = make_store(cfg, topo);
    Trainer trainer(&store, topo, cfg.model, cfg.train);
    if (!train_resume.empty()) {
      json ckpt_cfg = load_checkpoint_into(store, train_resume);
      if (!ckpt_cfg.contains("train_state"))
        throw std::runtime_error(train_resume + ": checkpoint has no train_state to resume");
      trainer.restore(ckpt_cfg.at("train_state"));
    }

    std::filesystem::create_directories(train_out_dir);
    std::string metrics = train_out_dir + "/metrics.csv";
    std::string ckpt = train_out_dir + "/model.ckpt";
    auto res = trainer.run(data, metrics, ckpt, echo_of(cfg));
    emit(json{{"step", res.step},
              {"loss_total", res.loss_total},
              {"l_p1", res.last.l_p1},
              {"l_o", res.last.l_o},
              {"metrics", metrics},
              {"checkpoint", ckpt}},
         "");
  });

  // --- denoise ----------------------------------------------------------------
  auto* den = app.add_subcommand("denoise", "Measure corruption recovery on a pose corpus");
  Base den_b;
  den_b.attach(den);
  std::string den_ckpt, den_data, den_out;
  den->add_option("--checkpoint", den_ckpt, "Trained model checkpoint")->required()
      ->check(CLI::ExistingFile);
  den->add_option("--data", den_data, "Test pose corpus")->required()->check(CLI::ExistingFile);
  den->add_option("--out", den_out, "Also write the report JSON here");
  den->callback([&] {
    RunConfig cfg = den_b.config();
    auto topo = cfg.topology();
    auto data = load_pose_dataset(den_data);
    check_poses_match(data, topo, den_data);
    ParameterStore store = make_store(cfg, topo);
    load_model(cfg, topo, store, den_ckpt);
    auto rep = denoise_eval(&store, topo, cfg.model, data.records, cfg.threads);
    emit(json{{"count", rep.count},
              {"mpjpe_input", rep.mpjpe_input},
              {"mpjpe_recovered", rep.mpjpe_recovered},
              {"ratio", rep.mpjpe_recovered / rep.mpjpe_input}},
         den_out);
  });

  // --- eval (view invariance) ---------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Score pose-feature view invariance");
  Base ev_b;
  ev_b.attach(ev);
  std::string ev_ckpt, ev_data, ev_out;
  int ev_rotations = 8;
  ev->add_option("--checkpoint", ev_ckpt, "Trained model checkpoint")->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Pose corpus whose clean poses are probed")->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--rotations", ev_rotations, "Shared random rotations per pose");
  ev->add_option("--out", ev_out, "Also write the report JSON here");
  ev->callback([&] {
    RunConfig cfg = ev_b.config();
    auto topo = cfg.topology();
    auto data = load_pose_dataset(ev_data);
    check_poses_match(data, topo, ev_data);
    ParameterStore store = make_store(cfg, topo);
    load_model(cfg, topo, store, ev_ckpt);
    auto rep = invariance_score(&store, topo, cfg.model, data.records, ev_rotations,
                                cfg.seed ^ fnv1a("invariance"), cfg.threads);
    emit(json{{"poses", rep.poses},
              {"rotations", rep.rotations},
              {"inter", rep.inter},
              {"intra", rep.intra},
              {"score", rep.score}},
         ev_out);
  });

  // --- extract ------------------------------------------------------------------
  auto* ex = app.add_subcommand("extract", "Export per-frame sequence features (JSONL)");
  Base ex_b;
  ex_b.attach(ex);
  std::string ex_ckpt, ex_actions, ex_out;
  ex->add_option("--checkpoint", ex_ckpt, "Trained model checkpoint")->required()
      ->check(CLI::ExistingFile);
  ex->add_option("--actions", ex_actions, "Action corpus")->required()->check(CLI::ExistingFile);
  ex->add_option("--out", ex_out, "Feature file path")->required();
  ex->callback([&] {
    RunConfig cfg = ex_b.config();
    auto topo = cfg.topology();
    auto data = load_action_dataset(ex_actions);
    ParameterStore store = make_store(cfg, topo);
    load_model(cfg, topo, store, ex_ckpt);
    auto feats = extract_action_features(&store, topo, cfg.model, data.seqs, cfg.threads);

    std::ofstream out(ex_out);
    if (!out) throw std::runtime_error("cannot open " + ex_out + " for writing");
    json header = {{"kind", "feature_dataset"},
                   {"format_version", 1},
                   {"count", feats.size()},
                   {"dim", feats.empty() ? 0 : feats[0].feats.shape[1]},
                   {"config", echo_of(cfg)}};
    out << header.dump() << "\n";
    for (const auto& f : feats) {
      json frames = json::array();
      for (std::size_t t = 0; t < f.feats.shape[0]; ++t) {
        json row = json::array();
        for (std::size_t d = 0; d < f.feats.shape[1]; ++d) row.push_back(f.feats.at(t, d));
        frames.push_back(std::move(row));
      }
      out << json{{"label", f.label}, {"train_split", f.train_split}, {"frames", frames}}.dump()
          << "\n";
    }
    emit(json{{"out", ex_out}, {"sequences", feats.size()}}, "");
  });

  // --- classify -------------------------------------------------------------------
  auto* cls = app.add_subcommand("classify",
                                 "Train the sequence classifier on frozen pose features");
  Base cls_b;
  cls_b.attach(cls);
  std::string cls_ckpt, cls_actions, cls_out;
  cls->add_option("--checkpoint", cls_ckpt, "Trained model checkpoint")->required()
      ->check(CLI::ExistingFile);
  cls->add_option("--actions", cls_actions, "Action corpus")->required()
      ->check(CLI::ExistingFile);
  cls->add_option("--out", cls_out, "Also write the report JSON here");
  cls->callback([&] {
    RunConfig cfg = cls_b.config();
    auto topo = cfg.topology();
    auto data = load_action_dataset(cls_actions);
    ParameterStore store = make_store(cfg, topo);
    load_model(cfg, topo, store, cls_ckpt);

    std::uint64_t hash_before = flat_hash(store);
    auto feats = extract_action_features(&store, topo, cfg.model, data.seqs, cfg.threads);
    if (feats.empty()) throw std::runtime_error(cls_actions + ": no sequences");
    SequenceClassifier clf(static_cast<int>(feats[0].feats.shape[1]), action_class_count(),
                           cfg.classifier);
    auto rep = clf.fit(feats);
    std::uint64_t hash_after = flat_hash(store);
    if (hash_before != hash_after)
      throw std::runtime_error("classifier training mutated the pose model parameters");

    emit(json{{"classes", rep.classes},
              {"train_count", rep.train_count},
              {"test_count", rep.test_count},
              {"train_accuracy", rep.train_accuracy},
              {"test_accuracy", rep.test_accuracy},
              {"encoder_hash", hex64(hash_after)},
              {"encoder_unchanged", true},
              {"epoch_loss", rep.epoch_loss}},
         cls_out);
  });

  // --- param-count ------------------------------------------------------------
  auto* pc = app.add_subcommand("param-count", "Report model parameter counts");
  Base pc_b;
  pc_b.attach(pc);
  pc->callback([&] {
    RunConfig cfg = pc_b.config();
    auto topo = cfg.topology();
    emit(json{{"joints", topo.joint_count()},
              {"tree_closed_form", nominal_param_count(topo, cfg.model.tree)},
              {"tree_registered", treenet_param_count(topo, cfg.model.tree)},
              {"model_total", dae_param_count(topo, cfg.model)}},
         "");
  });

  // --- render -------------------------------------------------------------------
  auto* ren = app.add_subcommand("render", "Draw a denoising triple or a metrics chart (SVG)");
  Base ren_b;
  ren_b.attach(ren);
  std::string ren_data, ren_ckpt, ren_metrics, ren_columns = "loss_total,l_p1,l_o", ren_out;
  std::size_t ren_index = 0;
  ren->add_option("--data", ren_data, "Pose corpus (clean/corrupted panel)")
      ->check(CLI::ExistingFile);
  ren->add_option("--index", ren_index, "Record index to draw");
  ren->add_option("--checkpoint", ren_ckpt, "Add the recovered pose from this model")
      ->check(CLI::ExistingFile);
  ren->add_option("--metrics", ren_metrics, "Metrics CSV (line chart)")->check(CLI::ExistingFile);
  ren->add_option("--columns", ren_columns, "Metrics columns, comma separated");
  ren->add_option("--out", ren_out, "SVG path")->required();
  ren->callback([&] {
    RunConfig cfg = ren_b.config();
    if (ren_data.empty() == ren_metrics.empty())
      throw std::invalid_argument("render: pass exactly one of --data or --metrics");
    std::string svg;
    if (!ren_data.empty()) {
      auto topo = cfg.topology();
      auto data = load_pose_dataset(ren_data);
      check_poses_match(data, topo, ren_data);
      if (ren_index >= data.records.size())
        throw std::invalid_argument("render: --index past the end of " + ren_data);
      const auto& rec = data.records[ren_index];
      std::vector<std::pair<std::string, Pose>> named = {{"clean", rec.clean},
                                                         {"corrupted", rec.corrupt}};
      if (!ren_ckpt.empty()) {
        ParameterStore store = make_store(cfg, topo);
        load_model(cfg, topo, store, ren_ckpt);
        SiameseModel model(&store, topo, cfg.model);
        named.emplace_back("recovered", model.denoised(rec.corrupt));
      }
      svg = render_pose_svg(topo, named, "config " + echo_of(cfg).dump());
    } else {
      auto [header, rows] = read_csv(ren_metrics);
      std::vector<std::string> cols;
      std::stringstream ss(ren_columns);
      std::string c;
      while (std::getline(ss, c, ',')) cols.push_back(c);
      svg = render_metrics_svg(header, rows, cols, "config " + echo_of(cfg).dump());
    }
    write_text_file(ren_out, svg);
    emit(json{{"out", ren_out}}, "");
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
