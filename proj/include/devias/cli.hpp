#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "devias/devias.hpp"

namespace devias {
namespace cli {

namespace fs = std::filesystem;

inline constexpr const char* kSplitFiles[] = {
    "train.dvsw", "test_in_context.dvsw", "test_out_of_context.dvsw",
    "test_scene_only.dvsw", "teacher_train.dvsw", "teacher_val.dvsw"};

// Attach one override option per config key; file values load first, then
// explicit flags win.
inline void add_config_options(CLI::App* cmd, std::shared_ptr<std::string> config_path,
                               std::shared_ptr<std::map<std::string, std::string>> overrides) {
  cmd->add_option_function<std::string>(
         "--config", [config_path](const std::string& v) { *config_path = v; },
         "flat key = value config file");
  RunConfig defaults;
  detail::visit_fields(defaults, [&](const char* name, auto& field) {
    (void)field;
    const std::string key = name;
    cmd->add_option_function<std::string>(
        "--" + key,
        [overrides, key](const std::string& v) { (*overrides)[key] = v; });
  });
}

inline RunConfig resolve_config(const std::string& config_path,
                                const std::map<std::string, std::string>& overrides) {
  RunConfig run;
  if (!config_path.empty()) run = load_config_file(config_path);
  for (const auto& [k, v] : overrides) set_config_key(run, k, v);
  validate_run_config(run);
  return run;
}

inline Dataset load_split(const std::string& dir, const std::string& file) {
  return read_dvsw1((fs::path(dir) / file).string());
}

inline void check_geometry(const RunConfig& run, const Dataset& d,
                           const std::string& name) {
  if (d.n_actions != run.actions || d.n_scenes != run.scenes ||
      d.frames != run.frames || d.height != run.height || d.width != run.width ||
      d.channels != run.channels)
    throw FormatError("dataset " + name + " does not match the configured geometry");
}

inline int cmd_gen_data(const RunConfig& run, const std::string& out_dir) {
  fs::create_directories(out_dir);
  WorldConfig w = world_config(run);
  std::cerr << "generating splits (seed " << run.seed << ", corr " << w.corr
            << ")\n";
  Splits splits = make_splits(w);
  write_dvsw1((fs::path(out_dir) / "train.dvsw").string(),
              Dataset::from(w, std::move(splits.train)));
  write_dvsw1((fs::path(out_dir) / "test_in_context.dvsw").string(),
              Dataset::from(w, std::move(splits.test_in_context)));
  write_dvsw1((fs::path(out_dir) / "test_out_of_context.dvsw").string(),
              Dataset::from(w, std::move(splits.test_out_of_context)));
  write_dvsw1((fs::path(out_dir) / "test_scene_only.dvsw").string(),
              Dataset::from(w, std::move(splits.test_scene_only)));
  write_dvsw1((fs::path(out_dir) / "teacher_train.dvsw").string(),
              Dataset::from(w, make_scene_only_set(w, w.n_teacher_train,
                                                   worldtag::kTeacherTrain)));
  write_dvsw1((fs::path(out_dir) / "teacher_val.dvsw").string(),
              Dataset::from(w, make_scene_only_set(w, w.n_teacher_val,
                                                   worldtag::kTeacherVal)));
  nlohmann::json j;
  j["out"] = out_dir;
  j["files"] = kSplitFiles;
  j["train_clips"] = w.n_train;
  std::cout << j.dump() << "\n";
  return 0;
}

inline int cmd_train_teacher(const RunConfig& run, const std::string& data_dir,
                             const std::string& out_path) {
  Dataset train = load_split(data_dir, "teacher_train.dvsw");
  Dataset val = load_split(data_dir, "teacher_val.dvsw");
  check_geometry(run, train, "teacher_train");
  Teacher<float> teacher =
      build_teacher<float>(teacher_encoder_config(run), run.scenes, run.seed);
  std::cerr << "training the scene teacher on " << train.clips.size()
            << " scene-only clips\n";
  train_scene_teacher(teacher, train.clips, teacher_hyper(run), run.seed);
  save_teacher(out_path, teacher, run);
  nlohmann::json j;
  j["checkpoint"] = out_path;
  j["val_top1"] = teacher_top1(teacher, val.clips);
  std::cout << j.dump() << "\n";
  return 0;
}

inline int cmd_train(const RunConfig& run, const std::string& data_dir,
                     const std::string& teacher_path, const std::string& out_path,
                     const std::string& metrics_path) {
  Dataset train = load_split(data_dir, "train.dvsw");
  check_geometry(run, train, "train");
  Teacher<float> teacher = load_teacher<float>(teacher_path);
  if (teacher.enc_cfg.dim != run.teacher_dim ||
      teacher.n_scenes != run.scenes)
    throw FormatError("teacher checkpoint does not match the configured teacher");

  Model<float> model = build_model<float>(run);
  std::cerr << "training " << run.model << " on " << train.clips.size()
            << " clips for " << run.epochs << " epochs ("
            << model.params.total_scalars() << " parameters)\n";
  TrainInputs<float> inputs = prepare_inputs(run, train, teacher);

  std::ofstream metrics_file;
  std::ostream* metrics = &std::cout;
  if (!metrics_path.empty()) {
    metrics_file.open(metrics_path);
    if (!metrics_file) throw FormatError("cannot open metrics file: " + metrics_path);
    metrics = &metrics_file;
  }
  TrainOutput out = train_model(model, train, inputs, teacher, metrics);
  save_model(out_path, model, out.steps, out.rng_state);
  std::cerr << "saved " << out_path << " after " << out.steps << " steps\n";
  return 0;
}

inline int cmd_eval(const std::string& ckpt, const std::string& data_dir,
                    const std::string& out_path, const std::string& pca_path,
                    int knn_k, int threads) {
  Model<float> model = load_model<float>(ckpt);
  RunConfig run = model.run;
  Dataset train = load_split(data_dir, "train.dvsw");
  Dataset in_ctx = load_split(data_dir, "test_in_context.dvsw");
  Dataset out_ctx = load_split(data_dir, "test_out_of_context.dvsw");
  Dataset scene_only = load_split(data_dir, "test_scene_only.dvsw");
  check_geometry(run, in_ctx, "test_in_context");

  EvalReport rep =
      evaluate_model(model, train, in_ctx, out_ctx, scene_only, knn_k, threads);
  if (!pca_path.empty()) {
    SplitOutputs<float> outs = run_split(model, in_ctx, threads);
    std::vector<Tensor<float>> feats;
    std::vector<std::string> tasks;
    std::vector<int> labels;
    for (size_t i = 0; i < outs.action_feats.size(); ++i) {
      feats.push_back(outs.action_feats[i]);
      tasks.emplace_back("action");
      labels.push_back(outs.action_labels[i]);
      feats.push_back(outs.scene_feats[i]);
      tasks.emplace_back("scene");
      labels.push_back(outs.scene_labels[i]);
    }
    pca_scatter_export(feats, tasks, labels, pca_path);
  }
  const std::string text = rep.to_json().dump(2);
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) throw FormatError("cannot open report file: " + out_path);
    os << text << "\n";
  } else {
    std::cout << text << "\n";
  }
  return 0;
}

inline int cmd_knn(const std::string& ckpt, const std::string& data_dir, int k,
                   int threads) {
  Model<float> model = load_model<float>(ckpt);
  Dataset train = load_split(data_dir, "train.dvsw");
  Dataset in_ctx = load_split(data_dir, "test_in_context.dvsw");
  SplitOutputs<float> tr = run_split(model, train, threads);
  SplitOutputs<float> te = run_split(model, in_ctx, threads);
  nlohmann::json j;
  j["k"] = k;
  j["normal"]["action_action"] = knn_protocol(tr.action_feats, tr.action_labels,
                                              te.action_feats, te.action_labels, k, threads);
  j["normal"]["scene_scene"] = knn_protocol(tr.scene_feats, tr.scene_labels,
                                            te.scene_feats, te.scene_labels, k, threads);
  j["reverse"]["action_scene"] = knn_protocol(tr.action_feats, tr.action_labels,
                                              te.scene_feats, te.action_labels, k, threads);
  j["reverse"]["scene_action"] = knn_protocol(tr.scene_feats, tr.scene_labels,
                                              te.action_feats, te.scene_labels, k, threads);
  std::cout << j.dump(2) << "\n";
  return 0;
}

inline int cmd_export_attn(const std::string& ckpt, const std::string& data_dir,
                           const std::string& split, int clip_index,
                           const std::string& out_dir) {
  Model<float> model = load_model<float>(ckpt);
  if (model.kind != ModelKind::devias)
    throw UsageError("attention export requires a slot model checkpoint");
  Dataset data = load_split(data_dir, split + ".dvsw");
  if (clip_index < 0 || clip_index >= static_cast<int>(data.clips.size()))
    throw UsageError("clip index out of range");
  fs::create_directories(out_dir);
  InferOutput<float> out = infer(model, data.clips[clip_index]);
  const EncoderConfig& e = model.enc.cfg;
  const int64_t gh = e.height / e.patch, gw = e.width / e.patch;
  nlohmann::json files = nlohmann::json::array();
  for (int64_t k = 0; k < out.attn.cols(); ++k)
    for (int64_t tg = 0; tg < e.temporal_groups(); ++tg) {
      Tensor<float> img({gh, gw});
      for (int64_t i = 0; i < gh * gw; ++i)
        img[i] = out.attn(tg * gh * gw + i, k);
      const std::string name =
          "attn_group" + std::to_string(tg) + "_slot" + std::to_string(k) + ".pgm";
      write_pgm((fs::path(out_dir) / name).string(), img);
      files.push_back(name);
    }
  nlohmann::json j;
  j["out"] = out_dir;
  j["files"] = files;
  j["k_action"] = out.assign.k_action;
  j["k_scene"] = out.assign.k_scene;
  std::cout << j.dump() << "\n";
  return 0;
}

template <typename S>
double full_loss_grad_error(const RunConfig& run, double eps) {
  Model<S> model = build_model<S>(run);
  WorldConfig w = world_config(run);
  VideoClip clip = generate_clip(w, 1, 2, mix_seed(run.seed, 0x97ad, 0));
  Rng lrng(mix_seed(run.seed, 0x97ad, 1));
  Tensor<S> y_s = softmax_axis(Tensor<S>::randn({run.scenes}, lrng), 0);

  SlotAssignment assign;
  {
    Tape<S> tape;
    auto res = clip_loss(model, tape, clip, y_s, clip.fg_mask);
    assign = res.assign;
  }
  auto build = [&](Tape<S>& tape) {
    Var<S> x = encode(tape, clip, model.enc);
    auto state = disentangle(x, model.slot, false);
    Var<S> logits = unified_head(state.slots, model.head);
    LossParts<S> parts;
    parts.disentangle = loss_disentangle(
        logits, assign, one_hot<S>(clip.action_id, run.actions), y_s);
    Tensor<S> h_hat = tokenize_mask<S>(clip.fg_mask, model.enc.cfg);
    Tensor<S> h_tilde = temporal_average_mask(h_hat, model.enc.cfg);
    parts.attn_guidance =
        loss_attention_guidance(state.attn, assign.k_action, std::move(h_hat));
    parts.mask_prediction = loss_mask_prediction(
        row(state.slots, assign.k_action), model.head, std::move(h_tilde));
    parts.cosine = loss_cosine(state.slots);
    return total_loss(parts, loss_weights(run));
  };
  auto res = finite_diff_check(model.params, build, eps);
  std::cerr << "worst parameter: " << res.worst_param << "[" << res.worst_index
            << "]\n";
  return res.max_rel_err;
}

inline int cmd_grad_check(const RunConfig& base, const std::string& precision,
                          double eps) {
  // miniature geometry: depth 2, dim 16, 16 tokens, 2 slots, 2 iterations
  RunConfig run = base;
  run.model = "devias";
  run.dim = 16;
  run.heads = 4;
  run.depth = 2;
  run.frames = 8;
  run.height = run.width = 16;
  run.patch = 8;
  run.slots = 2;
  run.slot_iters = 2;
  validate_run_config(run);

  double err = 0;
  double threshold = 0;
  if (precision == "f64") {
    err = full_loss_grad_error<double>(run, eps);
    threshold = 1e-6;
  } else if (precision == "f32") {
    err = full_loss_grad_error<float>(run, eps);
    threshold = 1e-2;  // single precision: informational only
  } else {
    throw UsageError("--precision must be f32 or f64");
  }
  nlohmann::json j;
  j["precision"] = precision;
  j["eps"] = eps;
  j["max_rel_error"] = err;
  j["threshold"] = threshold;
  j["pass"] = err <= threshold;
  std::cout << j.dump() << "\n";
  return err <= threshold ? 0 : 3;
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"disentangled action/scene video model on a synthetic world"};
  app.require_subcommand(1);

  auto config_path = std::make_shared<std::string>();
  auto overrides = std::make_shared<std::map<std::string, std::string>>();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the dataset splits");
  auto gen_out = std::make_shared<std::string>("data");
  gen->add_option("--out", *gen_out, "output directory");
  add_config_options(gen, config_path, overrides);

  // train-teacher
  auto* teach = app.add_subcommand("train-teacher", "train the frozen scene teacher");
  auto teach_data = std::make_shared<std::string>("data");
  auto teach_out = std::make_shared<std::string>("teacher.dvck");
  teach->add_option("--data", *teach_data, "dataset directory");
  teach->add_option("--out", *teach_out, "teacher checkpoint path");
  add_config_options(teach, config_path, overrides);

  // train
  auto* train = app.add_subcommand("train", "train a model");
  auto train_data = std::make_shared<std::string>("data");
  auto train_teacher_path = std::make_shared<std::string>("teacher.dvck");
  auto train_out = std::make_shared<std::string>("model.dvck");
  auto train_metrics = std::make_shared<std::string>();
  train->add_option("--data", *train_data, "dataset directory");
  train->add_option("--teacher", *train_teacher_path, "teacher checkpoint");
  train->add_option("--out", *train_out, "model checkpoint path");
  train->add_option("--metrics", *train_metrics, "JSON-lines metrics file (default stdout)");
  add_config_options(train, config_path, overrides);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto eval_ckpt = std::make_shared<std::string>("model.dvck");
  auto eval_data = std::make_shared<std::string>("data");
  auto eval_out = std::make_shared<std::string>();
  auto eval_pca = std::make_shared<std::string>();
  auto eval_splits = std::make_shared<std::string>("all");
  auto eval_k = std::make_shared<int>(10);
  auto eval_threads = std::make_shared<int>(1);
  eval->add_option("--ckpt", *eval_ckpt, "model checkpoint");
  eval->add_option("--data", *eval_data, "dataset directory");
  eval->add_option("--out", *eval_out, "report path (default stdout)");
  eval->add_option("--pca", *eval_pca, "CSV path for the 2-d feature scatter");
  eval->add_option("--splits", *eval_splits, "which splits to run (all)");
  eval->add_option("--knn-k", *eval_k, "neighbor count for the sanity table");
  eval->add_option("--threads", *eval_threads, "worker cap");
  auto eval_seed = std::make_shared<uint64_t>(0);
  eval->add_option("--seed", *eval_seed, "accepted for uniformity; results are checkpoint-determined");
  eval->add_option("--config", *config_path, "accepted for uniformity");

  // knn
  auto* knn = app.add_subcommand("knn", "nearest-neighbor disentanglement table");
  auto knn_ckpt = std::make_shared<std::string>("model.dvck");
  auto knn_data = std::make_shared<std::string>("data");
  auto knn_k = std::make_shared<int>(10);
  auto knn_threads = std::make_shared<int>(1);
  knn->add_option("--ckpt", *knn_ckpt, "model checkpoint");
  knn->add_option("--data", *knn_data, "dataset directory");
  knn->add_option("--k", *knn_k, "neighbor count");
  knn->add_option("--threads", *knn_threads, "worker cap");
  auto knn_seed = std::make_shared<uint64_t>(0);
  knn->add_option("--seed", *knn_seed, "accepted for uniformity; results are checkpoint-determined");
  knn->add_option("--config", *config_path, "accepted for uniformity");

  // export-attn
  auto* attn = app.add_subcommand("export-attn", "write slot attention maps as PGM");
  auto attn_ckpt = std::make_shared<std::string>("model.dvck");
  auto attn_data = std::make_shared<std::string>("data");
  auto attn_split = std::make_shared<std::string>("test_in_context");
  auto attn_clip = std::make_shared<int>(0);
  auto attn_out = std::make_shared<std::string>("attn");
  attn->add_option("--ckpt", *attn_ckpt, "model checkpoint");
  attn->add_option("--data", *attn_data, "dataset directory");
  attn->add_option("--split", *attn_split, "split name");
  attn->add_option("--clip", *attn_clip, "clip index");
  attn->add_option("--out", *attn_out, "output directory");
  auto attn_seed = std::make_shared<uint64_t>(0);
  attn->add_option("--seed", *attn_seed, "accepted for uniformity; results are checkpoint-determined");
  attn->add_option("--config", *config_path, "accepted for uniformity");

  // grad-check
  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient oracle");
  auto grad_precision = std::make_shared<std::string>("f64");
  auto grad_eps = std::make_shared<double>(1e-5);
  grad->add_option("--precision", *grad_precision, "f32 or f64");
  grad->add_option("--eps", *grad_eps, "central difference step");
  add_config_options(grad, config_path, overrides);

  try {
    app.parse(argc, argv);
    if (gen->parsed())
      return cmd_gen_data(resolve_config(*config_path, *overrides), *gen_out);
    if (teach->parsed())
      return cmd_train_teacher(resolve_config(*config_path, *overrides),
                               *teach_data, *teach_out);
    if (train->parsed())
      return cmd_train(resolve_config(*config_path, *overrides), *train_data,
                       *train_teacher_path, *train_out, *train_metrics);
    if (eval->parsed()) {
      if (*eval_splits != "all")
        throw UsageError("--splits currently supports only: all");
      return cmd_eval(*eval_ckpt, *eval_data, *eval_out, *eval_pca, *eval_k,
                      *eval_threads);
    }
    if (knn->parsed()) return cmd_knn(*knn_ckpt, *knn_data, *knn_k, *knn_threads);
    if (attn->parsed())
      return cmd_export_attn(*attn_ckpt, *attn_data, *attn_split, *attn_clip,
                             *attn_out);
    if (grad->parsed())
      return cmd_grad_check(resolve_config(*config_path, *overrides),
                            *grad_precision, *grad_eps);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace cli
}  // namespace devias
