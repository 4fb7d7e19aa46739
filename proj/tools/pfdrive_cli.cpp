#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pfdrive/attention/attention_model.hpp"
#include "pfdrive/errors.hpp"
#include "pfdrive/harness/analysis.hpp"
#include "pfdrive/harness/evaluate.hpp"
#include "pfdrive/harness/flops.hpp"
#include "pfdrive/harness/train.hpp"
#include "pfdrive/model/planner.hpp"
#include "pfdrive/world/dataset.hpp"

using namespace pfd;
namespace fs = std::filesystem;

namespace {

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad JSON in " + path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

void emit(const std::string& text, const std::string& out_path) {
  std::cout << text;
  if (!out_path.empty()) write_text(out_path, text);
}

// Clip selection for evaluation: a named split share resolved against the
// checkpoint's recorded split, or every clip in the dataset.
std::vector<int> resolve_clips(const std::string& share,
                               const nlohmann::json& metadata,
                               const world::DatasetReader& data) {
  if (share == "all") {
    std::vector<int> all(data.clip_count());
    for (int i = 0; i < data.clip_count(); ++i) all[i] = i;
    return all;
  }
  nlohmann::json split;
  if (metadata.contains("result") && metadata.at("result").contains("split"))
    split = metadata.at("result").at("split");
  else if (metadata.contains("split"))
    split = metadata.at("split");
  else
    throw ConfigError("checkpoint records no clip split; use --clips all");
  if (!split.contains(share))
    throw ConfigError("unknown split share: " + share);
  std::vector<int> clips = split.at(share).get<std::vector<int>>();
  for (int c : clips)
    if (c < 0 || c >= data.clip_count())
      throw ConfigError("checkpoint split references clip " +
                        std::to_string(c) + " outside the dataset");
  return clips;
}

model::DrivingModel load_driving(const std::string& path,
                                 nlohmann::json* metadata) {
  if (metadata) *metadata = nn::Checkpoint::load(path).metadata;
  return model::DrivingModel::load_checkpoint(path);
}

std::string model_label(const nlohmann::json& metadata,
                        const std::string& path) {
  if (metadata.contains("label"))
    return metadata.at("label").get<std::string>();
  return fs::path(path).stem().string();
}

// ------------------------------------------------------------- commands --

int cmd_generate_data(const std::string& config_path, const std::string& out,
                      std::optional<uint64_t> seed) {
  world::WorldConfig cfg;
  if (!config_path.empty())
    cfg = world::WorldConfig::from_json(load_json(config_path));
  if (seed) cfg.seed = *seed;
  fs::create_directories(out);
  int done = 0;
  world::DatasetManifest manifest =
      world::write_dataset(out, cfg, [&](const world::VideoClip&) {
        done += 1;
        std::fprintf(stderr, "\rclip %d/%d", done, cfg.clips);
      });
  std::fprintf(stderr, "\n");
  nlohmann::json summary = {{"out", out},
                            {"clips", static_cast<int>(manifest.clips.size())},
                            {"frame_h", manifest.frame_h},
                            {"frame_w", manifest.frame_w},
                            {"frame_hz", manifest.frame_hz},
                            {"seed", cfg.seed}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_train_attention(const std::string& config_path,
                        const std::string& data_dir, const std::string& out) {
  nlohmann::json j =
      config_path.empty() ? nlohmann::json::object() : load_json(config_path);
  model::AttentionConfig acfg =
      j.contains("attention")
          ? model::AttentionConfig::from_json(j.at("attention"))
          : model::AttentionConfig::preset("toy");
  attention::AttentionTrainConfig tc;
  if (j.contains("train"))
    tc = attention::AttentionTrainConfig::from_json(j.at("train"));
  double train_frac = j.value("train_frac", 0.7);
  double val_frac = j.value("val_frac", 0.1);

  world::DatasetReader data(data_dir);
  harness::ClipSplit split =
      harness::split_clips(data.clip_count(), train_frac, val_frac);

  attention::AttentionModel m(acfg);
  attention::AttentionTrainResult res =
      attention::train_attention(m, data, split.train, tc);
  double val_kl = attention::evaluate_attention_kl(m, data, split.val);
  double uniform_kl = attention::uniform_baseline_kl(data, split.val);

  nlohmann::json log = {{"epoch_loss", res.epoch_loss},
                        {"val_kl", val_kl},
                        {"uniform_val_kl", uniform_kl},
                        {"split", split.to_json()},
                        {"train", tc.to_json()}};
  m.save_checkpoint(out, {{"split", split.to_json()},
                          {"train", tc.to_json()},
                          {"val_kl", val_kl},
                          {"uniform_val_kl", uniform_kl}});
  std::cout << log.dump(2) << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out, const std::string& attention_flag) {
  nlohmann::json j = load_json(config_path);
  if (!j.contains("model"))
    throw ConfigError("train config needs a \"model\" section");
  model::ModelConfig mcfg = model::ModelConfig::from_json(j.at("model"));
  harness::TrainConfig tc;
  if (j.contains("train")) tc = harness::TrainConfig::from_json(j.at("train"));

  model::DrivingModel m(mcfg);
  std::string att_path =
      !attention_flag.empty() ? attention_flag
                              : j.value("attention_checkpoint", std::string());
  if (!att_path.empty())
    m.set_attention(attention::AttentionModel::load_checkpoint(att_path));

  world::DatasetReader data(data_dir);
  harness::TrainResult res = harness::train_driving_model(m, data, tc);

  std::string label = j.value(
      "label", to_string(mcfg.variant) + "/" + to_string(mcfg.fovea.policy));
  m.save_checkpoint(out, {{"label", label},
                          {"train", tc.to_json()},
                          {"result", res.to_json()},
                          {"dataset", {{"clips", data.clip_count()},
                                       {"frame_hz", data.manifest().frame_hz}}}});
  nlohmann::json log = {{"label", label},
                        {"checkpoint", out},
                        {"result", res.to_json()}};
  std::cout << log.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& data_dir,
                 int segment_len, const std::string& clips_share,
                 const std::string& out_path,
                 const std::string& placements_path) {
  nlohmann::json metadata;
  model::DrivingModel m = load_driving(ckpt, &metadata);
  world::DatasetReader data(data_dir);
  std::vector<int> clips = resolve_clips(clips_share, metadata, data);

  harness::EvalOptions opts;
  opts.label = model_label(metadata, ckpt);
  opts.segment_frames = segment_len * data.manifest().frame_hz;
  harness::EvalReport rep = harness::evaluate_model(m, data, clips, opts);
  emit(rep.to_json().dump(2) + "\n", out_path);

  if (!placements_path.empty()) {
    std::ofstream pl(placements_path, std::ios::binary);
    if (!pl) throw ConfigError("cannot write " + placements_path);
    for (int clip : clips) {
      auto frame_at = harness::clip_frames(data, clip);
      std::vector<model::StepDiag> diags;
      m.forward_clip(frame_at, data.clip(clip).frames, clip, &diags);
      for (size_t t = 0; t < diags.size(); ++t) {
        nlohmann::json line = fovea::placement_log_entry(
            static_cast<int64_t>(t), diags[t].placement, diags[t].likelihood);
        line["clip"] = clip;
        pl << line.dump() << "\n";
      }
    }
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& ckpts,
                const std::string& data_dir, const std::string& analysis,
                const std::string& out_path, int permutations, uint64_t seed,
                const std::string& clips_share) {
  world::DatasetReader data(data_dir);

  if (analysis == "subgroup") {
    if (ckpts.size() != 2)
      throw ConfigError("subgroup analysis compares exactly 2 checkpoints "
                        "(baseline, candidate)");
    nlohmann::json meta_a, meta_b;
    model::DrivingModel a = load_driving(ckpts[0], &meta_a);
    model::DrivingModel b = load_driving(ckpts[1], &meta_b);
    std::vector<int> clips = resolve_clips(clips_share, meta_a, data);
    harness::EvalOptions opts;
    opts.curve_seconds = {};
    opts.label = model_label(meta_a, ckpts[0]);
    harness::EvalReport ra = harness::evaluate_model(a, data, clips, opts);
    opts.label = model_label(meta_b, ckpts[1]);
    harness::EvalReport rb = harness::evaluate_model(b, data, clips, opts);
    harness::SubgroupAnalysis an =
        harness::subgroup_analysis(ra, rb, data, permutations, seed);
    nlohmann::json out = an.to_json();
    out["baseline"]["model"] = ra.model;
    out["candidate"]["model"] = rb.model;
    emit(out.dump(2) + "\n", out_path);
    return 0;
  }

  if (analysis == "segment-curve") {
    if (ckpts.empty()) throw ConfigError("no checkpoints given");
    std::vector<harness::CurveEntry> rows;
    for (const std::string& path : ckpts) {
      nlohmann::json meta;
      model::DrivingModel m = load_driving(path, &meta);
      std::vector<int> clips = resolve_clips(clips_share, meta, data);
      harness::EvalOptions opts;
      opts.label = model_label(meta, path);
      harness::EvalReport rep = harness::evaluate_model(m, data, clips, opts);
      for (auto& row : harness::curve_entries(rep)) rows.push_back(row);
    }
    emit(harness::curve_csv(rows), out_path);
    return 0;
  }

  if (analysis == "fovea-diagnostics") {
    if (ckpts.size() != 1)
      throw ConfigError("fovea diagnostics takes one attention checkpoint");
    attention::AttentionModel att =
        attention::AttentionModel::load_checkpoint(ckpts[0]);
    nlohmann::json meta = nn::Checkpoint::load(ckpts[0]).metadata;
    std::vector<int> clips = resolve_clips(clips_share, meta, data);
    auto rows =
        harness::fovea_policy_diagnostics(att, data, clips, {0.5, 1.0, 2.0}, seed);
    emit(harness::fovea_diag_csv(rows), out_path);
    return 0;
  }

  throw ConfigError("unknown analysis kind: " + analysis);
}

int cmd_flops(const std::string& config_path, bool unires) {
  nlohmann::json j = load_json(config_path);
  model::ModelConfig cfg = model::ModelConfig::from_json(
      j.contains("model") ? j.at("model") : j);
  harness::FlopsReport r = harness::compute_flops(cfg);
  nlohmann::json out = r.to_json();
  if (unires) {
    harness::UniResResult u = harness::build_uniresolution_baseline(cfg);
    out["uniresolution"] = {{"periph_h", u.periph_h},
                            {"periph_w", u.periph_w},
                            {"flops", u.flops},
                            {"target", u.target}};
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"periphery-fovea driving model toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate-data", "render a synthetic dataset");
  std::string gen_config, gen_out;
  std::optional<uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "world config JSON");
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "override the world seed");

  auto* ta = app.add_subcommand("train-attention", "train the gaze predictor");
  std::string ta_config, ta_data, ta_out;
  ta->add_option("--config", ta_config, "attention training config JSON");
  ta->add_option("--data", ta_data, "dataset directory")->required();
  ta->add_option("--out", ta_out, "attention checkpoint path")->required();

  auto* tr = app.add_subcommand("train", "train a driving model");
  std::string tr_config, tr_data, tr_out, tr_att;
  tr->add_option("--config", tr_config, "model + training config JSON")
      ->required();
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint path")->required();
  tr->add_option("--attention", tr_att,
                 "attention checkpoint (overrides the config entry)");

  auto* ev = app.add_subcommand("evaluate", "evaluate a trained model");
  std::string ev_ckpt, ev_data, ev_out, ev_placements, ev_clips = "test";
  int ev_seglen = 0;
  ev->add_option("--checkpoint", ev_ckpt, "driving checkpoint")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--segment-len", ev_seglen,
                 "segment length in seconds (0 = whole clips)");
  ev->add_option("--clips", ev_clips, "train | val | test | all");
  ev->add_option("--out", ev_out, "also write the report JSON here");
  ev->add_option("--placements", ev_placements,
                 "write per-frame fovea placements (JSONL)");

  auto* cp = app.add_subcommand("compare", "cross-model analyses");
  std::vector<std::string> cp_ckpts;
  std::string cp_data, cp_analysis, cp_out, cp_clips = "test";
  int cp_perms = 10000;
  uint64_t cp_seed = 1;
  cp->add_option("--checkpoints", cp_ckpts, "checkpoint paths")
      ->required()
      ->expected(-1);
  cp->add_option("--data", cp_data, "dataset directory")->required();
  cp->add_option("--analysis", cp_analysis,
                 "subgroup | segment-curve | fovea-diagnostics")
      ->required();
  cp->add_option("--out", cp_out, "also write the result here");
  cp->add_option("--permutations", cp_perms, "permutation count");
  cp->add_option("--seed", cp_seed, "permutation seed");
  cp->add_option("--clips", cp_clips, "train | val | test | all");

  auto* fl = app.add_subcommand("flops", "per-frame operation count");
  std::string fl_config;
  bool fl_unires = false;
  fl->add_option("--config", fl_config, "model config JSON")->required();
  fl->add_flag("--unires", fl_unires,
               "also search the FLOPs-matched uni-resolution baseline");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_data(gen_config, gen_out, gen_seed);
    if (ta->parsed()) return cmd_train_attention(ta_config, ta_data, ta_out);
    if (tr->parsed()) return cmd_train(tr_config, tr_data, tr_out, tr_att);
    if (ev->parsed())
      return cmd_evaluate(ev_ckpt, ev_data, ev_seglen, ev_clips, ev_out,
                          ev_placements);
    if (cp->parsed())
      return cmd_compare(cp_ckpts, cp_data, cp_analysis, cp_out, cp_perms,
                         cp_seed, cp_clips);
    if (fl->parsed()) return cmd_flops(fl_config, fl_unires);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 2;
  }
  std::fprintf(stderr, "no subcommand\n");
  return 1;
}
