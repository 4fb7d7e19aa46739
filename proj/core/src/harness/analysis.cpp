#include "pfdrive/harness/analysis.hpp"

#include <cmath>
#include <cstdio>

#include "pfdrive/errors.hpp"
#include "pfdrive/fovea/fovea.hpp"
#include "pfdrive/model/encoders.hpp"
#include "pfdrive/nn/rng.hpp"

namespace pfd::harness {

nlohmann::json SubgroupAnalysis::to_json() const {
  auto perm = [](const PermutationSummary& s) {
    return nlohmann::json{{"observed", s.observed},
                          {"p_value", s.p_value},
                          {"permutations", s.permutations}};
  };
  return {{"baseline",
           {{"ped_mae", mae_base_ped}, {"other_mae", mae_base_other}}},
          {"candidate",
           {{"ped_mae", mae_cand_ped}, {"other_mae", mae_cand_other}}},
          {"ped_frames", ped_frames},
          {"other_frames", other_frames},
          {"gain_ped", gain_ped},
          {"gain_other", gain_other},
          {"gain_diff", gain_diff},
          {"p_ped", perm(p_ped)},
          {"p_other", perm(p_other)},
          {"p_diff", perm(p_diff)},
          {"skipped", skipped},
          {"skip_reason", skip_reason},
          {"seed", seed}};
}

namespace {

// Filtered per-video error sums, split by subgroup (0 = pedestrian-tagged,
// 1 = other). Frame counts are shared: both models were evaluated on the
// same frames.
struct VideoSums {
  double base[2] = {0.0, 0.0};
  double cand[2] = {0.0, 0.0};
  int64_t n[2] = {0, 0};
};

std::vector<VideoSums> collect_sums(const EvalReport& a, const EvalReport& b,
                                    const world::DatasetReader& data) {
  if (a.videos.size() != b.videos.size())
    throw ConfigError("subgroup analysis: reports cover different videos");
  if (a.speed_filter_kmh != b.speed_filter_kmh)
    throw ConfigError("subgroup analysis: reports used different speed filters");
  std::vector<VideoSums> out;
  out.reserve(a.videos.size());
  for (size_t v = 0; v < a.videos.size(); ++v) {
    const VideoEval& va = a.videos[v];
    const VideoEval& vb = b.videos[v];
    if (va.clip != vb.clip || va.frames != vb.frames)
      throw ConfigError("subgroup analysis: reports evaluated different frames");
    const auto& labels = data.labels(va.clip);
    VideoSums vs;
    for (size_t i = 0; i < va.frames.size(); ++i) {
      const auto& lab = labels[va.frames[i]];
      if (lab.speed_kmh > a.speed_filter_kmh) continue;
      int g = pedestrian_tagged(lab) ? 0 : 1;
      vs.base[g] += std::abs(va.pred[i] - va.target[i]);
      vs.cand[g] += std::abs(vb.pred[i] - vb.target[i]);
      vs.n[g] += 1;
    }
    out.push_back(vs);
  }
  return out;
}

struct Stats {
  double gain[2] = {0.0, 0.0};
  double diff = 0.0;
};

// flips[v] swaps which model produced which errors in video v, the
// exchangeable unit under the null of equivalent models.
Stats stats_from(const std::vector<VideoSums>& vs,
                 const std::vector<char>* flips, int64_t n_ped,
                 int64_t n_other) {
  double base_sum[2] = {0.0, 0.0}, cand_sum[2] = {0.0, 0.0};
  for (size_t v = 0; v < vs.size(); ++v) {
    bool flip = flips && (*flips)[v];
    for (int g = 0; g < 2; ++g) {
      base_sum[g] += flip ? vs[v].cand[g] : vs[v].base[g];
      cand_sum[g] += flip ? vs[v].base[g] : vs[v].cand[g];
    }
  }
  Stats s;
  s.gain[0] = (base_sum[0] - cand_sum[0]) / static_cast<double>(n_ped);
  s.gain[1] = (base_sum[1] - cand_sum[1]) / static_cast<double>(n_other);
  s.diff = s.gain[0] - s.gain[1];
  return s;
}

void run_permutations(const std::vector<VideoSums>& vs, int64_t n_ped,
                      int64_t n_other, int permutations, uint64_t seed,
                      SubgroupAnalysis& out) {
  Stats obs = stats_from(vs, nullptr, n_ped, n_other);
  int64_t c_ped = 0, c_other = 0, c_diff = 0;
  std::vector<char> flips(vs.size());
  for (int r = 0; r < permutations; ++r) {
    nn::Rng rng(nn::Rng::mix(seed, "perm", static_cast<uint64_t>(r)));
    for (auto& f : flips) f = rng.bernoulli(0.5) ? 1 : 0;
    Stats s = stats_from(vs, &flips, n_ped, n_other);
    if (std::abs(s.gain[0]) >= std::abs(obs.gain[0])) c_ped += 1;
    if (std::abs(s.gain[1]) >= std::abs(obs.gain[1])) c_other += 1;
    if (std::abs(s.diff) >= std::abs(obs.diff)) c_diff += 1;
  }
  auto summary = [&](double observed, int64_t count) {
    PermutationSummary s;
    s.observed = observed;
    s.permutations = permutations;
    s.p_value = static_cast<double>(1 + count) / (1 + permutations);
    return s;
  };
  out.p_ped = summary(obs.gain[0], c_ped);
  out.p_other = summary(obs.gain[1], c_other);
  out.p_diff = summary(obs.diff, c_diff);
}

}  // namespace

SubgroupAnalysis subgroup_analysis(const EvalReport& baseline,
                                   const EvalReport& candidate,
                                   const world::DatasetReader& data,
                                   int permutations, uint64_t seed) {
  if (permutations < 1)
    throw ConfigError("subgroup analysis: need at least one permutation");
  std::vector<VideoSums> vs = collect_sums(baseline, candidate, data);

  SubgroupAnalysis out;
  out.seed = seed;
  double base_sum[2] = {0.0, 0.0}, cand_sum[2] = {0.0, 0.0};
  int64_t n[2] = {0, 0};
  for (const auto& v : vs)
    for (int g = 0; g < 2; ++g) {
      base_sum[g] += v.base[g];
      cand_sum[g] += v.cand[g];
      n[g] += v.n[g];
    }
  out.ped_frames = n[0];
  out.other_frames = n[1];
  if (n[0] == 0 || n[1] == 0) {
    out.skipped = true;
    out.skip_reason = n[0] == 0 ? "no pedestrian-tagged frames below the filter"
                                : "no untagged frames below the filter";
    return out;
  }
  out.mae_base_ped = base_sum[0] / static_cast<double>(n[0]);
  out.mae_base_other = base_sum[1] / static_cast<double>(n[1]);
  out.mae_cand_ped = cand_sum[0] / static_cast<double>(n[0]);
  out.mae_cand_other = cand_sum[1] / static_cast<double>(n[1]);
  out.gain_ped = out.mae_base_ped - out.mae_cand_ped;
  out.gain_other = out.mae_base_other - out.mae_cand_other;
  out.gain_diff = out.gain_ped - out.gain_other;

  run_permutations(vs, n[0], n[1], permutations, seed, out);
  return out;
}

std::vector<double> null_pvalue_samples(const EvalReport& baseline,
                                        const EvalReport& candidate,
                                        const world::DatasetReader& data,
                                        int repetitions, int permutations,
                                        uint64_t seed) {
  std::vector<VideoSums> vs = collect_sums(baseline, candidate, data);
  int64_t n[2] = {0, 0};
  for (const auto& v : vs)
    for (int g = 0; g < 2; ++g) n[g] += v.n[g];
  if (n[0] == 0 || n[1] == 0)
    throw ConfigError("null calibration: a subgroup has no frames");

  std::vector<double> pvals;
  pvals.reserve(repetitions);
  for (int rep = 0; rep < repetitions; ++rep) {
    nn::Rng rng(nn::Rng::mix(seed, "null_rep", static_cast<uint64_t>(rep)));
    std::vector<VideoSums> null_vs = vs;
    for (auto& v : null_vs)
      if (rng.bernoulli(0.5))
        for (int g = 0; g < 2; ++g) std::swap(v.base[g], v.cand[g]);
    SubgroupAnalysis a;
    run_permutations(null_vs, n[0], n[1], permutations,
                     nn::Rng::mix(seed, "null_test", static_cast<uint64_t>(rep)),
                     a);
    pvals.push_back(a.p_diff.p_value);
  }
  return pvals;
}

// ---------------------------------------------------------------- curves --

std::vector<CurveEntry> curve_entries(const EvalReport& report) {
  std::vector<CurveEntry> rows;
  for (const auto& p : report.segment_curve)
    rows.push_back({report.model, p.seconds, p.mae});
  return rows;
}

std::string curve_csv(const std::vector<CurveEntry>& rows) {
  std::string out = "model,seconds,mae\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%d,%.6f\n", r.model.c_str(),
                  r.seconds, r.mae);
    out += line;
  }
  return out;
}

// --------------------------------------------------- fovea policy sweeps --

std::vector<FoveaSettingDiag> fovea_policy_diagnostics(
    attention::AttentionModel& attention, const world::DatasetReader& data,
    const std::vector<int>& clips, const std::vector<double>& temperatures,
    uint64_t seed) {
  if (clips.empty()) throw ConfigError("fovea diagnostics: no clips");
  const model::ArchConfig& arch = attention.config().arch;
  if (arch.frame_h != data.manifest().frame_h ||
      arch.frame_w != data.manifest().frame_w)
    throw ConfigError("fovea diagnostics: dataset frame size does not match");
  fovea::FrameGeometry geom = arch.frame_geometry();

  int n_settings = 1 + static_cast<int>(temperatures.size());
  std::vector<FoveaSettingDiag> rows(n_settings);
  rows[0].setting = "top-2";
  for (size_t i = 0; i < temperatures.size(); ++i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "sampled T=%g", temperatures[i]);
    rows[1 + i].setting = buf;
  }
  std::vector<double> lik_sum(n_settings, 0.0), ov_sum(n_settings, 0.0);
  std::vector<int64_t> lik_n(n_settings, 0), ov_n(n_settings, 0);

  for (int clip : clips) {
    auto frame_at = clip_frames(data, clip);
    int frames = data.clip(clip).frames;
    std::vector<nn::FeatureGrid> lows;
    lows.reserve(frames);
    for (int t = 0; t < frames; ++t)
      lows.push_back(model::preprocess_peripheral(frame_at(t), arch.preproc));
    std::vector<attention::AttentionMap> maps =
        attention.predict_clip(lows, clip);

    for (int s = 0; s < n_settings; ++s) {
      uint64_t clip_seed = nn::Rng::mix(
          nn::Rng::mix(seed, "diag_setting", static_cast<uint64_t>(s)),
          "clip", static_cast<uint64_t>(clip));
      fovea::FoveaPlacement prev;
      for (int t = 0; t < frames; ++t) {
        std::vector<fovea::Cell> cells;
        if (s == 0) {
          cells = fovea::topk_fovea_cells(maps[t], 2);
        } else {
          fovea::FoveaSelectionConfig sel;
          sel.policy = fovea::FoveaPolicy::kSampled;
          sel.count = 2;
          sel.temperature = temperatures[s - 1];
          nn::Rng rng(nn::Rng::mix(clip_seed, "frame", static_cast<uint64_t>(t)));
          cells = fovea::sample_fovea_cells(maps[t], sel, rng);
        }
        fovea::FoveaPlacement place;
        for (const auto& c : cells) {
          fovea::CellGeometry cg = fovea::cell_to_geometry(c, geom);
          place.cells.push_back(c);
          place.rects.push_back(cg.rect);
          place.corners.push_back(cg.corner);
        }
        lik_sum[s] += fovea::fovea_likelihood(maps[t], cells);
        lik_n[s] += 1;
        if (t > 0) {
          ov_sum[s] += fovea::fovea_overlap(prev, place);
          ov_n[s] += 1;
        }
        prev = std::move(place);
      }
    }
  }
  for (int s = 0; s < n_settings; ++s) {
    rows[s].mean_likelihood = lik_sum[s] / static_cast<double>(lik_n[s]);
    rows[s].mean_overlap =
        ov_n[s] > 0 ? ov_sum[s] / static_cast<double>(ov_n[s]) : 0.0;
  }
  return rows;
}

std::string fovea_diag_csv(const std::vector<FoveaSettingDiag>& rows) {
  std::string out = "setting,mean_likelihood,mean_overlap\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.6f,%.6f\n", r.setting.c_str(),
                  r.mean_likelihood, r.mean_overlap);
    out += line;
  }
  return out;
}

}  // namespace pfd::harness
