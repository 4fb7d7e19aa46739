#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "pfdrive/attention/attention_model.hpp"
#include "pfdrive/harness/evaluate.hpp"
#include "pfdrive/world/dataset.hpp"

namespace pfd::harness {

struct PermutationSummary {
  double observed = 0.0;
  double p_value = 1.0;
  int permutations = 0;
};

// Pedestrian-subgroup comparison of two models evaluated on identical
// frames. gain = MAE(baseline) - MAE(candidate) per group, so positive
// means the candidate improves; diff = pedestrian gain - other gain.
// Significance comes from sign flips at whole-video granularity (frames of
// a video are not independent), two-sided with the add-one rule.
struct SubgroupAnalysis {
  double mae_base_ped = 0.0, mae_base_other = 0.0;
  double mae_cand_ped = 0.0, mae_cand_other = 0.0;
  int64_t ped_frames = 0, other_frames = 0;
  double gain_ped = 0.0, gain_other = 0.0, gain_diff = 0.0;
  PermutationSummary p_ped, p_other, p_diff;
  bool skipped = false;  // a subgroup had no frames; the test is meaningless
  std::string skip_reason;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
};

SubgroupAnalysis subgroup_analysis(const EvalReport& baseline,
                                   const EvalReport& candidate,
                                   const world::DatasetReader& data,
                                   int permutations = 10000,
                                   uint64_t seed = 1);

// Calibration of the permutation test: repeatedly regenerates the data
// under its own null (random per-video swaps of the two models' errors) and
// collects the diff-of-gains p-value of each replicate. Under a correct
// test these are uniform on (0, 1).
std::vector<double> null_pvalue_samples(const EvalReport& baseline,
                                        const EvalReport& candidate,
                                        const world::DatasetReader& data,
                                        int repetitions, int permutations,
                                        uint64_t seed);

// ---------------------------------------------------------------- curves --

struct CurveEntry {
  std::string model;
  int seconds = 0;
  double mae = 0.0;
};

// model,seconds,mae rows with a header line.
std::string curve_csv(const std::vector<CurveEntry>& rows);
std::vector<CurveEntry> curve_entries(const EvalReport& report);

// --------------------------------------------------- fovea policy sweeps --

struct FoveaSettingDiag {
  std::string setting;
  double mean_likelihood = 0.0;  // attention mass on the chosen cells
  double mean_overlap = 0.0;     // adjacent-frame placement overlap
};

// Runs the trained gaze predictor over the clips once, then replays the
// placements for top-2 and temperature-sampled selection at the given
// temperatures (count 2 each). Likelihood averages over frames, overlap
// over adjacent frame pairs.
std::vector<FoveaSettingDiag> fovea_policy_diagnostics(
    attention::AttentionModel& attention, const world::DatasetReader& data,
    const std::vector<int>& clips, const std::vector<double>& temperatures,
    uint64_t seed);

std::string fovea_diag_csv(const std::vector<FoveaSettingDiag>& rows);

}  // namespace pfd::harness
