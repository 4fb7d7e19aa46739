#include "pfdrive/model/config.hpp"

#include <cmath>
#include <sstream>

namespace pfd::model {

PlannerVariant planner_variant_from_string(const std::string& s) {
  if (s == "combined") return PlannerVariant::kCombined;
  if (s == "dual") return PlannerVariant::kDual;
  if (s == "periphery-only") return PlannerVariant::kPeripheryOnly;
  throw ConfigError("unknown planner variant: " + s);
}

std::string to_string(PlannerVariant v) {
  switch (v) {
    case PlannerVariant::kCombined: return "combined";
    case PlannerVariant::kDual: return "dual";
    case PlannerVariant::kPeripheryOnly: return "periphery-only";
  }
  throw ConfigError("invalid planner variant value");
}

void PreprocConfig::validate() const {
  if (periph_h < 1 || periph_w < 1)
    throw ConfigError("preproc: peripheral resolution must be positive");
  if (patch_px < 1) throw ConfigError("preproc: patch crop size must be positive");
  if (patch_in < 1 || patch_in > patch_px)
    throw ConfigError("preproc: patch input size must be in [1, crop size]");
  for (double m : channel_mean)
    if (!(m >= 0.0 && m <= 255.0))
      throw ConfigError("preproc: channel mean outside [0, 255]");
}

// ------------------------------------------------------------ shape audit --

namespace {

struct ChainResult {
  int h = 0, w = 0, c = 0;
};

void trace_line(std::ostringstream& os, const std::string& name, size_t idx,
                const nn::Conv2dSpec& s, int h, int w, int oh, int ow) {
  os << "  " << name << "[" << idx << "]: (" << h << ", " << w << ", " << s.cin
     << ") -conv " << s.kh << "x" << s.kw << " s" << s.sh << "x" << s.sw
     << "-> (" << oh << ", " << ow << ", " << s.cout << ")\n";
}

ChainResult run_chain(const std::vector<nn::Conv2dSpec>& chain,
                      const std::string& name, int cin, int h, int w,
                      std::ostringstream& os, bool* ok) {
  if (chain.empty()) {
    os << "  " << name << ": empty layer chain\n";
    *ok = false;
    return {};
  }
  int c = cin;
  for (size_t i = 0; i < chain.size(); ++i) {
    const auto& s = chain[i];
    if (s.kh < 1 || s.kw < 1 || s.sh < 1 || s.sw < 1 || s.cin < 1 || s.cout < 1) {
      os << "  " << name << "[" << i << "]: non-positive kernel/stride/channels\n";
      *ok = false;
      return {};
    }
    if (s.cin != c) {
      os << "  " << name << "[" << i << "]: input channels " << s.cin
         << " do not match incoming " << c << "\n";
      *ok = false;
      return {};
    }
    if (s.kh > h || s.kw > w) {
      os << "  " << name << "[" << i << "]: kernel " << s.kh << "x" << s.kw
         << " exceeds input (" << h << ", " << w << ")\n";
      *ok = false;
      return {};
    }
    auto [oh, ow] = s.out_hw(h, w);
    trace_line(os, name, i, s, h, w, oh, ow);
    if (oh < 1 || ow < 1) {
      os << "  " << name << "[" << i << "]: output collapsed\n";
      *ok = false;
      return {};
    }
    h = oh;
    w = ow;
    c = s.cout;
  }
  return {h, w, c};
}

// Audits every chain; returns the trace and sets ok. Kept separate from
// ArchConfig::validate so the trace can be rendered for passing configs too.
std::string audit(const ArchConfig& a, bool* ok) {
  *ok = true;
  std::ostringstream os;
  os << "shape audit (" << a.preset << "):\n";
  os << " peripheral pipeline: frame (" << a.frame_h << ", " << a.frame_w
     << ", 3) -> resample (" << a.preproc.periph_h << ", " << a.preproc.periph_w
     << ", 3)\n";
  auto bb = run_chain(a.backbone, "backbone", 3, a.preproc.periph_h,
                      a.preproc.periph_w, os, ok);
  ChainResult ph;
  if (*ok) {
    ph = run_chain(a.periph_head, "periph_head", bb.c, bb.h, bb.w, os, ok);
    if (*ok)
      os << "  resample: (" << ph.h << ", " << ph.w << ", " << ph.c << ") -> ("
         << fovea::kGridRows << ", " << fovea::kGridCols << ", " << ph.c
         << ")\n";
  }
  os << " foveal pipeline: crop (" << a.preproc.patch_px << ", "
     << a.preproc.patch_px << ", 3) -> resample (" << a.preproc.patch_in
     << ", " << a.preproc.patch_in << ", 3)\n";
  auto fb = run_chain(a.fovea_backbone, "fovea_backbone", 3, a.preproc.patch_in,
                      a.preproc.patch_in, os, ok);
  ChainResult fc, fd;
  if (*ok) {
    fc = run_chain(a.fovea_head_combined, "fovea_head_combined", fb.c, fb.h,
                   fb.w, os, ok);
    if (*ok)
      fd = run_chain(a.fovea_head_dual, "fovea_head_dual", fb.c, fb.h, fb.w,
                     os, ok);
  }
  if (!*ok) return os.str();

  if (fc.h != 3 || fc.w != 3) {
    os << "  fovea_head_combined: output (" << fc.h << ", " << fc.w
       << ") is not the required (3, 3)\n";
    *ok = false;
  }
  if (fd.h != 14 || fd.w != 14) {
    os << "  fovea_head_dual: output (" << fd.h << ", " << fd.w
       << ") is not the required (14, 14)\n";
    *ok = false;
  }
  if (ph.c != fc.c || ph.c != fd.c) {
    os << "  channel mismatch: peripheral " << ph.c << ", foveal combined "
       << fc.c << ", foveal dual " << fd.c << " must agree\n";
    *ok = false;
  }
  return os.str();
}

}  // namespace

int ArchConfig::feature_channels() const {
  if (periph_head.empty()) throw ConfigError("arch: empty peripheral head");
  return periph_head.back().cout;
}

std::pair<int, int> ArchConfig::periph_pre_shape() const {
  int h = preproc.periph_h, w = preproc.periph_w;
  auto step = [&](const std::vector<nn::Conv2dSpec>& chain) {
    for (const auto& s : chain) {
      auto [oh, ow] = s.out_hw(h, w);
      h = oh;
      w = ow;
    }
  };
  step(backbone);
  step(periph_head);
  return {h, w};
}

std::string ArchConfig::shape_trace() const {
  bool ok = true;
  return audit(*this, &ok);
}

void ArchConfig::validate() const {
  preproc.validate();
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw ConfigError("arch: dropout must be in [0, 1)");
  frame_geometry().validate();
  if (preproc.patch_px != 3 * cell_pitch())
    throw ConfigError("arch: patch must span exactly 3x3 grid cells (" +
                      std::to_string(3 * cell_pitch()) + " px), got " +
                      std::to_string(preproc.patch_px));
  bool ok = true;
  std::string trace = audit(*this, &ok);
  if (!ok) throw ShapeError("architecture shape audit failed\n" + trace);
}

// ---------------------------------------------------------------- presets --

namespace {

nn::Conv2dSpec conv(int kh, int kw, int sh, int sw, int cin, int cout) {
  nn::Conv2dSpec s;
  s.kh = kh;
  s.kw = kw;
  s.sh = sh;
  s.sw = sw;
  s.cin = cin;
  s.cout = cout;
  return s;
}

}  // namespace

ArchConfig ArchConfig::paper() {
  ArchConfig a;
  a.preset = "paper";
  a.frame_h = 720;
  a.frame_w = 1280;
  a.preproc = PreprocConfig{};
  a.dropout = 0.2;
  a.backbone = {conv(11, 11, 4, 4, 3, 16), conv(5, 5, 2, 2, 16, 32)};
  a.periph_head = {conv(3, 3, 1, 1, 32, 24), conv(2, 3, 1, 1, 24, 16),
                   conv(1, 3, 1, 1, 16, 8)};
  a.fovea_backbone = {conv(11, 11, 4, 4, 3, 16), conv(5, 5, 2, 2, 16, 32)};
  a.fovea_head_combined = {conv(5, 5, 2, 2, 32, 24), conv(4, 4, 2, 2, 24, 16),
                           conv(1, 1, 1, 1, 16, 8)};
  a.fovea_head_dual = {conv(5, 5, 1, 1, 32, 24), conv(3, 3, 1, 1, 24, 16),
                       conv(1, 1, 1, 1, 16, 8)};
  return a;
}

ArchConfig ArchConfig::toy() {
  ArchConfig a;
  a.preset = "toy";
  a.frame_h = 180;
  a.frame_w = 320;
  a.preproc.periph_h = 18;
  a.preproc.periph_w = 32;
  a.preproc.patch_px = 60;
  a.preproc.patch_in = 46;
  a.dropout = 0.2;
  a.backbone = {conv(5, 5, 2, 2, 3, 8), conv(3, 3, 1, 1, 8, 16)};
  a.periph_head = {conv(3, 3, 1, 1, 16, 16), conv(1, 3, 1, 1, 16, 12),
                   conv(1, 2, 1, 1, 12, 8)};
  a.fovea_backbone = {conv(5, 5, 2, 2, 3, 8), conv(3, 3, 1, 1, 8, 16)};
  a.fovea_head_combined = {conv(5, 5, 2, 2, 16, 16), conv(4, 4, 2, 2, 16, 12),
                           conv(1, 1, 1, 1, 12, 8)};
  a.fovea_head_dual = {conv(5, 5, 1, 1, 16, 16), conv(2, 2, 1, 1, 16, 12),
                       conv(1, 1, 1, 1, 12, 8)};
  return a;
}

ArchConfig ArchConfig::grad_check() {
  ArchConfig a = toy();
  a.preset = "grad_check";
  a.dropout = 0.0;  // keeps finite-difference probes deterministic
  a.backbone = {conv(5, 5, 2, 2, 3, 4), conv(3, 3, 1, 1, 4, 6)};
  a.periph_head = {conv(3, 3, 1, 1, 6, 6), conv(1, 3, 1, 1, 6, 5),
                   conv(1, 2, 1, 1, 5, 4)};
  a.fovea_backbone = {conv(5, 5, 2, 2, 3, 4), conv(3, 3, 1, 1, 4, 6)};
  a.fovea_head_combined = {conv(5, 5, 2, 2, 6, 6), conv(4, 4, 2, 2, 6, 5),
                           conv(1, 1, 1, 1, 5, 4)};
  a.fovea_head_dual = {conv(5, 5, 1, 1, 6, 6), conv(2, 2, 1, 1, 6, 5),
                       conv(1, 1, 1, 1, 5, 4)};
  return a;
}

ArchConfig ArchConfig::preset_by_name(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "toy") return toy();
  if (name == "grad_check") return grad_check();
  throw ConfigError("unknown architecture preset: " + name);
}

// ------------------------------------------------------------------- JSON --

namespace {

nlohmann::json chain_to_json(const std::vector<nn::Conv2dSpec>& chain) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : chain)
    arr.push_back({{"k", {s.kh, s.kw}}, {"s", {s.sh, s.sw}}, {"cout", s.cout}});
  return arr;
}

std::vector<nn::Conv2dSpec> chain_from_json(const nlohmann::json& arr,
                                            int cin, const char* what) {
  if (!arr.is_array()) throw ConfigError(std::string(what) + ": expected an array");
  std::vector<nn::Conv2dSpec> chain;
  for (const auto& e : arr) {
    nn::Conv2dSpec s;
    auto k = e.at("k");
    auto st = e.at("s");
    s.kh = k.at(0).get<int>();
    s.kw = k.at(1).get<int>();
    s.sh = st.at(0).get<int>();
    s.sw = st.at(1).get<int>();
    s.cin = cin;
    s.cout = e.at("cout").get<int>();
    cin = s.cout;
    chain.push_back(s);
  }
  return chain;
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

nlohmann::json fovea_to_json(const fovea::FoveaSelectionConfig& f) {
  return {{"policy", fovea::to_string(f.policy)},
          {"count", f.count},
          {"temperature", f.temperature},
          {"seed", f.seed}};
}

fovea::FoveaSelectionConfig fovea_from_json(const nlohmann::json& j,
                                            fovea::FoveaSelectionConfig f) {
  if (j.contains("policy"))
    f.policy = fovea::fovea_policy_from_string(j.at("policy").get<std::string>());
  maybe(j, "count", f.count);
  maybe(j, "temperature", f.temperature);
  maybe(j, "seed", f.seed);
  return f;
}

}  // namespace

nlohmann::json ArchConfig::to_json() const {
  return {{"preset", preset},
          {"frame_h", frame_h},
          {"frame_w", frame_w},
          {"dropout", dropout},
          {"periph_h", preproc.periph_h},
          {"periph_w", preproc.periph_w},
          {"patch_px", preproc.patch_px},
          {"patch_in", preproc.patch_in},
          {"channel_mean", preproc.channel_mean},
          {"backbone", chain_to_json(backbone)},
          {"periph_head", chain_to_json(periph_head)},
          {"fovea_backbone", chain_to_json(fovea_backbone)},
          {"fovea_head_combined", chain_to_json(fovea_head_combined)},
          {"fovea_head_dual", chain_to_json(fovea_head_dual)}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig a = preset_by_name(j.value("preset", std::string("paper")));
  try {
    maybe(j, "frame_h", a.frame_h);
    maybe(j, "frame_w", a.frame_w);
    maybe(j, "dropout", a.dropout);
    maybe(j, "periph_h", a.preproc.periph_h);
    maybe(j, "periph_w", a.preproc.periph_w);
    maybe(j, "patch_px", a.preproc.patch_px);
    maybe(j, "patch_in", a.preproc.patch_in);
    maybe(j, "channel_mean", a.preproc.channel_mean);
    if (j.contains("backbone"))
      a.backbone = chain_from_json(j.at("backbone"), 3, "backbone");
    if (j.contains("periph_head"))
      a.periph_head = chain_from_json(j.at("periph_head"),
                                      a.backbone.back().cout, "periph_head");
    if (j.contains("fovea_backbone"))
      a.fovea_backbone =
          chain_from_json(j.at("fovea_backbone"), 3, "fovea_backbone");
    if (j.contains("fovea_head_combined"))
      a.fovea_head_combined =
          chain_from_json(j.at("fovea_head_combined"),
                          a.fovea_backbone.back().cout, "fovea_head_combined");
    if (j.contains("fovea_head_dual"))
      a.fovea_head_dual =
          chain_from_json(j.at("fovea_head_dual"), a.fovea_backbone.back().cout,
                          "fovea_head_dual");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("arch config: ") + e.what());
  }
  return a;
}

void ModelConfig::validate() const {
  arch.validate();
  if (horizon < 1) throw ConfigError("model: horizon must be >= 1");
  if (hidden_channels < 1)
    throw ConfigError("model: hidden channels must be >= 1");
  if (lstm_kernel < 1 || lstm_kernel % 2 == 0)
    throw ConfigError("model: recurrent kernel must be odd and positive");
  if (fc_widths.size() != 4)
    throw ConfigError("model: exactly four fully-connected layers required");
  for (int w : fc_widths)
    if (w < 1) throw ConfigError("model: fc widths must be positive");
  if (fc_widths.back() != 1)
    throw ConfigError("model: final fc width must be 1");
  if (!(output_scale > 0.0) || !std::isfinite(output_offset))
    throw ConfigError("model: invalid output affine");
  if (variant == PlannerVariant::kDual) {
    if (fovea.policy == fovea::FoveaPolicy::kNone)
      throw ConfigError("model: dual planner requires a fovea policy");
    if (fovea.count != 2)
      throw ConfigError("model: dual planner is defined for exactly 2 foveae");
  }
  // Periphery-only carries no fovea policy; anything set there is unused.
  if (variant != PlannerVariant::kPeripheryOnly) fovea.validate();
}

nlohmann::json ModelConfig::to_json() const {
  return {{"variant", to_string(variant)},
          {"arch", arch.to_json()},
          {"fovea", fovea_to_json(fovea)},
          {"hidden_channels", hidden_channels},
          {"lstm_kernel", lstm_kernel},
          {"fc_widths", fc_widths},
          {"horizon", horizon},
          {"seed", seed},
          {"output_offset", output_offset},
          {"output_scale", output_scale}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  // Planner widths follow the arch preset unless overridden below.
  std::string name = "paper";
  if (j.contains("preset"))
    name = j.at("preset").get<std::string>();
  else if (j.contains("arch") && j.at("arch").contains("preset"))
    name = j.at("arch").at("preset").get<std::string>();
  ModelConfig m = preset(name);
  if (j.contains("arch")) m.arch = ArchConfig::from_json(j.at("arch"));
  try {
    if (j.contains("variant"))
      m.variant = planner_variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("fovea")) m.fovea = fovea_from_json(j.at("fovea"), m.fovea);
    maybe(j, "hidden_channels", m.hidden_channels);
    maybe(j, "lstm_kernel", m.lstm_kernel);
    maybe(j, "fc_widths", m.fc_widths);
    maybe(j, "horizon", m.horizon);
    maybe(j, "seed", m.seed);
    maybe(j, "output_offset", m.output_offset);
    maybe(j, "output_scale", m.output_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return m;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig m;
  m.arch = ArchConfig::preset_by_name(name);
  if (name == "paper") {
    m.hidden_channels = 16;
    m.fc_widths = {64, 32, 16, 1};
  } else if (name == "toy") {
    m.hidden_channels = 8;
    m.fc_widths = {64, 32, 16, 1};
  } else {  // grad_check
    m.hidden_channels = 4;
    m.fc_widths = {16, 8, 4, 1};
  }
  return m;
}

void AttentionConfig::validate() const {
  arch.validate();
  if (hidden_channels < 1)
    throw ConfigError("attention: hidden channels must be >= 1");
  if (lstm_kernel < 1 || lstm_kernel % 2 == 0)
    throw ConfigError("attention: recurrent kernel must be odd and positive");
}

nlohmann::json AttentionConfig::to_json() const {
  return {{"arch", arch.to_json()},
          {"hidden_channels", hidden_channels},
          {"lstm_kernel", lstm_kernel},
          {"seed", seed}};
}

AttentionConfig AttentionConfig::from_json(const nlohmann::json& j) {
  AttentionConfig a;
  if (j.contains("arch"))
    a.arch = ArchConfig::from_json(j.at("arch"));
  else if (j.contains("preset"))
    a.arch = ArchConfig::preset_by_name(j.at("preset").get<std::string>());
  try {
    maybe(j, "hidden_channels", a.hidden_channels);
    maybe(j, "lstm_kernel", a.lstm_kernel);
    maybe(j, "seed", a.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("attention config: ") + e.what());
  }
  return a;
}

AttentionConfig AttentionConfig::preset(const std::string& name) {
  AttentionConfig a;
  a.arch = ArchConfig::preset_by_name(name);
  a.hidden_channels = 8;
  return a;
}

}  // namespace pfd::model
