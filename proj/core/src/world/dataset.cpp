#include "pfdrive/world/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "pfdrive/errors.hpp"

namespace fs = std::filesystem;

namespace pfd::world {

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr std::streamoff kFramesHeaderBytes = 4 + 5 * 4;

nlohmann::json label_to_json(int frame, const FrameLabel& label) {
  return nlohmann::json{{"frame", frame},
                        {"speed_kmh", label.speed_kmh},
                        {"gaze", label.gaze},
                        {"tags", label.tags},
                        {"scene", scene_to_json(label.scene)}};
}

FrameLabel label_from_json(const nlohmann::json& j) {
  FrameLabel label;
  label.speed_kmh = j.at("speed_kmh").get<double>();
  label.gaze = j.at("gaze").get<std::vector<double>>();
  label.tags = j.at("tags").get<std::vector<std::string>>();
  label.scene = scene_from_json(j.at("scene"));
  return label;
}

}  // namespace

void write_clip(const std::string& dir, const VideoClip& clip) {
  fs::path frames_path = fs::path(dir) / (clip.name + ".pfvf");
  std::ofstream frames(frames_path, std::ios::binary);
  if (!frames) throw DatasetError("cannot open for writing: " + frames_path.string());
  frames.write(kFramesMagic, 4);
  write_u32(frames, kDatasetFormatVersion);
  write_u32(frames, static_cast<std::uint32_t>(clip.frames.size()));
  write_u32(frames, static_cast<std::uint32_t>(clip.frame_h));
  write_u32(frames, static_cast<std::uint32_t>(clip.frame_w));
  write_u32(frames, 3);
  for (const auto& frame : clip.frames) {
    frames.write(reinterpret_cast<const char*>(frame.data()),
                 static_cast<std::streamsize>(frame.size()));
  }
  if (!frames) throw DatasetError("short write: " + frames_path.string());

  fs::path labels_path = fs::path(dir) / (clip.name + ".jsonl");
  std::ofstream labels(labels_path);
  if (!labels) throw DatasetError("cannot open for writing: " + labels_path.string());
  for (std::size_t t = 0; t < clip.labels.size(); ++t) {
    labels << label_to_json(static_cast<int>(t), clip.labels[t]).dump() << "\n";
  }
  if (!labels) throw DatasetError("short write: " + labels_path.string());
}

DatasetManifest write_dataset(const std::string& dir, const WorldConfig& cfg,
                              const std::function<void(const VideoClip&)>& on_clip) {
  cfg.validate();
  fs::create_directories(dir);

  DatasetManifest manifest;
  manifest.frame_hz = cfg.frame_hz;
  manifest.frame_h = cfg.frame_h();
  manifest.frame_w = cfg.frame_w();
  manifest.world_config = cfg.to_json();

  nlohmann::json clips_json = nlohmann::json::array();
  for (int k = 0; k < cfg.clips; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04d", k);
    std::uint64_t clip_seed = nn::Rng::mix(cfg.seed, "clip", static_cast<std::uint64_t>(k));
    VideoClip clip = generate_clip(cfg, clip_seed, name);
    write_clip(dir, clip);
    ClipInfo info{clip.name, static_cast<int>(clip.frames.size()), clip.seed,
                  clip.name + ".pfvf", clip.name + ".jsonl"};
    manifest.clips.push_back(info);
    clips_json.push_back({{"name", info.name},
                          {"frames", info.frames},
                          {"seed", info.seed},
                          {"frames_file", info.frames_file},
                          {"labels_file", info.labels_file}});
    if (on_clip) on_clip(clip);
  }

  nlohmann::json j{{"format_version", manifest.format_version},
                   {"frame_hz", manifest.frame_hz},
                   {"frame_h", manifest.frame_h},
                   {"frame_w", manifest.frame_w},
                   {"channels", manifest.channels},
                   {"clips", clips_json},
                   {"world_config", manifest.world_config}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw DatasetError("cannot write manifest in " + dir);
  out << j.dump(2) << "\n";
  return manifest;
}

DatasetReader::DatasetReader(const std::string& dir) : dir_(dir) {
  fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw ManifestMissingError("no manifest at " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("manifest parse failure: " + std::string(e.what()));
  }
  try {
    manifest_.format_version = j.at("format_version").get<int>();
    if (manifest_.format_version != kDatasetFormatVersion) {
      throw VersionMismatchError("dataset format version " +
                                 std::to_string(manifest_.format_version) +
                                 ", expected " + std::to_string(kDatasetFormatVersion));
    }
    manifest_.frame_hz = j.at("frame_hz").get<int>();
    manifest_.frame_h = j.at("frame_h").get<int>();
    manifest_.frame_w = j.at("frame_w").get<int>();
    manifest_.channels = j.at("channels").get<int>();
    manifest_.world_config = j.value("world_config", nlohmann::json::object());
    for (const auto& c : j.at("clips")) {
      manifest_.clips.push_back(ClipInfo{c.at("name").get<std::string>(),
                                         c.at("frames").get<int>(),
                                         c.at("seed").get<std::uint64_t>(),
                                         c.at("frames_file").get<std::string>(),
                                         c.at("labels_file").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("manifest field failure: " + std::string(e.what()));
  }
  label_cache_.resize(manifest_.clips.size());
}

const ClipInfo& DatasetReader::clip(int index) const {
  if (index < 0 || index >= clip_count()) {
    throw DatasetError("clip index " + std::to_string(index) + " out of range");
  }
  return manifest_.clips[static_cast<std::size_t>(index)];
}

const std::vector<FrameLabel>& DatasetReader::labels(int clip_index) const {
  const ClipInfo& info = clip(clip_index);
  auto& cache = label_cache_[static_cast<std::size_t>(clip_index)];
  if (!cache.empty()) return cache;
  fs::path path = fs::path(dir_) / info.labels_file;
  std::ifstream in(path);
  if (!in) throw DatasetError("missing labels file: " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      cache.push_back(label_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw DatasetError("labels parse failure in " + info.name + " line " +
                         std::to_string(cache.size()) + ": " + e.what());
    }
    if (cache.back().gaze.size() != attention::kGridCells) {
      throw DatasetError("bad gaze vector in " + info.name + " frame " +
                         std::to_string(cache.size() - 1));
    }
  }
  if (static_cast<int>(cache.size()) != info.frames) {
    throw DatasetError("label count mismatch in " + info.name + ": " +
                       std::to_string(cache.size()) + " vs " + std::to_string(info.frames));
  }
  return cache;
}

void DatasetReader::read_frame(int clip_index, int frame,
                               std::vector<std::uint8_t>& out) const {
  const ClipInfo& info = clip(clip_index);
  if (frame < 0 || frame >= info.frames) {
    throw CorruptFrameError("frame " + std::to_string(frame) + " out of range in " +
                            info.name);
  }
  fs::path path = fs::path(dir_) / info.frames_file;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFrameError("missing frames file for " + info.name);

  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kFramesMagic)) {
    throw CorruptFrameError("bad magic in frames file for " + info.name);
  }
  std::uint32_t version = read_u32(in);
  if (version != static_cast<std::uint32_t>(kDatasetFormatVersion)) {
    throw VersionMismatchError("frames file version " + std::to_string(version) + " for " +
                               info.name);
  }
  std::uint32_t n = read_u32(in);
  std::uint32_t h = read_u32(in);
  std::uint32_t w = read_u32(in);
  std::uint32_t c = read_u32(in);
  if (!in || n != static_cast<std::uint32_t>(info.frames) ||
      h != static_cast<std::uint32_t>(manifest_.frame_h) ||
      w != static_cast<std::uint32_t>(manifest_.frame_w) ||
      c != static_cast<std::uint32_t>(manifest_.channels)) {
    throw CorruptFrameError("frames header mismatch for " + info.name);
  }

  std::size_t bytes = frame_bytes();
  out.resize(bytes);
  in.seekg(kFramesHeaderBytes + static_cast<std::streamoff>(bytes) * frame);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (in.gcount() != static_cast<std::streamsize>(bytes)) {
    throw CorruptFrameError("truncated frame " + std::to_string(frame) + " in " + info.name);
  }
}

}  // namespace pfd::world
