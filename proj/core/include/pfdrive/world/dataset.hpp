#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pfdrive/world/world.hpp"

namespace pfd::world {

// On-disk dataset layout: <dir>/manifest.json plus one frames file (raw u8
// tensor with a small header) and one labels JSONL file per clip.
constexpr int kDatasetFormatVersion = 1;
constexpr char kFramesMagic[4] = {'P', 'F', 'V', 'F'};

struct ClipInfo {
  std::string name;
  int frames = 0;
  std::uint64_t seed = 0;
  std::string frames_file;
  std::string labels_file;
};

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  int frame_hz = 0;
  int frame_h = 0;
  int frame_w = 0;
  int channels = 3;
  std::vector<ClipInfo> clips;
  nlohmann::json world_config;
};

void write_clip(const std::string& dir, const VideoClip& clip);

// Generates cfg.clips clips (seed stream derived from cfg.seed) and writes
// them one at a time; on_clip, if set, is called after each clip is written.
DatasetManifest write_dataset(const std::string& dir, const WorldConfig& cfg,
                              const std::function<void(const VideoClip&)>& on_clip = {});

class DatasetReader {
 public:
  explicit DatasetReader(const std::string& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  int clip_count() const { return static_cast<int>(manifest_.clips.size()); }
  const ClipInfo& clip(int index) const;

  // Per-clip labels are parsed on first use and cached.
  const std::vector<FrameLabel>& labels(int clip_index) const;

  // Reads one frame (frame_h*frame_w*channels bytes) straight from disk.
  void read_frame(int clip_index, int frame, std::vector<std::uint8_t>& out) const;

  std::size_t frame_bytes() const {
    return static_cast<std::size_t>(manifest_.frame_h) * manifest_.frame_w *
           manifest_.channels;
  }

 private:
  std::string dir_;
  DatasetManifest manifest_;
  mutable std::vector<std::vector<FrameLabel>> label_cache_;
};

}  // namespace pfd::world
