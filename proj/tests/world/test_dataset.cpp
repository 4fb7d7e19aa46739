#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <doctest.h>
#include <unistd.h>

#include "pfdrive/errors.hpp"
#include "pfdrive/world/dataset.hpp"

using namespace pfd;
using namespace pfd::world;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("pfdrive_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

WorldConfig tiny_config() {
  WorldConfig cfg;
  cfg.scale = 4;
  cfg.clips = 2;
  cfg.clip_seconds = 4.0;
  cfg.ped_count = 2;
  cfg.seed = 99;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("dataset round trip is bit-exact") {
  TempDir dir("roundtrip");
  WorldConfig cfg = tiny_config();
  std::vector<VideoClip> kept;
  write_dataset(dir.path.string(), cfg,
                [&](const VideoClip& clip) { kept.push_back(clip); });
  REQUIRE(kept.size() == 2);

  DatasetReader reader(dir.path.string());
  CHECK(reader.clip_count() == 2);
  CHECK(reader.manifest().frame_h == 180);
  CHECK(reader.manifest().frame_w == 320);
  CHECK(reader.manifest().frame_hz == 10);
  CHECK(reader.manifest().world_config.at("seed").get<std::uint64_t>() == 99);

  std::vector<std::uint8_t> frame;
  for (int k = 0; k < 2; ++k) {
    CHECK(reader.clip(k).frames == 40);
    const auto& labels = reader.labels(k);
    REQUIRE(labels.size() == kept[k].labels.size());
    for (std::size_t t = 0; t < labels.size(); ++t) {
      reader.read_frame(k, static_cast<int>(t), frame);
      CHECK(frame == kept[k].frames[t]);
      CHECK(labels[t].speed_kmh == kept[k].labels[t].speed_kmh);
      CHECK(labels[t].gaze == kept[k].labels[t].gaze);
      CHECK(labels[t].tags == kept[k].labels[t].tags);
      CHECK(labels[t].scene.ego_v_ms == kept[k].labels[t].scene.ego_v_ms);
      REQUIRE(labels[t].scene.peds.size() == kept[k].labels[t].scene.peds.size());
      for (std::size_t p = 0; p < labels[t].scene.peds.size(); ++p) {
        CHECK(labels[t].scene.peds[p].fwd_m == kept[k].labels[t].scene.peds[p].fwd_m);
        CHECK(labels[t].scene.peds[p].active == kept[k].labels[t].scene.peds[p].active);
      }
    }
  }
}

TEST_CASE("missing manifest is its own error kind") {
  TempDir dir("nomanifest");
  CHECK_THROWS_AS(DatasetReader(dir.path.string()), ManifestMissingError);
}

TEST_CASE("manifest version mismatch is rejected") {
  TempDir dir("version");
  WorldConfig cfg = tiny_config();
  cfg.clips = 1;
  write_dataset(dir.path.string(), cfg);

  nlohmann::json j;
  {
    std::ifstream in(dir.path / "manifest.json");
    in >> j;
  }
  j["format_version"] = 2;
  {
    std::ofstream out(dir.path / "manifest.json");
    out << j.dump(2);
  }
  CHECK_THROWS_AS(DatasetReader(dir.path.string()), VersionMismatchError);
}

TEST_CASE("truncated frames file reports clip and frame") {
  TempDir dir("truncated");
  WorldConfig cfg = tiny_config();
  cfg.clips = 1;
  write_dataset(dir.path.string(), cfg);

  fs::path frames = dir.path / "clip_0000.pfvf";
  auto full = fs::file_size(frames);
  fs::resize_file(frames, full - 1000);

  DatasetReader reader(dir.path.string());
  std::vector<std::uint8_t> buf;
  CHECK_NOTHROW(reader.read_frame(0, 0, buf));
  try {
    reader.read_frame(0, 39, buf);
    FAIL("expected CorruptFrameError");
  } catch (const CorruptFrameError& e) {
    std::string msg = e.what();
    CHECK(msg.find("clip_0000") != std::string::npos);
    CHECK(msg.find("39") != std::string::npos);
  }
}

TEST_CASE("frames file with wrong magic is rejected") {
  TempDir dir("magic");
  WorldConfig cfg = tiny_config();
  cfg.clips = 1;
  write_dataset(dir.path.string(), cfg);

  fs::path frames = dir.path / "clip_0000.pfvf";
  {
    std::fstream f(frames, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  DatasetReader reader(dir.path.string());
  std::vector<std::uint8_t> buf;
  try {
    reader.read_frame(0, 0, buf);
    FAIL("expected CorruptFrameError");
  } catch (const CorruptFrameError& e) {
    CHECK(std::string(e.what()).find("clip_0000") != std::string::npos);
  }
}

TEST_CASE("frame index bounds are enforced") {
  TempDir dir("bounds");
  WorldConfig cfg = tiny_config();
  cfg.clips = 1;
  write_dataset(dir.path.string(), cfg);
  DatasetReader reader(dir.path.string());
  std::vector<std::uint8_t> buf;
  CHECK_THROWS_AS(reader.read_frame(0, 40, buf), CorruptFrameError);
  CHECK_THROWS_AS(reader.read_frame(0, -1, buf), CorruptFrameError);
  CHECK_THROWS_AS(reader.read_frame(1, 0, buf), DatasetError);
}
