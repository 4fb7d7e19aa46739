#include "pfdrive/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pfdrive/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace pfd::nn {

namespace {
constexpr char kMagic[8] = {'P', 'F', 'D', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void Checkpoint::save(const std::string& path) const {
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["metadata"] = metadata;
  nlohmann::json table = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, values] : entries) {  // std::map: sorted order
    table.push_back({{"name", name},
                     {"count", values.size()},
                     {"offset", offset}});
    offset += values.size();
  }
  manifest["entries"] = table;
  std::string mjson = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("checkpoint: cannot open " + path + " for writing");
  os.write(kMagic, sizeof(kMagic));
  write_raw<uint32_t>(os, kFormatVersion);
  write_raw<uint64_t>(os, mjson.size());
  os.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
  for (const auto& [name, values] : entries)
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!os) throw Error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error("checkpoint: bad magic in " + path);
  uint32_t version = read_raw<uint32_t>(is);
  if (version != kFormatVersion)
    throw VersionMismatchError("checkpoint: format version " +
                               std::to_string(version) + " unsupported");
  uint64_t mlen = read_raw<uint64_t>(is);
  std::string mjson(mlen, '\0');
  is.read(mjson.data(), static_cast<std::streamsize>(mlen));
  if (!is) throw Error("checkpoint: truncated manifest in " + path);

  nlohmann::json manifest = nlohmann::json::parse(mjson);
  Checkpoint ckpt;
  ckpt.metadata = manifest.value("metadata", nlohmann::json::object());
  for (const auto& e : manifest.at("entries")) {
    std::string name = e.at("name").get<std::string>();
    size_t count = e.at("count").get<size_t>();
    std::vector<double> values(count);
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is)
      throw Error("checkpoint: truncated payload at entry " + name);
    ckpt.entries.emplace(std::move(name), std::move(values));
  }
  return ckpt;
}

Checkpoint Checkpoint::capture(
    const std::function<void(const ParamVisitor&)>& visit_model) {
  Checkpoint ckpt;
  visit_model([&](const std::string& name, Parameter& p) {
    auto [it, inserted] = ckpt.entries.emplace(name, p.value);
    if (!inserted) throw Error("checkpoint: duplicate parameter name " + name);
  });
  return ckpt;
}

void Checkpoint::restore(
    const std::function<void(const ParamVisitor&)>& visit_model) const {
  size_t used = 0;
  visit_model([&](const std::string& name, Parameter& p) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw Error("checkpoint: missing entry for parameter " + name);
    if (it->second.size() != p.size())
      throw ShapeError("checkpoint: size mismatch for " + name + ": file has " +
                       std::to_string(it->second.size()) + ", model expects " +
                       std::to_string(p.size()));
    p.value = it->second;
    ++used;
  });
  if (used != entries.size())
    throw Error("checkpoint: file has " + std::to_string(entries.size()) +
                " entries but model consumed " + std::to_string(used));
}

uint64_t param_hash(
    const std::function<void(const ParamVisitor&)>& visit_model) {
  // Collect in sorted order first so hash is independent of visit order.
  std::map<std::string, const std::vector<double>*> sorted;
  visit_model([&](const std::string& name, Parameter& p) {
    sorted[name] = &p.value;
  });
  uint64_t h = 1469598103934665603ull;
  auto feed = [&h](const void* data, size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, values] : sorted) {
    feed(name.data(), name.size());
    feed(values->data(), values->size() * sizeof(double));
  }
  return h;
}

}  // namespace pfd::nn
