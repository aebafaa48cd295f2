#include "mos/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace mos {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'S', 'C', 'K', 'P', 'T', '1'};

void put_u32_le(std::string &out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32_le(std::string &out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32_le(out, bits);
}

std::uint32_t get_u32_le(const unsigned char *p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32_le(const unsigned char *p) {
  const std::uint32_t bits = get_u32_le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

} // namespace

void save_checkpoint(const std::string &path, const std::vector<ParamRef<float>> &tensors, long long step,
                     const nlohmann::json &config) {
  nlohmann::json manifest;
  manifest["step"] = step;
  manifest["config"] = config;
  auto entries = nlohmann::json::array();

  std::string payload;
  std::size_t offset = 0;
  for (const auto &ref : tensors) {
    nlohmann::json entry;
    entry["name"] = ref.name;
    entry["shape"] = ref.tensor->shape;
    entry["offset"] = offset;
    entries.push_back(entry);
    for (float f : ref.tensor->data) put_f32_le(payload, f);
    offset += ref.tensor->size() * 4;
  }
  manifest["tensors"] = entries;
  const std::string manifest_text = manifest.dump();

  std::string header;
  header.append(kMagic, 8);
  put_u32_le(header, static_cast<std::uint32_t>(manifest_text.size()));

  const std::string tmp = path + ".tmp";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file.is_open()) throw IoError("checkpoint: cannot write " + tmp);
    file.write(header.data(), static_cast<std::streamsize>(header.size()));
    file.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
    file.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!file.good()) throw IoError("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("checkpoint: rename failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string &path) {
  std::ifstream file(path, std::ios::binary | std::ios::ate);
  if (!file.is_open()) throw DataError("checkpoint: cannot open " + path);
  const std::streamoff length = file.tellg();
  file.seekg(0);
  if (length < 12) throw DataError("checkpoint: file too short: " + path);

  std::vector<unsigned char> raw(static_cast<std::size_t>(length));
  if (!file.read(reinterpret_cast<char *>(raw.data()), length)) throw DataError("checkpoint: read failed: " + path);

  if (std::memcmp(raw.data(), kMagic, 8) != 0) throw DataError("checkpoint: bad magic in " + path);
  const std::uint32_t manifest_len = get_u32_le(raw.data() + 8);
  if (12 + static_cast<std::size_t>(manifest_len) > raw.size())
    throw DataError("checkpoint: truncated manifest in " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(raw.begin() + 12, raw.begin() + 12 + manifest_len);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(std::string("checkpoint: manifest parse error: ") + e.what());
  }

  LoadedCheckpoint out;
  out.step = manifest.value("step", 0ll);
  if (manifest.contains("config")) out.config = manifest["config"];

  const std::size_t payload_begin = 12 + manifest_len;
  const std::size_t payload_size = raw.size() - payload_begin;
  for (const auto &entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    Tensor<float> t(shape);
    if (offset + t.size() * 4 > payload_size)
      throw DataError("checkpoint: truncated payload for tensor '" + name + "' in " + path);
    const unsigned char *src = raw.data() + payload_begin + offset;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = get_f32_le(src + i * 4);
    out.tensors.emplace(name, std::move(t));
  }
  return out;
}

void restore_into(const LoadedCheckpoint &ckpt, const std::vector<ParamRef<float>> &refs) {
  for (const auto &ref : refs) {
    auto it = ckpt.tensors.find(ref.name);
    if (it == ckpt.tensors.end()) throw DataError("checkpoint: missing tensor '" + ref.name + "'");
    if (it->second.shape != ref.tensor->shape)
      throw ShapeError("checkpoint: shape mismatch for tensor '" + ref.name + "'");
    ref.tensor->data = it->second.data;
  }
}

} // namespace mos
