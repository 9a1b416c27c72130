#include "depthpose/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "depthpose/core/errors.hpp"

namespace depthpose::nn {

namespace {
constexpr char kMagic[8] = {'D', 'P', 'C', 'K', '0', '0', '0', '1'};
}

void save_checkpoint(const std::string& path, const std::vector<Param>& tensors,
                     const nlohmann::json& config) {
  nlohmann::json header;
  header["config"] = config;
  nlohmann::json index = nlohmann::json::array();
  int64_t offset = 0;
  for (const Param& p : tensors) {
    nlohmann::json e;
    e["name"] = p.name;
    e["shape"] = p.value->shape;
    e["offset"] = offset;
    e["count"] = p.value->numel();
    index.push_back(e);
    offset += p.value->numel() * static_cast<int64_t>(sizeof(float));
  }
  header["tensors"] = index;
  const std::string hdr = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(kMagic, sizeof(kMagic));
  const uint32_t hlen = static_cast<uint32_t>(hdr.size());
  unsigned char lenb[4] = {static_cast<unsigned char>(hlen & 0xff),
                           static_cast<unsigned char>((hlen >> 8) & 0xff),
                           static_cast<unsigned char>((hlen >> 16) & 0xff),
                           static_cast<unsigned char>((hlen >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(lenb), 4);
  f.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  std::vector<float> buf;
  for (const Param& p : tensors) {
    buf.resize(p.value->v.size());
    for (size_t i = 0; i < buf.size(); ++i)
      buf[i] = static_cast<float>(p.value->v[i]);
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!f) throw IoError("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kMagic, 8) != 0)
    throw FormatError("bad checkpoint magic in " + path);
  unsigned char lenb[4];
  f.read(reinterpret_cast<char*>(lenb), 4);
  if (!f) throw FormatError("truncated checkpoint header length in " + path);
  const uint32_t hlen = static_cast<uint32_t>(lenb[0]) |
                        (static_cast<uint32_t>(lenb[1]) << 8) |
                        (static_cast<uint32_t>(lenb[2]) << 16) |
                        (static_cast<uint32_t>(lenb[3]) << 24);
  std::string hdr(hlen, '\0');
  f.read(hdr.data(), hlen);
  if (!f) throw FormatError("truncated checkpoint header in " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hdr);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("unparseable checkpoint header: " + std::string(e.what()));
  }

  Checkpoint out;
  out.config = header.value("config", nlohmann::json::object());
  std::vector<float> buf;
  for (const auto& e : header.at("tensors")) {
    Tensor t(e.at("shape").get<std::vector<int>>());
    const int64_t count = e.at("count").get<int64_t>();
    if (count != t.numel())
      throw FormatError("tensor count/shape disagreement in " + path);
    buf.resize(static_cast<size_t>(count));
    f.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw FormatError("truncated checkpoint blob in " + path);
    for (int64_t i = 0; i < count; ++i) t.v[static_cast<size_t>(i)] = buf[static_cast<size_t>(i)];
    out.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  return out;
}

void apply_checkpoint(const Checkpoint& ckpt, const std::vector<Param>& tensors) {
  for (const Param& p : tensors) {
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end())
      throw FormatError("checkpoint is missing tensor " + p.name);
    if (it->second.shape != p.value->shape)
      throw ShapeMismatch("checkpoint shape mismatch for " + p.name);
    p.value->v = it->second.v;
  }
}

}  // namespace depthpose::nn
