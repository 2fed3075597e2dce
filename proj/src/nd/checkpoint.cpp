#include "stormcast/nd/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stormcast/core/errors.hpp"

namespace stormcast::nd {

namespace {

constexpr const char* kHeader = "# stormcast checkpoint v1 float64-le";

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = __builtin_bswap64(v);
  }
  return v;
}

Shape parse_shape(const std::string& s, const std::string& name) {
  Shape shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) {
    try {
      shape.push_back(static_cast<std::size_t>(std::stoull(part)));
    } catch (const std::exception&) {
      throw DataError("checkpoint: bad shape '" + s + "' for '" + name + "'");
    }
  }
  if (shape.empty()) throw DataError("checkpoint: empty shape for '" + name + "'");
  return shape;
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& stem) {
  auto p = stem;
  p += ".manifest";
  return p;
}

std::filesystem::path payload_path(const std::filesystem::path& stem) {
  auto p = stem;
  p += ".bin";
  return p;
}

void save_checkpoint(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors) {
  std::ofstream manifest(manifest_path(stem), std::ios::trunc);
  std::ofstream payload(payload_path(stem), std::ios::binary | std::ios::trunc);
  if (!manifest || !payload) throw DataError("checkpoint: cannot write '" + stem.string() + "'");
  manifest << kHeader << "\n";
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    if (name.find_first_of(" \t\n") != std::string::npos) {
      throw DataError("checkpoint: tensor name '" + name + "' contains whitespace");
    }
    std::string shape;
    for (std::size_t i = 0; i < t.rank(); ++i) shape += (i ? "x" : "") + std::to_string(t.dim(i));
    manifest << name << ' ' << shape << ' ' << offset << "\n";
    for (double v : t.values()) {
      const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
      payload.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
    offset += t.size() * sizeof(double);
  }
  if (!manifest || !payload) throw DataError("checkpoint: write failed for '" + stem.string() + "'");
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream manifest(manifest_path(stem));
  if (!manifest) throw DataError("checkpoint: cannot open '" + manifest_path(stem).string() + "'");
  std::ifstream payload(payload_path(stem), std::ios::binary);
  if (!payload) throw DataError("checkpoint: cannot open '" + payload_path(stem).string() + "'");
  payload.seekg(0, std::ios::end);
  const auto payload_size = static_cast<std::uint64_t>(payload.tellg());

  std::string line;
  std::getline(manifest, line);
  if (line != kHeader) throw DataError("checkpoint: unrecognized manifest header in '" + stem.string() + "'");
  std::vector<NamedTensor> out;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, shape_s;
    std::uint64_t offset = 0;
    if (!(ls >> name >> shape_s >> offset)) throw DataError("checkpoint: malformed manifest line '" + line + "'");
    Shape shape = parse_shape(shape_s, name);
    const std::size_t n = numel(shape);
    if (offset + n * sizeof(double) > payload_size) {
      throw DataError("checkpoint: tensor '" + name + "' extends past the payload");
    }
    std::vector<double> values(n);
    payload.seekg(static_cast<std::streamoff>(offset));
    for (auto& v : values) {
      std::uint64_t bits = 0;
      payload.read(reinterpret_cast<char*>(&bits), sizeof bits);
      v = std::bit_cast<double>(to_le(bits));
    }
    out.emplace_back(name, Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace stormcast::nd
