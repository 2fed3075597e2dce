#include "stormcast/pipeline/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

#include "stormcast/core/errors.hpp"

#ifndef STORMCAST_VERSION
#define STORMCAST_VERSION "unknown"
#endif

namespace stormcast::pipeline {

using nlohmann::json;

namespace {

class Sha1 {
 public:
  Sha1() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha1(), nullptr) != 1) throw std::runtime_error("sha1 init failed");
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx_.get(), data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md.data(), &len);
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kDigits[md[i] >> 4];
      out += kDigits[md[i] & 15];
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

json config_json(const RunConfig& config) {
  json j = config_to_json(config);
  j.erase("output_dir");
  return j;
}

json load_manifest(const RunConfig& config) {
  const auto path = manifest_file(config.output_dir);
  json m = std::filesystem::exists(path) ? read_json(path) : json::object();
  m["version"] = STORMCAST_VERSION;
  m["config"] = config_json(config);
  return m;
}

}  // namespace

std::string sha1_hex(std::string_view bytes) {
  Sha1 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string git_blob_sha1(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  std::ifstream in(path, std::ios::binary);
  if (ec || !in) throw DataError("cannot read " + path.string());
  Sha1 h;
  const std::string header = "blob " + std::to_string(size);
  h.update(header.c_str(), header.size() + 1);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::filesystem::path manifest_file(const std::filesystem::path& output_dir) { return output_dir / "manifest.json"; }
std::filesystem::path timings_file(const std::filesystem::path& output_dir) { return output_dir / "timings.json"; }

void record_stage(const RunConfig& config, const StageRecord& record) {
  json m = load_manifest(config);
  json artifacts = json::object();
  for (const auto& rel : record.artifacts)
    artifacts[rel.generic_string()] = git_blob_sha1(config.output_dir / rel);
  m["stages"][record.stage] = {{"artifacts", std::move(artifacts)},
                               {"config_sha1", sha1_hex(config_json(config).dump())},
                               {"summary", record.summary}};
  write_json(manifest_file(config.output_dir), m);
}

void record_inputs(const RunConfig& config, const std::vector<std::filesystem::path>& inputs) {
  json m = load_manifest(config);
  json data = json::object();
  for (const auto& p : inputs) {
    const auto rel = p.lexically_relative(config.output_dir);
    const bool inside = !rel.empty() && *rel.begin() != "..";
    data[(inside ? rel : p).generic_string()] = git_blob_sha1(p);
  }
  m["data"] = std::move(data);
  write_json(manifest_file(config.output_dir), m);
}

void record_timing(const std::filesystem::path& output_dir, const std::string& stage, double seconds) {
  const auto path = timings_file(output_dir);
  json t = std::filesystem::exists(path) ? read_json(path) : json::object();
  t[stage] = seconds;
  write_json(path, t);
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace stormcast::pipeline
