#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stormcast/pipeline/config.hpp"

namespace stormcast::pipeline {

std::string sha1_hex(std::string_view bytes);

/// Same digest as `git hash-object <path>`. Throws DataError if unreadable.
std::string git_blob_sha1(const std::filesystem::path& path);

struct StageRecord {
  std::string stage;
  /// Files produced by the stage, relative to the output directory.
  std::vector<std::filesystem::path> artifacts;
  nlohmann::json summary = nlohmann::json::object();
};

std::filesystem::path manifest_file(const std::filesystem::path& output_dir);
std::filesystem::path timings_file(const std::filesystem::path& output_dir);

/// Merges the stage into <output_dir>/manifest.json: resolved config
/// (without output_dir), code version, artifact hashes and stage summary.
/// Wall-clock times go to timings.json so that the manifest itself stays
/// byte-identical across reruns.
void record_stage(const RunConfig& config, const StageRecord& record);

/// Input file fingerprints under "data".
void record_inputs(const RunConfig& config, const std::vector<std::filesystem::path>& inputs);

void record_timing(const std::filesystem::path& output_dir, const std::string& stage, double seconds);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace stormcast::pipeline
