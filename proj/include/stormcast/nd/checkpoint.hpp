#pragma once

#include <filesystem>
#include <vector>

#include "stormcast/nd/params.hpp"

namespace stormcast::nd {

// A checkpoint is two files sharing a stem:
//   <stem>.manifest  plain text, one line per tensor: "<name> <d0>x<d1>... <byte offset>"
//   <stem>.bin       raw little-endian float64 payload, tensors back to back
// Round trips are bit-exact.

void save_checkpoint(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& stem);

std::filesystem::path manifest_path(const std::filesystem::path& stem);
std::filesystem::path payload_path(const std::filesystem::path& stem);

}  // namespace stormcast::nd
