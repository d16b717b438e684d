#pragma once

#include <string>

#include "rsyn/model.hpp"

namespace rsyn {

// Layout (all integers little-endian):
//   "RSYNCKPT" | u32 version | u32 header length | header JSON
//   then per parameter: u32 name length | name | u32 rank | u32 extents[rank]
//                       | float32 values (row-major)
// The header carries the variant and the ModelConfig.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const SttModel& model, const std::string& path);

// Rebuilds the model from the header config and validates every blob's
// name and shape against it. Throws FormatError on any mismatch.
SttModel load_checkpoint(const std::string& path);

// Header only: config and variant, without reading the parameter blobs.
std::pair<ModelConfig, Variant> peek_checkpoint(const std::string& path);

}  // namespace rsyn
