#pragma once

#include <filesystem>
#include <string>

#include "patchlab/tinylm/model.hpp"

namespace patchlab::tinylm {

inline constexpr const char* kCheckpointFormat = "patchlab-checkpoint-v1";

// One JSON header line, then float32 little-endian tensors in header order.
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

// Parameters as they survive a save/load round trip.
std::vector<double> quantize_float32(const std::vector<double>& params);

}  // namespace patchlab::tinylm
