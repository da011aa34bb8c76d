#pragma once

#include <string>

#include "adaseq/arch.hpp"
#include "adaseq/data.hpp"

namespace adaseq {

// Flat binary container of named tensors behind a config header; the
// save -> load round trip is bitwise lossless. Layout in docs/formats.md.
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace adaseq
