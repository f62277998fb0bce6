#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "sonogen/config.hpp"
#include "sonogen/mmdit.hpp"

namespace sonogen::checkpoint {

// SNCK checkpoint: magic "SNCK", version u32, arch digest u64, run seed u64,
// embedded arch text ([codec]+[model]), then named tensors as little-endian
// 64-bit floats. The digest binds a checkpoint to the architecture that
// produced it; loading under a different architecture is an error.

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  uint64_t digest = 0;
  uint64_t run_seed = 0;
  std::string arch_text;
};

void save(const std::filesystem::path& path, const mmdit::ModelParameters& params,
          const config::RunConfig& cfg, uint64_t run_seed);

/// Loads and reconstructs the model from the embedded arch text alone.
std::pair<mmdit::ModelParameters, CheckpointMeta> load(const std::filesystem::path& path);

/// Loads and requires the stored digest to match arch_digest(expected).
std::pair<mmdit::ModelParameters, CheckpointMeta> load_checked(const std::filesystem::path& path,
                                                               const config::RunConfig& expected);

}  // namespace sonogen::checkpoint
