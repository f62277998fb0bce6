#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "sonogen/mmdit.hpp"
#include "sonogen/toycodec.hpp"

namespace sonogen::config {

/// Usage or configuration mistakes; the CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScheduleConfig {
  int e1 = 1;
  int e2 = 2;
  int total_epochs = 4;
};

struct TrainConfig {
  int batch_size = 8;
  int steps_per_epoch = 250;
  double lr = 1e-4;
  uint64_t seed = 1;
  int checkpoint_every = 1;
  std::string mode = "curriculum";
};

struct DataConfig {
  std::string manifest;
  std::string run_dir = "runs/run0";
  int frames_per_phoneme = 4;
  double noise_scale = 0.05;
};

struct SamplerFileConfig {
  int steps = 32;
  uint64_t seed = 0;
};

struct EvalFileConfig {
  int n_per_modality = 30;
  uint64_t seed = 0;
};

/// Flat sectioned key=value configuration. Every field is optional in the
/// file; unknown sections or keys are rejected. canonical_text() emits all
/// fields in a fixed order, and parsing that text reproduces the config
/// exactly (fixed point).
struct RunConfig {
  codec::CodecConfig codec;
  mmdit::ModelConfig model;
  ScheduleConfig schedule;
  TrainConfig train;
  DataConfig data;
  SamplerFileConfig sampler;
  EvalFileConfig eval;
};

/// Pipeline defaults. The codec defaults here target the synthetic corpus:
/// 1024-sample windows at a 44032 Hz rate give an exact 43 Hz frame rate, so
/// fixed-span duration arithmetic stays exact in double precision.
RunConfig default_config();

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

std::string canonical_text(const RunConfig& cfg);

/// The architecture-determining subset ([codec] and [model] sections).
/// Its FNV-1a hash is the digest embedded in checkpoints; training-loop and
/// sampler settings do not invalidate a checkpoint.
std::string arch_text(const RunConfig& cfg);
uint64_t arch_digest(const RunConfig& cfg);

/// Parses an embedded [codec]+[model] arch text back into a config whose
/// remaining sections hold defaults.
RunConfig parse_arch_text(const std::string& text);

/// Cross-field checks tying the model to the codec and the built-in
/// vocabularies; throws ConfigError.
void validate_wiring(const RunConfig& cfg);

}  // namespace sonogen::config
