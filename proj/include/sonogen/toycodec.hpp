#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "sonogen/tensor.hpp"

namespace sonogen::codec {

/// Fixed linear codec between waveforms and latent frames. Each
/// non-overlapping window of samples maps to one latent frame through a
/// seeded orthonormal projection (rows orthonormal), with the transpose as
/// the decoder. Exact inverse when window == latent_dim; otherwise decode
/// reconstructs the projection of the input onto the row span.
struct CodecConfig {
  int sample_rate = 44100;
  int window = 64;
  int latent_dim = 16;
  uint64_t projection_seed = 7;

  double frame_rate() const { return static_cast<double>(sample_rate) / window; }
  void validate() const;
};

struct LatentSequence {
  int frames = 0;
  int channels = 0;
  Tensor data;  // frames x channels
  double frame_rate = 0.0;
};

/// The latent_dim x window projection with orthonormal rows, deterministic
/// in (projection_seed, window, latent_dim).
Tensor projection_matrix(const CodecConfig& cfg);

/// Frames the waveform (length must be a multiple of cfg.window) and projects
/// each window to a latent frame. Rejects non-finite samples with the index
/// of the first offending one.
LatentSequence encode(std::span<const double> waveform, const CodecConfig& cfg);

/// Maps each latent frame back to a window of samples via the transposed
/// projection. Output length is frames * window.
std::vector<double> decode(const LatentSequence& latents, const CodecConfig& cfg);

/// floor(duration_seconds * sample_rate / window).
long frame_count(double duration_seconds, const CodecConfig& cfg);

/// Zero-pads up to the next multiple of cfg.window. Padding is explicit and
/// caller-driven; encode itself rejects partial windows.
std::vector<double> pad_to_window(std::span<const double> waveform, const CodecConfig& cfg);

// Raw binary formats, little-endian f32 payload after a 16-byte header:
//   SNWV: magic "SNWV", version u32, sample_rate u32, length u32
//   SNLT: magic "SNLT", version u32, frames u32, channels u32
inline constexpr uint32_t kFormatVersion = 1;

void write_waveform(const std::filesystem::path& path, std::span<const double> samples,
                    uint32_t sample_rate);
std::pair<std::vector<double>, uint32_t> read_waveform(const std::filesystem::path& path);

void write_latents(const std::filesystem::path& path, const LatentSequence& latents);
LatentSequence read_latents(const std::filesystem::path& path, const CodecConfig& cfg);

}  // namespace sonogen::codec
