#include "sonogen/toycodec.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "sonogen/rng.hpp"

namespace sonogen::codec {

void CodecConfig::validate() const {
  if (sample_rate < 1) throw std::invalid_argument("codec: sample_rate must be >= 1");
  if (latent_dim < 1) throw std::invalid_argument("codec: latent_dim must be >= 1");
  if (window < latent_dim) throw std::invalid_argument("codec: window must be >= latent_dim");
}

Tensor projection_matrix(const CodecConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.projection_seed, "codec.projection"));
  Tensor p = rng.gaussian_tensor(cfg.latent_dim, cfg.window);
  // Modified Gram-Schmidt, two passes for orthogonality well below 1e-9.
  for (int pass = 0; pass < 2; ++pass) {
    for (int i = 0; i < p.rows(); ++i) {
      double* ri = p.row(i);
      for (int j = 0; j < i; ++j) {
        const double* rj = p.row(j);
        double dot = 0.0;
        for (int c = 0; c < p.cols(); ++c) dot += ri[c] * rj[c];
        for (int c = 0; c < p.cols(); ++c) ri[c] -= dot * rj[c];
      }
      double nrm = 0.0;
      for (int c = 0; c < p.cols(); ++c) nrm += ri[c] * ri[c];
      nrm = std::sqrt(nrm);
      if (nrm < 1e-12) throw std::runtime_error("codec: degenerate projection draw");
      for (int c = 0; c < p.cols(); ++c) ri[c] /= nrm;
    }
  }
  return p;
}

LatentSequence encode(std::span<const double> waveform, const CodecConfig& cfg) {
  cfg.validate();
  for (size_t i = 0; i < waveform.size(); ++i)
    if (!std::isfinite(waveform[i]))
      throw std::invalid_argument("encode: non-finite sample at index " + std::to_string(i));
  if (waveform.size() % cfg.window != 0)
    throw std::invalid_argument("encode: length " + std::to_string(waveform.size()) +
                                " is not a multiple of window " + std::to_string(cfg.window) +
                                " (use pad_to_window first)");
  const Tensor p = projection_matrix(cfg);
  LatentSequence out;
  out.frames = static_cast<int>(waveform.size() / cfg.window);
  out.channels = cfg.latent_dim;
  out.frame_rate = cfg.frame_rate();
  out.data = Tensor(out.frames, out.channels);
  for (int f = 0; f < out.frames; ++f) {
    const double* w = waveform.data() + static_cast<size_t>(f) * cfg.window;
    double* z = out.data.row(f);
    for (int r = 0; r < cfg.latent_dim; ++r) {
      const double* pr = p.row(r);
      double s = 0.0;
      for (int c = 0; c < cfg.window; ++c) s += pr[c] * w[c];
      z[r] = s;
    }
  }
  return out;
}

std::vector<double> decode(const LatentSequence& latents, const CodecConfig& cfg) {
  cfg.validate();
  if (latents.channels != cfg.latent_dim)
    throw std::invalid_argument("decode: latent channels " + std::to_string(latents.channels) +
                                " do not match codec latent_dim " + std::to_string(cfg.latent_dim));
  const Tensor p = projection_matrix(cfg);
  std::vector<double> wave(static_cast<size_t>(latents.frames) * cfg.window, 0.0);
  for (int f = 0; f < latents.frames; ++f) {
    const double* z = latents.data.row(f);
    double* w = wave.data() + static_cast<size_t>(f) * cfg.window;
    for (int r = 0; r < cfg.latent_dim; ++r) {
      const double* pr = p.row(r);
      const double zr = z[r];
      for (int c = 0; c < cfg.window; ++c) w[c] += zr * pr[c];
    }
  }
  return wave;
}

long frame_count(double duration_seconds, const CodecConfig& cfg) {
  cfg.validate();
  if (!(duration_seconds >= 0.0))
    throw std::invalid_argument("frame_count: duration must be non-negative");
  return static_cast<long>(std::floor(duration_seconds * cfg.sample_rate / cfg.window));
}

std::vector<double> pad_to_window(std::span<const double> waveform, const CodecConfig& cfg) {
  cfg.validate();
  std::vector<double> out(waveform.begin(), waveform.end());
  const size_t rem = out.size() % cfg.window;
  if (rem != 0) out.resize(out.size() + (cfg.window - rem), 0.0);
  return out;
}

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("binary read: truncated header");
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

void put_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

float get_f32(std::istream& is) {
  const uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void check_magic(std::istream& is, const char* magic, const std::filesystem::path& path) {
  char m[4];
  is.read(m, 4);
  if (!is || std::memcmp(m, magic, 4) != 0)
    throw std::runtime_error(path.string() + ": bad magic, expected " + magic);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path.string());
  return is;
}

}  // namespace

void write_waveform(const std::filesystem::path& path, std::span<const double> samples,
                    uint32_t sample_rate) {
  auto os = open_out(path);
  os.write("SNWV", 4);
  put_u32(os, kFormatVersion);
  put_u32(os, sample_rate);
  put_u32(os, static_cast<uint32_t>(samples.size()));
  for (double s : samples) put_f32(os, static_cast<float>(s));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::pair<std::vector<double>, uint32_t> read_waveform(const std::filesystem::path& path) {
  auto is = open_in(path);
  check_magic(is, "SNWV", path);
  const uint32_t version = get_u32(is);
  if (version != kFormatVersion)
    throw std::runtime_error(path.string() + ": unsupported SNWV version " + std::to_string(version));
  const uint32_t rate = get_u32(is);
  const uint32_t length = get_u32(is);
  std::vector<double> samples(length);
  for (uint32_t i = 0; i < length; ++i) samples[i] = get_f32(is);
  if (!is) throw std::runtime_error(path.string() + ": truncated payload");
  return {std::move(samples), rate};
}

void write_latents(const std::filesystem::path& path, const LatentSequence& latents) {
  auto os = open_out(path);
  os.write("SNLT", 4);
  put_u32(os, kFormatVersion);
  put_u32(os, static_cast<uint32_t>(latents.frames));
  put_u32(os, static_cast<uint32_t>(latents.channels));
  for (int f = 0; f < latents.frames; ++f)
    for (int c = 0; c < latents.channels; ++c) put_f32(os, static_cast<float>(latents.data.at(f, c)));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

LatentSequence read_latents(const std::filesystem::path& path, const CodecConfig& cfg) {
  auto is = open_in(path);
  check_magic(is, "SNLT", path);
  const uint32_t version = get_u32(is);
  if (version != kFormatVersion)
    throw std::runtime_error(path.string() + ": unsupported SNLT version " + std::to_string(version));
  LatentSequence out;
  out.frames = static_cast<int>(get_u32(is));
  out.channels = static_cast<int>(get_u32(is));
  out.frame_rate = cfg.frame_rate();
  out.data = Tensor(out.frames, out.channels);
  for (int f = 0; f < out.frames; ++f)
    for (int c = 0; c < out.channels; ++c) out.data.at(f, c) = get_f32(is);
  if (!is) throw std::runtime_error(path.string() + ": truncated payload");
  return out;
}

}  // namespace sonogen::codec
