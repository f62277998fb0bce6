#include "sonogen/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "sonogen/rng.hpp"

namespace sonogen::checkpoint {

namespace {

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated while reading " + what);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is, const std::string& what) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated while reading " + what);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const std::string& what) {
  const uint64_t bits = get_u64(is, what);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save(const std::filesystem::path& path, const mmdit::ModelParameters& params,
          const config::RunConfig& cfg, uint64_t run_seed) {
  const std::string arch = config::arch_text(cfg);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write("SNCK", 4);
  put_u32(os, kCheckpointVersion);
  put_u64(os, fnv1a64(arch));
  put_u64(os, run_seed);
  put_u32(os, static_cast<uint32_t>(arch.size()));
  os.write(arch.data(), static_cast<std::streamsize>(arch.size()));
  const auto refs = params.tensor_refs();
  put_u32(os, static_cast<uint32_t>(refs.size()));
  for (const auto& [name, t] : refs) {
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, 2);
    put_u32(os, static_cast<uint32_t>(t->rows()));
    put_u32(os, static_cast<uint32_t>(t->cols()));
    for (size_t i = 0; i < t->size(); ++i) put_f64(os, t->data()[i]);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path.string());
}

std::pair<mmdit::ModelParameters, CheckpointMeta> load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SNCK", 4) != 0)
    throw std::runtime_error(path.string() + ": not a SNCK checkpoint");
  const uint32_t version = get_u32(is, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version " +
                             std::to_string(version));
  CheckpointMeta meta;
  meta.digest = get_u64(is, "digest");
  meta.run_seed = get_u64(is, "run seed");
  const uint32_t arch_len = get_u32(is, "arch length");
  meta.arch_text.resize(arch_len);
  is.read(meta.arch_text.data(), arch_len);
  if (!is) throw std::runtime_error(path.string() + ": truncated arch text");
  if (fnv1a64(meta.arch_text) != meta.digest)
    throw std::runtime_error(path.string() + ": config digest mismatch with embedded arch text");

  const config::RunConfig cfg = config::parse_arch_text(meta.arch_text);
  mmdit::ModelParameters params = mmdit::init_params(cfg.model, 0);
  params.init_seed = meta.run_seed;

  const uint32_t n_tensors = get_u32(is, "tensor count");
  auto refs = params.tensor_refs();
  if (n_tensors != refs.size())
    throw std::runtime_error(path.string() + ": tensor count mismatch (" +
                             std::to_string(n_tensors) + " stored, " +
                             std::to_string(refs.size()) + " expected)");
  for (auto& [name, t] : refs) {
    const uint32_t name_len = get_u32(is, "tensor name length");
    std::string stored(name_len, '\0');
    is.read(stored.data(), name_len);
    if (!is || stored != name)
      throw std::runtime_error(path.string() + ": tensor order mismatch, expected '" + name +
                               "' got '" + stored + "'");
    const uint32_t rank = get_u32(is, "rank");
    if (rank != 2) throw std::runtime_error(path.string() + ": unsupported tensor rank");
    const uint32_t rows = get_u32(is, "rows");
    const uint32_t cols = get_u32(is, "cols");
    if (static_cast<int>(rows) != t->rows() || static_cast<int>(cols) != t->cols())
      throw std::runtime_error(path.string() + ": shape mismatch for '" + name + "'");
    for (size_t i = 0; i < t->size(); ++i) t->data()[i] = get_f64(is, name);
  }
  return {std::move(params), std::move(meta)};
}

std::pair<mmdit::ModelParameters, CheckpointMeta> load_checked(const std::filesystem::path& path,
                                                               const config::RunConfig& expected) {
  auto result = load(path);
  const uint64_t want = config::arch_digest(expected);
  if (result.second.digest != want)
    throw std::runtime_error(path.string() + ": config digest mismatch (checkpoint " +
                             std::to_string(result.second.digest) + ", expected " +
                             std::to_string(want) + ")");
  return result;
}

}  // namespace sonogen::checkpoint
