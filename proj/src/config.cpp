#include "sonogen/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "sonogen/rng.hpp"

namespace sonogen::config {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// One schema entry: how to print and parse a single key.
struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

long parse_long(const std::string& v, const std::string& what) {
  try {
    size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ConfigError("invalid integer for " + what + ": '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& v, const std::string& what) {
  try {
    size_t pos = 0;
    const uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ConfigError("invalid unsigned integer for " + what + ": '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& what) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ConfigError("invalid number for " + what + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("invalid bool for " + what + ": '" + v + "' (use true/false)");
}

#define INT_FIELD(section, key, expr)                                                       \
  Field{section, key, [](const RunConfig& c) { return std::to_string(c.expr); },            \
        [](RunConfig& c, const std::string& v) {                                            \
          c.expr = static_cast<int>(parse_long(v, std::string(section) + "." + key));       \
        }}
#define U64_FIELD(section, key, expr)                                                       \
  Field{section, key, [](const RunConfig& c) { return std::to_string(c.expr); },            \
        [](RunConfig& c, const std::string& v) {                                            \
          c.expr = parse_u64(v, std::string(section) + "." + key);                          \
        }}
#define DBL_FIELD(section, key, expr)                                                       \
  Field{section, key, [](const RunConfig& c) { return fmt_double(c.expr); },                \
        [](RunConfig& c, const std::string& v) {                                            \
          c.expr = parse_double(v, std::string(section) + "." + key);                       \
        }}
#define BOOL_FIELD(section, key, expr)                                                      \
  Field{section, key, [](const RunConfig& c) { return c.expr ? "true" : "false"; },         \
        [](RunConfig& c, const std::string& v) {                                            \
          c.expr = parse_bool(v, std::string(section) + "." + key);                         \
        }}
#define STR_FIELD(section, key, expr)                                 \
  Field{section, key, [](const RunConfig& c) { return c.expr; },      \
        [](RunConfig& c, const std::string& v) { c.expr = v; }}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = {
      INT_FIELD("codec", "sample_rate", codec.sample_rate),
      INT_FIELD("codec", "window", codec.window),
      INT_FIELD("codec", "latent_dim", codec.latent_dim),
      U64_FIELD("codec", "projection_seed", codec.projection_seed),
      INT_FIELD("model", "d_model", model.d_model),
      INT_FIELD("model", "n_heads", model.n_heads),
      INT_FIELD("model", "head_dim", model.head_dim),
      INT_FIELD("model", "n_joint", model.n_joint),
      INT_FIELD("model", "n_single", model.n_single),
      INT_FIELD("model", "ff_dim", model.ff_dim),
      DBL_FIELD("model", "rope_base", model.rope_base),
      INT_FIELD("model", "latent_channels", model.latent_channels),
      INT_FIELD("model", "content_vocab", model.content_vocab),
      INT_FIELD("model", "instr_vocab", model.instr_vocab),
      BOOL_FIELD("model", "freeze_instr", model.freeze_instr),
      INT_FIELD("schedule", "e1", schedule.e1),
      INT_FIELD("schedule", "e2", schedule.e2),
      INT_FIELD("schedule", "total_epochs", schedule.total_epochs),
      INT_FIELD("train", "batch_size", train.batch_size),
      INT_FIELD("train", "steps_per_epoch", train.steps_per_epoch),
      DBL_FIELD("train", "lr", train.lr),
      U64_FIELD("train", "seed", train.seed),
      INT_FIELD("train", "checkpoint_every", train.checkpoint_every),
      STR_FIELD("train", "mode", train.mode),
      STR_FIELD("data", "manifest", data.manifest),
      STR_FIELD("data", "run_dir", data.run_dir),
      INT_FIELD("data", "frames_per_phoneme", data.frames_per_phoneme),
      DBL_FIELD("data", "noise_scale", data.noise_scale),
      INT_FIELD("sampler", "steps", sampler.steps),
      U64_FIELD("sampler", "seed", sampler.seed),
      INT_FIELD("eval", "n_per_modality", eval.n_per_modality),
      U64_FIELD("eval", "seed", eval.seed),
  };
  return fields;
}

std::string render(const RunConfig& cfg, bool arch_only) {
  std::ostringstream os;
  std::string current;
  for (const auto& f : schema()) {
    if (arch_only && f.section != "codec" && f.section != "model") continue;
    if (f.section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << f.section << "]\n";
      current = f.section;
    }
    os << f.key << '=' << f.get(cfg) << '\n';
  }
  return os.str();
}

void apply_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    // Trim surrounding whitespace.
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    if (line.empty() || line[0] == '#') continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = line.substr(1, line.size() - 2);
      bool known = false;
      for (const auto& f : schema()) known = known || f.section == section;
      if (!known) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b2 = s.find_first_not_of(" \t");
      if (b2 == std::string::npos) return std::string();
      const auto e2 = s.find_last_not_of(" \t");
      return s.substr(b2, e2 - b2 + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + ": key outside any [section]");
    bool found = false;
    for (const auto& f : schema()) {
      if (f.section == section && f.key == key) {
        try {
          f.set(cfg, value);
        } catch (const ConfigError&) {
          throw;
        } catch (const std::exception& ex) {
          throw ConfigError(where + ": " + ex.what());
        }
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
  }
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.codec.sample_rate = 44032;  // 43 latent frames per second, exactly
  cfg.codec.window = 1024;
  cfg.codec.latent_dim = 16;
  cfg.codec.projection_seed = 7;
  return cfg;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg = default_config();
  apply_text(cfg, text, origin);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::string canonical_text(const RunConfig& cfg) { return render(cfg, false); }

std::string arch_text(const RunConfig& cfg) { return render(cfg, true); }

uint64_t arch_digest(const RunConfig& cfg) { return fnv1a64(arch_text(cfg)); }

RunConfig parse_arch_text(const std::string& text) {
  RunConfig cfg = default_config();
  apply_text(cfg, text, "<checkpoint arch>");
  return cfg;
}

void validate_wiring(const RunConfig& cfg) {
  try {
    cfg.codec.validate();
    cfg.model.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  if (cfg.model.latent_channels != cfg.codec.latent_dim)
    throw ConfigError("model.latent_channels (" + std::to_string(cfg.model.latent_channels) +
                      ") must equal codec.latent_dim (" + std::to_string(cfg.codec.latent_dim) +
                      ")");
  if (cfg.schedule.e1 < 0 || cfg.schedule.e2 < 0)
    throw ConfigError("schedule stage epoch counts must be non-negative");
  if (cfg.schedule.total_epochs < 1) throw ConfigError("schedule.total_epochs must be >= 1");
  if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (cfg.train.steps_per_epoch < 0) throw ConfigError("train.steps_per_epoch must be >= 0");
  if (cfg.train.checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  if (cfg.data.frames_per_phoneme < 1) throw ConfigError("data.frames_per_phoneme must be >= 1");
  if (cfg.sampler.steps < 1) throw ConfigError("sampler.steps must be >= 1");
}

}  // namespace sonogen::config
