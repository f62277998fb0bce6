#include "sonogen/syndata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sonogen/rng.hpp"

namespace sonogen::syndata {

namespace {

constexpr int kBodyChannels = 8;  // channels 0..7 carry phoneme/event body patterns
constexpr int kSlotA = 8;         // first attribute of each modality
constexpr int kSlotB = 10;        // second attribute

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

AttributeSchema AttributeSchema::standard(int channels) {
  if (channels < 14) throw std::invalid_argument("schema: needs at least 14 channels");
  AttributeSchema s;
  s.channels_ = channels;
  s.speech_ = {{"gender", {"male", "female"}}, {"tone", {"bright", "dark"}}};
  s.music_ = {{"genre", {"pulse", "wave"}}, {"mood", {"calm", "tense"}}};
  s.sfx_ = {{"event", {"burst", "swell"}}, {"decay", {"fast", "slow"}}};
  return s;
}

const std::vector<Attribute>& AttributeSchema::attributes(Modality m) const {
  switch (m) {
    case Modality::speech: return speech_;
    case Modality::music: return music_;
    case Modality::sfx: return sfx_;
  }
  throw std::logic_error("bad modality");
}

int AttributeSchema::value_index(Modality m, const std::string& attr,
                                 const std::string& value) const {
  for (const auto& a : attributes(m)) {
    if (a.name != attr) continue;
    for (size_t i = 0; i < a.values.size(); ++i)
      if (a.values[i] == value) return static_cast<int>(i);
    throw std::invalid_argument("schema: unknown value '" + value + "' for attribute '" + attr +
                                "'");
  }
  throw std::invalid_argument("schema: unknown attribute '" + attr + "' for modality " +
                              std::string(textcond::modality_name(m)));
}

Tensor AttributeSchema::signature(Modality m, const std::string& attr,
                                  const std::string& value) const {
  const auto& attrs = attributes(m);
  int slot = -1;
  for (size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i].name == attr) slot = static_cast<int>(i);
  if (slot < 0)
    throw std::invalid_argument("schema: unknown attribute '" + attr + "'");
  const int base = slot == 0 ? kSlotA : kSlotB;
  Tensor sig(1, channels_);
  sig.at(0, base + value_index(m, attr, value)) = amplitude_;
  return sig;
}

std::vector<int> AttributeSchema::support(Modality m, const std::string& attr) const {
  const auto& attrs = attributes(m);
  for (size_t i = 0; i < attrs.size(); ++i) {
    if (attrs[i].name != attr) continue;
    const int base = i == 0 ? kSlotA : kSlotB;
    std::vector<int> out;
    for (size_t v = 0; v < attrs[i].values.size(); ++v) out.push_back(base + static_cast<int>(v));
    return out;
  }
  throw std::invalid_argument("schema: unknown attribute '" + attr + "'");
}

double AttributeSchema::min_separation() const {
  // One exclusive channel per value at a fixed amplitude.
  return amplitude_ * std::sqrt(2.0);
}

std::string AttributeSchema::instruction_for(Modality m, const AttrMap& attrs) const {
  validate_attrs(m, attrs);
  switch (m) {
    case Modality::speech:
      return "a " + attrs.at("gender") + " voice with a " + attrs.at("tone") + " tone";
    case Modality::music:
      return "a " + attrs.at("genre") + " melody with a " + attrs.at("mood") + " mood";
    case Modality::sfx:
      return "a " + attrs.at("event") + " event with a " + attrs.at("decay") + " decay";
  }
  throw std::logic_error("bad modality");
}

std::vector<std::string> AttributeSchema::instruction_words() const {
  std::vector<std::string> words = {"a", "voice", "with", "tone", "melody", "mood", "event",
                                    "decay"};
  for (Modality m : {Modality::speech, Modality::music, Modality::sfx})
    for (const auto& a : attributes(m))
      for (const auto& v : a.values) words.push_back(v);
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return words;
}

void AttributeSchema::validate_attrs(Modality m, const AttrMap& attrs) const {
  const auto& expected = attributes(m);
  if (attrs.size() != expected.size())
    throw std::invalid_argument("schema: expected " + std::to_string(expected.size()) +
                                " attributes for " + std::string(textcond::modality_name(m)));
  for (const auto& a : expected) {
    const auto it = attrs.find(a.name);
    if (it == attrs.end())
      throw std::invalid_argument("schema: missing attribute '" + a.name + "'");
    value_index(m, a.name, it->second);
  }
}

int AttributeSchema::genre_period(const std::string& genre) const {
  if (genre == "pulse") return 8;
  if (genre == "wave") return 12;
  throw std::invalid_argument("schema: unknown genre '" + genre + "'");
}

textcond::InstructionVocab instruction_vocab(const AttributeSchema& schema) {
  return textcond::InstructionVocab(schema.instruction_words());
}

Tensor phoneme_pattern(int phoneme_id, int channels) {
  Rng rng(derive_seed(0x50484F4El, "phoneme.pattern", static_cast<uint64_t>(phoneme_id)));
  Tensor p(1, channels);
  double norm = 0.0;
  for (int c = 0; c < kBodyChannels && c < channels; ++c) {
    p.at(0, c) = rng.gaussian();
    norm += p.at(0, c) * p.at(0, c);
  }
  norm = std::sqrt(norm);
  for (int c = 0; c < kBodyChannels && c < channels; ++c) p.at(0, c) /= norm;
  return p;
}

namespace {

void add_signatures(Tensor& latent, Modality m, const AttrMap& attrs,
                    const AttributeSchema& schema) {
  for (const auto& [name, value] : attrs) {
    const Tensor sig = schema.signature(m, name, value);
    for (int f = 0; f < latent.rows(); ++f)
      for (int c = 0; c < latent.cols(); ++c) latent.at(f, c) += sig.at(0, c);
  }
}

// Phoneme-aligned base: each phoneme holds its pattern for a fixed span of
// frames. Noise is drawn first so generators sharing a seed and text share
// the identical noise field.
Tensor phoneme_base(Rng& rng, const textcond::ContentTokens& tokens, const GenParams& gen,
                    int channels) {
  const int frames = tokens.length() * gen.frames_per_phoneme;
  Tensor latent = rng.gaussian_tensor(frames, channels, gen.noise_scale);
  for (int p = 0; p < tokens.length(); ++p) {
    const Tensor pat = phoneme_pattern(tokens.ids[static_cast<size_t>(p)], channels);
    for (int f = p * gen.frames_per_phoneme; f < (p + 1) * gen.frames_per_phoneme; ++f)
      for (int c = 0; c < channels; ++c) latent.at(f, c) += gen.phoneme_amp * pat.at(0, c);
  }
  return latent;
}

codec::LatentSequence wrap_latent(Tensor data, const codec::CodecConfig& codec) {
  codec::LatentSequence seq;
  seq.frames = data.rows();
  seq.channels = data.cols();
  seq.frame_rate = codec.frame_rate();
  seq.data = std::move(data);
  return seq;
}

}  // namespace

std::pair<SampleRecord, codec::LatentSequence> gen_speech_sample(uint64_t seed, const AttrMap& attrs,
                                                                 std::string_view text,
                                                                 const AttributeSchema& schema,
                                                                 const GenParams& gen,
                                                                 const codec::CodecConfig& codec) {
  schema.validate_attrs(Modality::speech, attrs);
  if (text.empty()) throw std::invalid_argument("gen_speech_sample: empty text");
  const auto vocab = textcond::Vocabulary::standard();
  const auto tokens = textcond::g2p(text, vocab);
  Rng rng(derive_seed(seed, "gen.sample"));
  Tensor latent = phoneme_base(rng, tokens, gen, schema.channels());
  add_signatures(latent, Modality::speech, attrs, schema);
  SampleRecord rec;
  rec.modality = Modality::speech;
  rec.duration = tokens.length() * gen.frames_per_phoneme / codec.frame_rate();
  rec.attrs = attrs;
  rec.instruction = schema.instruction_for(Modality::speech, attrs);
  rec.content_text = std::string(text);
  return {rec, wrap_latent(std::move(latent), codec)};
}

std::pair<SampleRecord, codec::LatentSequence> gen_music_sample(uint64_t seed, const AttrMap& attrs,
                                                                std::string_view lyric_text,
                                                                const AttributeSchema& schema,
                                                                const GenParams& gen,
                                                                const codec::CodecConfig& codec) {
  schema.validate_attrs(Modality::music, attrs);
  if (lyric_text.empty()) throw std::invalid_argument("gen_music_sample: empty lyric");
  const auto vocab = textcond::Vocabulary::standard();
  const auto tokens = textcond::g2p(lyric_text, vocab, Modality::music);
  Rng rng(derive_seed(seed, "gen.sample"));
  Tensor latent = phoneme_base(rng, tokens, gen, schema.channels());
  add_signatures(latent, Modality::music, attrs, schema);
  const int period = schema.genre_period(attrs.at("genre"));
  const int pc = schema.periodic_channel();
  for (int f = 0; f < latent.rows(); ++f)
    latent.at(f, pc) += gen.periodic_amp * std::cos(2.0 * 3.14159265358979323846 * f / period);
  SampleRecord rec;
  rec.modality = Modality::music;
  rec.duration = tokens.length() * gen.frames_per_phoneme / codec.frame_rate();
  rec.attrs = attrs;
  rec.instruction = schema.instruction_for(Modality::music, attrs);
  rec.content_text = std::string(lyric_text);
  return {rec, wrap_latent(std::move(latent), codec)};
}

std::pair<SampleRecord, codec::LatentSequence> gen_sfx_sample(uint64_t seed, const AttrMap& attrs,
                                                              double duration,
                                                              const AttributeSchema& schema,
                                                              const GenParams& gen,
                                                              const codec::CodecConfig& codec) {
  schema.validate_attrs(Modality::sfx, attrs);
  if (!(duration > 0.0)) throw std::invalid_argument("gen_sfx_sample: duration must be positive");
  const long frames = codec::frame_count(duration, codec);
  if (frames < 1) throw std::invalid_argument("gen_sfx_sample: duration too short for one frame");
  Rng rng(derive_seed(seed, "gen.sample"));
  const int channels = schema.channels();
  Tensor latent = rng.gaussian_tensor(static_cast<int>(frames), channels, gen.noise_scale);

  const bool burst = attrs.at("event") == "burst";
  const bool fast = attrs.at("decay") == "fast";
  const double attack = std::max(1.0, burst ? frames / 8.0 : 3.0 * frames / 4.0);
  const double decay = std::max(1.0, fast ? frames / 8.0 : frames / 2.0);

  // Event body pattern reuses the phoneme-pattern generator keyed far outside
  // the phoneme id range.
  const Tensor body = phoneme_pattern(1000 + (burst ? 0 : 1), channels);
  Tensor profile(1, channels);
  for (int c = 0; c < channels; ++c) profile.at(0, c) = gen.phoneme_amp * body.at(0, c);
  for (const auto& [name, value] : attrs) {
    const Tensor sig = schema.signature(Modality::sfx, name, value);
    for (int c = 0; c < channels; ++c) profile.at(0, c) += sig.at(0, c);
  }
  for (long f = 0; f < frames; ++f) {
    const double env =
        f < attack ? (f + 1.0) / attack : std::exp(-(static_cast<double>(f) - attack) / decay);
    for (int c = 0; c < channels; ++c)
      latent.at(static_cast<int>(f), c) += env * profile.at(0, c);
  }
  SampleRecord rec;
  rec.modality = Modality::sfx;
  rec.duration = duration;
  rec.attrs = attrs;
  rec.instruction = schema.instruction_for(Modality::sfx, attrs);
  return {rec, wrap_latent(std::move(latent), codec)};
}

std::pair<SampleRecord, codec::LatentSequence> gen_dialogue_sample(
    uint64_t seed, const AttrMap& attrs, std::string_view text0, std::string_view text1,
    const AttributeSchema& schema, const GenParams& gen, const codec::CodecConfig& codec) {
  auto [rec0, lat0] = gen_speech_sample(derive_seed(seed, "dialogue", 0), attrs, text0, schema,
                                        gen, codec);
  auto [rec1, lat1] = gen_speech_sample(derive_seed(seed, "dialogue", 1), attrs, text1, schema,
                                        gen, codec);
  Tensor data(lat0.frames + lat1.frames, lat0.channels);
  for (int f = 0; f < lat0.frames; ++f)
    for (int c = 0; c < lat0.channels; ++c) data.at(f, c) = lat0.data.at(f, c);
  for (int f = 0; f < lat1.frames; ++f)
    for (int c = 0; c < lat1.channels; ++c) data.at(lat0.frames + f, c) = lat1.data.at(f, c);
  SampleRecord rec;
  rec.modality = Modality::speech;
  rec.duration = (lat0.frames + lat1.frames) / codec.frame_rate();
  rec.attrs = attrs;
  rec.instruction = rec0.instruction + " " + rec1.instruction;
  rec.content_text = std::string(text0) + "|" + std::string(text1);
  return {rec, wrap_latent(std::move(data), codec)};
}

textcond::ContentTokens record_content(const SampleRecord& rec, const textcond::Vocabulary& vocab) {
  if (rec.modality == Modality::sfx)
    throw std::invalid_argument("record_content: sfx content must be rebuilt from duration");
  const auto bar = rec.content_text.find('|');
  if (bar == std::string::npos)
    return textcond::g2p(rec.content_text, vocab,
                         rec.modality == Modality::music ? Modality::music : Modality::speech);
  if (rec.modality != Modality::speech)
    throw std::invalid_argument("record_content: dialogue is speech-only");
  return textcond::tag_dialogue({{0, textcond::g2p(rec.content_text.substr(0, bar), vocab)},
                                 {1, textcond::g2p(rec.content_text.substr(bar + 1), vocab)}},
                                vocab);
}

namespace {

std::string escape_field(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '\\')
      out += "\\\\";
    else if (c == '\t')
      out += "\\t";
    else if (c == '\n')
      out += "\\n";
    else
      out += c;
  }
  return out;
}

std::string unescape_field(const std::string& s, int lineno) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (i + 1 >= s.size())
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": dangling escape");
    const char c = s[++i];
    if (c == '\\')
      out += '\\';
    else if (c == 't')
      out += '\t';
    else if (c == 'n')
      out += '\n';
    else
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": bad escape \\" + c);
  }
  return out;
}

std::string attrs_to_string(const AttrMap& attrs) {
  std::string out;
  for (const auto& [k, v] : attrs) {
    if (!out.empty()) out += ';';
    out += k + "=" + v;
  }
  return out;
}

AttrMap attrs_from_string(const std::string& s, int lineno) {
  AttrMap out;
  if (s.empty()) return out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("manifest line " + std::to_string(lineno) +
                               ": malformed attr '" + item + "'");
    out[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return out;
}

const char* kColumns[] = {"id", "modality", "duration", "attrs", "instruction", "content_text",
                          "latent_path"};

}  // namespace

void write_manifest(const std::vector<SampleRecord>& records, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest: " + path.string());
  for (const auto& r : records) {
    os << escape_field(r.id) << '\t' << textcond::modality_name(r.modality) << '\t'
       << fmt_double(r.duration) << '\t' << escape_field(attrs_to_string(r.attrs)) << '\t'
       << escape_field(r.instruction) << '\t' << escape_field(r.content_text) << '\t'
       << escape_field(r.latent_path) << '\n';
  }
  if (!os) throw std::runtime_error("manifest write failed: " + path.string());
}

std::vector<SampleRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read manifest: " + path.string());
  std::vector<SampleRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() != 7)
      throw std::runtime_error("manifest line " + std::to_string(lineno) + ": expected 7 columns, "
                               "got " + std::to_string(fields.size()) + " (missing '" +
                               kColumns[std::min<size_t>(fields.size(), 6)] + "')");
    SampleRecord r;
    r.id = unescape_field(fields[0], lineno);
    r.modality = textcond::modality_from_name(fields[1]);
    r.duration = std::stod(fields[2]);
    r.attrs = attrs_from_string(unescape_field(fields[3], lineno), lineno);
    r.instruction = unescape_field(fields[4], lineno);
    r.content_text = unescape_field(fields[5], lineno);
    r.latent_path = unescape_field(fields[6], lineno);
    out.push_back(std::move(r));
  }
  return out;
}

textcond::LambdaStats corpus_lambda(const std::vector<SampleRecord>& records) {
  const auto vocab = textcond::Vocabulary::standard();
  std::vector<std::pair<long, double>> pairs;
  for (const auto& r : records) {
    if (r.modality != Modality::speech) continue;
    const auto tokens = record_content(r, vocab);
    long phonemes = 0;
    for (int id : tokens.ids)
      if (vocab.is_phoneme(id)) ++phonemes;
    pairs.emplace_back(phonemes, r.duration);
  }
  if (pairs.empty()) throw std::invalid_argument("corpus_lambda: no speech records");
  return textcond::compute_lambda(pairs);
}

namespace {

AttrMap draw_attrs(Rng& rng, Modality m, const AttributeSchema& schema) {
  AttrMap attrs;
  for (const auto& a : schema.attributes(m))
    attrs[a.name] = a.values[rng.uniform_index(a.values.size())];
  return attrs;
}

// Random toy text: 1..2 words of 3..6 lowercase letters. Total phoneme counts
// stay far below the bound (22) where count/duration stops round-tripping to
// an exact ratio in double arithmetic.
std::string draw_text(Rng& rng, int max_words = 2) {
  const int words = 1 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(max_words)));
  std::string text;
  for (int w = 0; w < words; ++w) {
    if (w) text += ' ';
    const int len = 3 + static_cast<int>(rng.uniform_index(4));
    for (int i = 0; i < len; ++i)
      text += static_cast<char>('a' + rng.uniform_index(26));
  }
  return text;
}

}  // namespace

std::vector<SampleRecord> generate_corpus(const std::filesystem::path& out_dir,
                                          const CorpusSpec& spec, const AttributeSchema& schema,
                                          const GenParams& gen, const codec::CodecConfig& codec) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "latents");
  std::vector<SampleRecord> records;

  const int n_dialogue =
      std::min(spec.n_speech, static_cast<int>(std::llround(spec.dialogue_frac * spec.n_speech)));
  for (int i = 0; i < spec.n_speech; ++i) {
    const uint64_t s = derive_seed(spec.seed, "corpus.speech", static_cast<uint64_t>(i));
    Rng rng(derive_seed(s, "spec"));
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "sp%04d", i);
    std::pair<SampleRecord, codec::LatentSequence> made =
        i >= spec.n_speech - n_dialogue
            ? gen_dialogue_sample(s, draw_attrs(rng, Modality::speech, schema), draw_text(rng, 1),
                                  draw_text(rng, 1), schema, gen, codec)
            : gen_speech_sample(s, draw_attrs(rng, Modality::speech, schema), draw_text(rng),
                                schema, gen, codec);
    made.first.id = idbuf;
    made.first.latent_path = std::string("latents/") + idbuf + ".snlt";
    codec::write_latents(out_dir / made.first.latent_path, made.second);
    records.push_back(made.first);
  }
  for (int i = 0; i < spec.n_music; ++i) {
    const uint64_t s = derive_seed(spec.seed, "corpus.music", static_cast<uint64_t>(i));
    Rng rng(derive_seed(s, "spec"));
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "mu%04d", i);
    auto made = gen_music_sample(s, draw_attrs(rng, Modality::music, schema), draw_text(rng),
                                 schema, gen, codec);
    made.first.id = idbuf;
    made.first.latent_path = std::string("latents/") + idbuf + ".snlt";
    codec::write_latents(out_dir / made.first.latent_path, made.second);
    records.push_back(made.first);
  }
  for (int i = 0; i < spec.n_sfx; ++i) {
    const uint64_t s = derive_seed(spec.seed, "corpus.sfx", static_cast<uint64_t>(i));
    Rng rng(derive_seed(s, "spec"));
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "fx%04d", i);
    // 22..60 frames at the corpus frame rate.
    const long frames = 22 + static_cast<long>(rng.uniform_index(39));
    const double duration = static_cast<double>(frames) / codec.frame_rate();
    auto made = gen_sfx_sample(s, draw_attrs(rng, Modality::sfx, schema), duration, schema, gen,
                               codec);
    made.first.id = idbuf;
    made.first.latent_path = std::string("latents/") + idbuf + ".snlt";
    codec::write_latents(out_dir / made.first.latent_path, made.second);
    records.push_back(made.first);
  }

  write_manifest(records, out_dir / "manifest.tsv");
  textcond::Vocabulary::standard().save(out_dir / "vocab.txt");
  instruction_vocab(schema).save(out_dir / "instr_vocab.txt");
  return records;
}

}  // namespace sonogen::syndata
