#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sonogen/tensor.hpp"
#include "sonogen/textcond.hpp"
#include "sonogen/toycodec.hpp"

namespace sonogen::syndata {

using textcond::Modality;
using AttrMap = std::map<std::string, std::string>;

struct Attribute {
  std::string name;
  std::vector<std::string> values;
};

/// Closed per-modality attribute sets and their latent signatures. Each
/// (attribute, value) owns one channel carrying a fixed offset, so distinct
/// values of an attribute are separated by amplitude * sqrt(2) in latent
/// space, far above 3x the generator noise scale. The same signatures drive
/// generation and the oracle classifier.
class AttributeSchema {
 public:
  static AttributeSchema standard(int channels = 16);

  int channels() const { return channels_; }
  double amplitude() const { return amplitude_; }
  const std::vector<Attribute>& attributes(Modality m) const;
  Tensor signature(Modality m, const std::string& attr, const std::string& value) const;
  std::vector<int> support(Modality m, const std::string& attr) const;
  double min_separation() const;

  /// Template-generated instruction string for an attribute map.
  std::string instruction_for(Modality m, const AttrMap& attrs) const;
  /// Every word any template can emit; source of the closed instruction
  /// vocabulary.
  std::vector<std::string> instruction_words() const;

  void validate_attrs(Modality m, const AttrMap& attrs) const;
  int value_index(Modality m, const std::string& attr, const std::string& value) const;

  /// Period (in frames) of the designated periodic channel for a genre.
  int genre_period(const std::string& genre) const;
  int periodic_channel() const { return 12; }

 private:
  int channels_ = 16;
  double amplitude_ = 0.5;
  std::vector<Attribute> speech_, music_, sfx_;
};

textcond::InstructionVocab instruction_vocab(const AttributeSchema& schema);

struct SampleRecord {
  std::string id;
  Modality modality = Modality::speech;
  double duration = 0.0;
  AttrMap attrs;
  std::string instruction;
  std::string content_text;  // empty for sfx; "left|right" for dialogue
  std::string latent_path;   // relative to the manifest directory
};

struct GenParams {
  int frames_per_phoneme = 4;
  double noise_scale = 0.05;
  double phoneme_amp = 0.25;
  double periodic_amp = 0.4;
};

/// Fixed per-phoneme pattern on channels 0..7, unit L2 norm, independent of
/// any corpus seed.
Tensor phoneme_pattern(int phoneme_id, int channels);

std::pair<SampleRecord, codec::LatentSequence> gen_speech_sample(uint64_t seed, const AttrMap& attrs,
                                                                 std::string_view text,
                                                                 const AttributeSchema& schema,
                                                                 const GenParams& gen,
                                                                 const codec::CodecConfig& codec);

std::pair<SampleRecord, codec::LatentSequence> gen_music_sample(uint64_t seed, const AttrMap& attrs,
                                                                std::string_view lyric_text,
                                                                const AttributeSchema& schema,
                                                                const GenParams& gen,
                                                                const codec::CodecConfig& codec);

std::pair<SampleRecord, codec::LatentSequence> gen_sfx_sample(uint64_t seed, const AttrMap& attrs,
                                                              double duration,
                                                              const AttributeSchema& schema,
                                                              const GenParams& gen,
                                                              const codec::CodecConfig& codec);

/// Two single-speaker utterances concatenated with [S0]/[S1] tags; both
/// share one attribute map.
std::pair<SampleRecord, codec::LatentSequence> gen_dialogue_sample(
    uint64_t seed, const AttrMap& attrs, std::string_view text0, std::string_view text1,
    const AttributeSchema& schema, const GenParams& gen, const codec::CodecConfig& codec);

/// Content tokens for a record: g2p for speech/music, dialogue tagging when
/// content_text holds a '|' separator. SFX records carry no stored content;
/// reconstruct those with build_sfx_content at load time.
textcond::ContentTokens record_content(const SampleRecord& rec, const textcond::Vocabulary& vocab);

// Tab-separated manifest, one record per line:
//   id  modality  duration  attrs(k=v;...)  instruction  content_text  latent_path
// with backslash escapes for tab, newline and backslash inside fields.
void write_manifest(const std::vector<SampleRecord>& records, const std::filesystem::path& path);
std::vector<SampleRecord> read_manifest(const std::filesystem::path& path);

/// Eq.-2 statistic over the speech records of a corpus (music and sfx rows
/// are ignored); phoneme counts come from the stored content text.
textcond::LambdaStats corpus_lambda(const std::vector<SampleRecord>& records);

struct CorpusSpec {
  int n_speech = 0;
  int n_music = 0;
  int n_sfx = 0;
  uint64_t seed = 1;
  double dialogue_frac = 0.005;
};

/// Writes latents/, manifest.tsv, vocab.txt and instr_vocab.txt under
/// out_dir; fully deterministic in the spec.
std::vector<SampleRecord> generate_corpus(const std::filesystem::path& out_dir,
                                          const CorpusSpec& spec, const AttributeSchema& schema,
                                          const GenParams& gen, const codec::CodecConfig& codec);

}  // namespace sonogen::syndata
