#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sonogen/tensor.hpp"

namespace sonogen::textcond {

enum class Modality { speech, music, sfx };

std::string_view modality_name(Modality m);
Modality modality_from_name(std::string_view name);

/// Token id space for content sequences: 26 letter phonemes, a word-boundary
/// phoneme for space, apostrophe, then [SFX], [S0]..[S9] and padding.
/// Ids are dense and stable; the standard() layout is the serialization
/// contract.
class Vocabulary {
 public:
  static Vocabulary standard();

  int id_for_char(char c) const;  // throws on out-of-alphabet characters
  int boundary_id() const { return boundary_id_; }
  int sfx_id() const { return sfx_id_; }
  int speaker_id(int k) const;  // k in 0..9
  int pad_id() const { return pad_id_; }
  int size() const { return static_cast<int>(symbols_.size()); }
  const std::string& symbol(int id) const;
  bool is_phoneme(int id) const { return id >= 0 && id < sfx_id_; }
  bool is_speaker(int id) const { return id >= speaker0_id_ && id < speaker0_id_ + 10; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> symbols_;
  int boundary_id_ = 0;
  int sfx_id_ = 0;
  int speaker0_id_ = 0;
  int pad_id_ = 0;
};

struct ContentTokens {
  std::vector<int> ids;
  Modality modality = Modality::speech;

  int length() const { return static_cast<int>(ids.size()); }
};

/// Validates the modality constraints: sfx sequences hold only the [SFX] id,
/// speech/music sequences hold none, speaker ids appear only as utterance
/// prefixes. Throws on violation.
void validate_content(const ContentTokens& tokens, const Vocabulary& vocab);

/// Corpus-level phonemes-per-second statistic, the arithmetic mean of
/// len(P_i) / duration(A_i) over the samples it was computed from.
struct LambdaStats {
  double lambda = 0.0;
  long sample_count = 0;
  std::vector<double> ratios;  // per-sample, kept for audit

  void save(const std::filesystem::path& path) const;
  static LambdaStats load(const std::filesystem::path& path);
};

/// Character-class toy G2P over lowercase letters, space and apostrophe.
/// One token per input character; spaces become the word-boundary phoneme.
ContentTokens g2p(std::string_view text, const Vocabulary& vocab,
                  Modality modality = Modality::speech);

LambdaStats compute_lambda(const std::vector<std::pair<long, double>>& corpus);

/// floor(lambda * t_target) repetitions of the [SFX] id. Errors when the
/// floor is zero: the duration is too short for temporal anchoring.
ContentTokens build_sfx_content(double t_target, double lambda, const Vocabulary& vocab);

/// Concatenates utterances, prefixing each with its speaker-id token.
ContentTokens tag_dialogue(const std::vector<std::pair<int, ContentTokens>>& utterances,
                           const Vocabulary& vocab);

/// Closed instruction vocabulary over whitespace-split words; id 0 is the
/// unknown-word fallback.
class InstructionVocab {
 public:
  explicit InstructionVocab(const std::vector<std::string>& words);

  int id(std::string_view word) const;            // 0 when unknown
  std::vector<int> encode(std::string_view instruction) const;
  int size() const { return static_cast<int>(words_.size()); }
  const std::string& word(int id) const { return words_[id]; }

  void save(const std::filesystem::path& path) const;
  static InstructionVocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
};

/// The model's text-stream input: instruction embeddings stacked on content
/// embeddings, with the segment lengths recorded.
struct ConditionSequence {
  Tensor embeddings;  // (L_I + L_C) x D
  int instruction_length = 0;
  int content_length = 0;
  Modality modality = Modality::speech;
};

/// Embedding lookup for a whitespace-split instruction, one row per word.
Tensor embed_instruction(std::string_view instruction, const InstructionVocab& vocab,
                         const Tensor& table);

/// Stacks instruction embeddings over content embeddings looked up from the
/// content table. Empty content is rejected unless allow_empty_content, the
/// explicit unconditional escape hatch.
ConditionSequence build_condition(const Tensor& instr_emb, const ContentTokens& content,
                                  const Tensor& content_table, bool allow_empty_content = false);

}  // namespace sonogen::textcond
