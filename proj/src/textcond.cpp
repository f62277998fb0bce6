#include "sonogen/textcond.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sonogen::textcond {

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::speech: return "speech";
    case Modality::music: return "music";
    case Modality::sfx: return "sfx";
  }
  throw std::logic_error("bad modality");
}

Modality modality_from_name(std::string_view name) {
  if (name == "speech") return Modality::speech;
  if (name == "music") return Modality::music;
  if (name == "sfx") return Modality::sfx;
  throw std::invalid_argument("unknown modality: " + std::string(name));
}

Vocabulary Vocabulary::standard() {
  Vocabulary v;
  for (char c = 'a'; c <= 'z'; ++c) v.symbols_.push_back(std::string(1, c));
  v.boundary_id_ = static_cast<int>(v.symbols_.size());
  v.symbols_.push_back("<sp>");
  v.symbols_.push_back("'");
  v.sfx_id_ = static_cast<int>(v.symbols_.size());
  v.symbols_.push_back("[SFX]");
  v.speaker0_id_ = static_cast<int>(v.symbols_.size());
  for (int k = 0; k < 10; ++k) v.symbols_.push_back("[S" + std::to_string(k) + "]");
  v.pad_id_ = static_cast<int>(v.symbols_.size());
  v.symbols_.push_back("<pad>");
  return v;
}

int Vocabulary::id_for_char(char c) const {
  if (c >= 'a' && c <= 'z') return c - 'a';
  if (c == ' ') return boundary_id_;
  if (c == '\'') return boundary_id_ + 1;
  throw std::invalid_argument(std::string("g2p: character '") + c + "' outside the toy alphabet");
}

int Vocabulary::speaker_id(int k) const {
  if (k < 0 || k > 9)
    throw std::out_of_range("speaker index " + std::to_string(k) + " outside 0..9");
  return speaker0_id_ + k;
}

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("vocabulary id " + std::to_string(id));
  return symbols_[id];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write vocabulary: " + path.string());
  for (int i = 0; i < size(); ++i) os << i << '\t' << symbols_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read vocabulary: " + path.string());
  Vocabulary expected = standard();
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path.string() + ": malformed vocabulary line " + std::to_string(n + 1));
    const int id = std::stoi(line.substr(0, tab));
    const std::string sym = line.substr(tab + 1);
    if (id != n || id >= expected.size() || sym != expected.symbols_[id])
      throw std::runtime_error(path.string() + ": vocabulary mismatch at line " +
                               std::to_string(n + 1));
    ++n;
  }
  if (n != expected.size()) throw std::runtime_error(path.string() + ": truncated vocabulary");
  return expected;
}

void validate_content(const ContentTokens& tokens, const Vocabulary& vocab) {
  bool prev_was_speaker = false;
  for (size_t i = 0; i < tokens.ids.size(); ++i) {
    const int id = tokens.ids[i];
    if (id < 0 || id >= vocab.size())
      throw std::invalid_argument("content token id " + std::to_string(id) + " outside vocabulary");
    if (tokens.modality == Modality::sfx) {
      if (id != vocab.sfx_id())
        throw std::invalid_argument("sfx content may contain only the [SFX] token");
    } else {
      if (id == vocab.sfx_id())
        throw std::invalid_argument("[SFX] token not allowed in speech/music content");
      if (vocab.is_speaker(id)) {
        if (tokens.modality != Modality::speech)
          throw std::invalid_argument("speaker ids are speech-only");
        if (prev_was_speaker)
          throw std::invalid_argument("speaker id must prefix a non-empty utterance");
      }
    }
    prev_was_speaker = vocab.is_speaker(id);
  }
  if (prev_was_speaker) throw std::invalid_argument("trailing speaker id without utterance");
}

ContentTokens g2p(std::string_view text, const Vocabulary& vocab, Modality modality) {
  if (modality == Modality::sfx) throw std::invalid_argument("g2p does not produce sfx content");
  ContentTokens out;
  out.modality = modality;
  out.ids.reserve(text.size());
  for (size_t i = 0; i < text.size(); ++i) {
    try {
      out.ids.push_back(vocab.id_for_char(text[i]));
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("g2p: character '" + std::string(1, text[i]) + "' at position " +
                                  std::to_string(i) + " outside the toy alphabet");
    }
  }
  return out;
}

LambdaStats compute_lambda(const std::vector<std::pair<long, double>>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("compute_lambda: empty corpus");
  LambdaStats stats;
  stats.sample_count = static_cast<long>(corpus.size());
  stats.ratios.reserve(corpus.size());
  double sum = 0.0;
  for (size_t i = 0; i < corpus.size(); ++i) {
    const auto [count, duration] = corpus[i];
    if (count < 1)
      throw std::invalid_argument("compute_lambda: phoneme count < 1 at sample " + std::to_string(i));
    if (!(duration > 0.0))
      throw std::invalid_argument("compute_lambda: non-positive duration at sample " +
                                  std::to_string(i));
    const double ratio = static_cast<double>(count) / duration;
    if (!std::isfinite(ratio))
      throw std::invalid_argument("compute_lambda: non-finite ratio at sample " + std::to_string(i));
    stats.ratios.push_back(ratio);
    sum += ratio;
  }
  stats.lambda = sum / static_cast<double>(stats.sample_count);
  return stats;
}

void LambdaStats::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write lambda stats: " + path.string());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", lambda);
  os << "lambda=" << buf << '\n' << "n=" << sample_count << '\n';
}

LambdaStats LambdaStats::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read lambda stats: " + path.string());
  LambdaStats stats;
  std::string line;
  bool have_lambda = false, have_n = false;
  while (std::getline(is, line)) {
    if (line.rfind("lambda=", 0) == 0) {
      stats.lambda = std::stod(line.substr(7));
      have_lambda = true;
    } else if (line.rfind("n=", 0) == 0) {
      stats.sample_count = std::stol(line.substr(2));
      have_n = true;
    }
  }
  if (!have_lambda || !have_n)
    throw std::runtime_error(path.string() + ": missing lambda= or n= entry");
  return stats;
}

ContentTokens build_sfx_content(double t_target, double lambda, const Vocabulary& vocab) {
  if (!(t_target > 0.0)) throw std::invalid_argument("build_sfx_content: duration must be positive");
  if (!(lambda > 0.0)) throw std::invalid_argument("build_sfx_content: lambda must be positive");
  const long n = static_cast<long>(std::floor(lambda * t_target));
  if (n < 1)
    throw std::invalid_argument("build_sfx_content: duration too short for temporal anchoring "
                                "(floor(lambda*T) = 0)");
  ContentTokens out;
  out.modality = Modality::sfx;
  out.ids.assign(static_cast<size_t>(n), vocab.sfx_id());
  return out;
}

ContentTokens tag_dialogue(const std::vector<std::pair<int, ContentTokens>>& utterances,
                           const Vocabulary& vocab) {
  if (utterances.empty()) throw std::invalid_argument("tag_dialogue: empty dialogue");
  ContentTokens out;
  out.modality = Modality::speech;
  for (const auto& [speaker, tokens] : utterances) {
    if (tokens.modality != Modality::speech)
      throw std::invalid_argument("tag_dialogue: all utterances must be speech");
    if (tokens.ids.empty()) throw std::invalid_argument("tag_dialogue: empty utterance");
    out.ids.push_back(vocab.speaker_id(speaker));
    out.ids.insert(out.ids.end(), tokens.ids.begin(), tokens.ids.end());
  }
  validate_content(out, vocab);
  return out;
}

InstructionVocab::InstructionVocab(const std::vector<std::string>& words) {
  words_.push_back("<unk>");
  for (const auto& w : words) {
    bool dup = false;
    for (const auto& e : words_) dup = dup || e == w;
    if (!dup) words_.push_back(w);
  }
}

int InstructionVocab::id(std::string_view word) const {
  for (int i = 1; i < size(); ++i)
    if (words_[i] == word) return i;
  return 0;
}

std::vector<int> InstructionVocab::encode(std::string_view instruction) const {
  std::vector<int> ids;
  std::istringstream ss{std::string(instruction)};
  std::string word;
  while (ss >> word) ids.push_back(id(word));
  return ids;
}

void InstructionVocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write instruction vocabulary: " + path.string());
  for (int i = 0; i < size(); ++i) os << i << '\t' << words_[i] << '\n';
}

InstructionVocab InstructionVocab::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read instruction vocabulary: " + path.string());
  std::vector<std::string> words;
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path.string() + ": malformed line " + std::to_string(n + 1));
    if (std::stoi(line.substr(0, tab)) != n)
      throw std::runtime_error(path.string() + ": ids must be dense");
    if (n > 0) words.push_back(line.substr(tab + 1));
    ++n;
  }
  return InstructionVocab(words);
}

Tensor embed_instruction(std::string_view instruction, const InstructionVocab& vocab,
                         const Tensor& table) {
  const auto ids = vocab.encode(instruction);
  Tensor out(static_cast<int>(ids.size()), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* src = table.row(ids[i]);
    double* dst = out.row(static_cast<int>(i));
    for (int j = 0; j < table.cols(); ++j) dst[j] = src[j];
  }
  return out;
}

ConditionSequence build_condition(const Tensor& instr_emb, const ContentTokens& content,
                                  const Tensor& content_table, bool allow_empty_content) {
  if (content.ids.empty() && !allow_empty_content)
    throw std::invalid_argument("build_condition: empty content (pass allow_empty_content for "
                                "unconditional use)");
  if (instr_emb.rows() > 0 && instr_emb.cols() != content_table.cols())
    throw std::invalid_argument("build_condition: embedding width mismatch");
  for (int id : content.ids)
    if (id < 0 || id >= content_table.rows())
      throw std::out_of_range("build_condition: unknown content id " + std::to_string(id));
  ConditionSequence cond;
  cond.instruction_length = instr_emb.rows();
  cond.content_length = content.length();
  cond.modality = content.modality;
  cond.embeddings = Tensor(cond.instruction_length + cond.content_length, content_table.cols());
  for (int i = 0; i < instr_emb.rows(); ++i)
    for (int j = 0; j < instr_emb.cols(); ++j) cond.embeddings.at(i, j) = instr_emb.at(i, j);
  for (int i = 0; i < cond.content_length; ++i) {
    const double* src = content_table.row(content.ids[i]);
    double* dst = cond.embeddings.row(cond.instruction_length + i);
    for (int j = 0; j < content_table.cols(); ++j) dst[j] = src[j];
  }
  return cond;
}

}  // namespace sonogen::textcond
