#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "sonogen/rng.hpp"
#include "sonogen/textcond.hpp"

using sonogen::Rng;
using sonogen::Tensor;
namespace tc = sonogen::textcond;
namespace fs = std::filesystem;

namespace {

const tc::Vocabulary& vocab() {
  static const tc::Vocabulary v = tc::Vocabulary::standard();
  return v;
}

}  // namespace

TEST_CASE("vocabulary ids are dense, unique and disjoint by role") {
  const auto& v = vocab();
  CHECK(v.size() == 40);  // 26 letters + boundary + apostrophe + [SFX] + 10 speakers + pad
  std::map<std::string, int> seen;
  for (int id = 0; id < v.size(); ++id) {
    CHECK(seen.emplace(v.symbol(id), id).second);
  }
  CHECK(v.is_phoneme(v.id_for_char('a')));
  CHECK(v.is_phoneme(v.boundary_id()));
  CHECK(!v.is_phoneme(v.sfx_id()));
  CHECK(!v.is_phoneme(v.speaker_id(0)));
  CHECK(v.is_speaker(v.speaker_id(9)));
  CHECK(!v.is_speaker(v.sfx_id()));
}

TEST_CASE("vocabulary serialization round-trips") {
  const auto dir = fs::temp_directory_path() / "sonogen_textcond_test";
  fs::create_directories(dir);
  vocab().save(dir / "vocab.txt");
  const auto loaded = tc::Vocabulary::load(dir / "vocab.txt");
  CHECK(loaded.size() == vocab().size());
  for (int id = 0; id < loaded.size(); ++id) CHECK(loaded.symbol(id) == vocab().symbol(id));
}

TEST_CASE("g2p maps characters one to one") {
  CHECK(tc::g2p("", vocab()).ids.empty());
  const auto ab = tc::g2p("ab", vocab());
  CHECK(ab.ids == std::vector<int>{vocab().id_for_char('a'), vocab().id_for_char('b')});
  const auto spaced = tc::g2p("a a", vocab());
  CHECK(spaced.ids ==
        std::vector<int>{vocab().id_for_char('a'), vocab().boundary_id(), vocab().id_for_char('a')});
  CHECK(spaced.length() == 3);
  CHECK(spaced.modality == tc::Modality::speech);
}

TEST_CASE("g2p rejects out-of-alphabet characters with the position") {
  CHECK_THROWS_WITH_AS(tc::g2p("abC", vocab()), doctest::Contains("position 2"),
                       std::invalid_argument);
  CHECK_THROWS_AS(tc::g2p("a!b", vocab()), std::invalid_argument);
}

TEST_CASE("compute_lambda matches hand arithmetic") {
  const auto single = tc::compute_lambda({{10, 2.0}});
  CHECK(single.lambda == 5.0);
  CHECK(single.sample_count == 1);

  // Oracle: (10/2 + 20/5) / 2 = (5 + 4) / 2 = 4.5.
  const auto two = tc::compute_lambda({{10, 2.0}, {20, 5.0}});
  CHECK(two.lambda == 4.5);
  CHECK(two.ratios == std::vector<double>{5.0, 4.0});

  for (long k : {1L, 7L, 12L}) CHECK(tc::compute_lambda({{k, 1.0}}).lambda == double(k));
}

TEST_CASE("compute_lambda rejects bad corpora") {
  CHECK_THROWS_AS(tc::compute_lambda({}), std::invalid_argument);
  CHECK_THROWS_AS(tc::compute_lambda({{10, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(tc::compute_lambda({{10, -1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(tc::compute_lambda({{0, 1.0}}), std::invalid_argument);
}

TEST_CASE("compute_lambda is permutation invariant and scales linearly") {
  Rng rng(3);
  std::vector<std::pair<long, double>> corpus;
  for (int i = 0; i < 20; ++i)
    corpus.emplace_back(1 + static_cast<long>(rng.uniform_index(30)), 0.5 + rng.uniform() * 4.0);
  auto shuffled = corpus;
  for (size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.uniform_index(i)]);
  CHECK(tc::compute_lambda(corpus).lambda ==
        doctest::Approx(tc::compute_lambda(shuffled).lambda).epsilon(1e-12));

  auto doubled = corpus;
  for (auto& [count, dur] : doubled) count *= 2;
  CHECK(tc::compute_lambda(doubled).lambda ==
        doctest::Approx(2.0 * tc::compute_lambda(corpus).lambda).epsilon(1e-12));
}

TEST_CASE("lambda stats serialization round-trips") {
  const auto dir = fs::temp_directory_path() / "sonogen_textcond_test";
  fs::create_directories(dir);
  const auto stats = tc::compute_lambda({{10, 2.0}, {20, 5.0}});
  stats.save(dir / "lambda.stats");
  const auto loaded = tc::LambdaStats::load(dir / "lambda.stats");
  CHECK(loaded.lambda == stats.lambda);
  CHECK(loaded.sample_count == stats.sample_count);
}

TEST_CASE("build_sfx_content repeats the token floor(lambda*T) times") {
  // Oracle: floor(4.5*2.0) = 9, floor(4.5*2.1) = floor(9.45) = 9.
  const auto nine = tc::build_sfx_content(2.0, 4.5, vocab());
  CHECK(nine.length() == 9);
  CHECK(nine.modality == tc::Modality::sfx);
  for (int id : nine.ids) CHECK(id == vocab().sfx_id());
  CHECK(tc::build_sfx_content(2.1, 4.5, vocab()).length() == 9);
  CHECK_THROWS_WITH_AS(tc::build_sfx_content(0.5, 1.0, vocab()),
                       doctest::Contains("too short for temporal anchoring"),
                       std::invalid_argument);
}

TEST_CASE("sfx token count is monotone in duration and obeys the floor density bound") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const double lambda = 0.5 + rng.uniform() * 20.0;
    double t1 = 0.1 + rng.uniform() * 8.0;
    double t2 = 0.1 + rng.uniform() * 8.0;
    if (t1 > t2) std::swap(t1, t2);
    if (std::floor(lambda * t1) < 1) continue;
    const int n1 = tc::build_sfx_content(t1, lambda, vocab()).length();
    const int n2 = tc::build_sfx_content(t2, lambda, vocab()).length();
    CHECK(n1 <= n2);
    // Anchor density: n/T in [lambda - 1/T, lambda].
    CHECK(n2 / t2 <= lambda);
    CHECK(n2 / t2 >= lambda - 1.0 / t2);
  }
}

TEST_CASE("tag_dialogue prefixes each utterance with its speaker id") {
  const auto one = tc::tag_dialogue({{0, tc::g2p("a", vocab())}}, vocab());
  CHECK(one.ids == std::vector<int>{vocab().speaker_id(0), vocab().id_for_char('a')});

  // Oracle: concatenation with speaker prefixes, [S0] a [S1] b.
  const auto two =
      tc::tag_dialogue({{0, tc::g2p("a", vocab())}, {1, tc::g2p("b", vocab())}}, vocab());
  CHECK(two.ids == std::vector<int>{vocab().speaker_id(0), vocab().id_for_char('a'),
                                    vocab().speaker_id(1), vocab().id_for_char('b')});

  CHECK_THROWS_AS(tc::tag_dialogue({}, vocab()), std::invalid_argument);
  CHECK_THROWS_AS(tc::tag_dialogue({{11, tc::g2p("a", vocab())}}, vocab()), std::out_of_range);
}

TEST_CASE("tag_dialogue preserves the multiset of non-speaker tokens") {
  const auto u0 = tc::g2p("abc a", vocab());
  const auto u1 = tc::g2p("xyz", vocab());
  const auto tagged = tc::tag_dialogue({{3, u0}, {7, u1}}, vocab());
  std::map<int, int> want, got;
  for (int id : u0.ids) ++want[id];
  for (int id : u1.ids) ++want[id];
  int speaker_count = 0;
  for (int id : tagged.ids) {
    if (vocab().is_speaker(id))
      ++speaker_count;
    else
      ++got[id];
  }
  CHECK(speaker_count == 2);
  CHECK(want == got);
}

TEST_CASE("content validation catches modality violations") {
  tc::ContentTokens bad;
  bad.modality = tc::Modality::sfx;
  bad.ids = {vocab().sfx_id(), vocab().id_for_char('a')};
  CHECK_THROWS_AS(tc::validate_content(bad, vocab()), std::invalid_argument);

  bad.modality = tc::Modality::music;
  bad.ids = {vocab().id_for_char('a'), vocab().sfx_id()};
  CHECK_THROWS_AS(tc::validate_content(bad, vocab()), std::invalid_argument);

  bad.modality = tc::Modality::speech;
  bad.ids = {vocab().id_for_char('a'), vocab().speaker_id(0)};  // trailing speaker
  CHECK_THROWS_AS(tc::validate_content(bad, vocab()), std::invalid_argument);
}

TEST_CASE("instruction vocabulary id 0 is the unknown fallback") {
  const tc::InstructionVocab iv({"male", "happy", "voice"});
  CHECK(iv.size() == 4);
  CHECK(iv.id("male") == 1);
  CHECK(iv.id("zzznotaword") == 0);
  CHECK(iv.encode("male happy") == std::vector<int>{1, 2});
  CHECK(iv.encode("") == std::vector<int>{});
  CHECK(iv.encode("zzznotaword") == std::vector<int>{0});
}

TEST_CASE("embed_instruction looks rows up in order") {
  const tc::InstructionVocab iv({"male", "happy"});
  Rng rng(5);
  const Tensor table = rng.gaussian_tensor(iv.size(), 6);
  const Tensor emb = tc::embed_instruction("male happy", iv, table);
  REQUIRE(emb.rows() == 2);
  for (int j = 0; j < 6; ++j) {
    CHECK(emb.at(0, j) == table.at(1, j));
    CHECK(emb.at(1, j) == table.at(2, j));
  }
  CHECK(tc::embed_instruction("", iv, table).rows() == 0);
  const Tensor unk = tc::embed_instruction("zzznotaword", iv, table);
  REQUIRE(unk.rows() == 1);
  for (int j = 0; j < 6; ++j) CHECK(unk.at(0, j) == table.at(0, j));
}

TEST_CASE("build_condition stacks instruction over content and records lengths") {
  Rng rng(6);
  const Tensor content_table = rng.gaussian_tensor(vocab().size(), 6);
  const tc::InstructionVocab iv({"male", "happy"});
  const Tensor instr_table = rng.gaussian_tensor(iv.size(), 6);

  const auto content = tc::g2p("abc", vocab());
  const auto no_instr = tc::build_condition(Tensor(0, 6), content, content_table);
  CHECK(no_instr.instruction_length == 0);
  CHECK(no_instr.content_length == 3);
  CHECK(no_instr.embeddings.rows() == 3);

  const auto sfx = tc::build_sfx_content(2.0, 4.5, vocab());
  const Tensor instr = tc::embed_instruction("male happy", iv, instr_table);
  const auto cond = tc::build_condition(instr, sfx, content_table);
  CHECK(cond.instruction_length == 2);
  CHECK(cond.content_length == 9);
  CHECK(cond.embeddings.rows() == 11);
  CHECK(cond.modality == tc::Modality::sfx);
  for (int j = 0; j < 6; ++j) {
    CHECK(cond.embeddings.at(0, j) == instr.at(0, j));
    CHECK(cond.embeddings.at(2, j) == content_table.at(vocab().sfx_id(), j));
  }

  tc::ContentTokens empty;
  CHECK_THROWS_AS(tc::build_condition(instr, empty, content_table), std::invalid_argument);
  const auto uncond = tc::build_condition(instr, empty, content_table, true);
  CHECK(uncond.content_length == 0);
  CHECK(uncond.embeddings.rows() == 2);
}

TEST_CASE("build_condition length is additive over random cases") {
  Rng rng(7);
  const Tensor content_table = rng.gaussian_tensor(vocab().size(), 4);
  for (int trial = 0; trial < 50; ++trial) {
    const int li = static_cast<int>(rng.uniform_index(5));
    const int lc = 1 + static_cast<int>(rng.uniform_index(12));
    std::string text;
    for (int i = 0; i < lc; ++i) text += static_cast<char>('a' + rng.uniform_index(26));
    const auto cond =
        tc::build_condition(rng.gaussian_tensor(li, 4), tc::g2p(text, vocab()), content_table);
    CHECK(cond.embeddings.rows() == li + lc);
    CHECK(cond.instruction_length + cond.content_length == cond.embeddings.rows());
  }
}
