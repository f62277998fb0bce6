#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sonogen/rng.hpp"
#include "sonogen/syndata.hpp"

using sonogen::Rng;
using sonogen::Tensor;
namespace sd = sonogen::syndata;
namespace tc = sonogen::textcond;
namespace codec = sonogen::codec;
namespace fs = std::filesystem;
using sd::Modality;

namespace {

codec::CodecConfig corpus_codec() {
  codec::CodecConfig cfg;
  cfg.sample_rate = 44032;  // exact 43 Hz frame rate
  cfg.window = 1024;
  cfg.latent_dim = 16;
  return cfg;
}

const sd::AttributeSchema& schema() {
  static const auto s = sd::AttributeSchema::standard(16);
  return s;
}

sd::AttrMap speech_attrs(const std::string& gender = "male", const std::string& tone = "bright") {
  return {{"gender", gender}, {"tone", tone}};
}

sd::AttrMap music_attrs(const std::string& genre = "pulse", const std::string& mood = "calm") {
  return {{"genre", genre}, {"mood", mood}};
}

sd::AttrMap sfx_attrs(const std::string& event = "burst", const std::string& decay = "fast") {
  return {{"event", event}, {"decay", decay}};
}

fs::path temp_dir(const std::string& leaf) {
  const auto dir = fs::temp_directory_path() / "sonogen_syndata_test" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("schema signatures separate same-attribute values well beyond the noise") {
  CHECK(schema().min_separation() >= 3.0 * 0.05);
  const Tensor male = schema().signature(Modality::speech, "gender", "male");
  const Tensor female = schema().signature(Modality::speech, "gender", "female");
  double dist = 0.0;
  for (int c = 0; c < 16; ++c) {
    const double d = male.at(0, c) - female.at(0, c);
    dist += d * d;
  }
  CHECK(std::sqrt(dist) == doctest::Approx(schema().min_separation()));
  CHECK_THROWS_AS(schema().signature(Modality::speech, "genre", "pulse"), std::invalid_argument);
}

TEST_CASE("instruction templates stay within the closed word list") {
  const auto words = schema().instruction_words();
  auto in_words = [&](const std::string& w) {
    return std::find(words.begin(), words.end(), w) != words.end();
  };
  for (Modality m : {Modality::speech, Modality::music, Modality::sfx}) {
    sd::AttrMap attrs = m == Modality::speech ? speech_attrs()
                        : m == Modality::music ? music_attrs()
                                               : sfx_attrs();
    std::istringstream ss(schema().instruction_for(m, attrs));
    std::string w;
    while (ss >> w) CHECK(in_words(w));
  }
  const auto iv = sd::instruction_vocab(schema());
  CHECK(iv.size() == static_cast<int>(words.size()) + 1);
}

TEST_CASE("speech latents span frames_per_phoneme frames per phoneme") {
  sd::GenParams gen;
  const auto [rec, latent] =
      sd::gen_speech_sample(5, speech_attrs(), "ab", schema(), gen, corpus_codec());
  CHECK(latent.frames == 8);  // 2 phonemes x 4 frames
  CHECK(latent.channels == 16);
  CHECK(rec.duration == doctest::Approx(8.0 / 43.0));
  CHECK(rec.instruction == "a male voice with a bright tone");
  CHECK(rec.content_text == "ab");
  CHECK_THROWS_AS(sd::gen_speech_sample(5, speech_attrs(), "", schema(), gen, corpus_codec()),
                  std::invalid_argument);
}

TEST_CASE("gender signature is the exact pre-noise delta between paired samples") {
  sd::GenParams gen;
  const auto [rec_m, lat_m] =
      sd::gen_speech_sample(7, speech_attrs("male"), "abc", schema(), gen, corpus_codec());
  const auto [rec_f, lat_f] =
      sd::gen_speech_sample(7, speech_attrs("female"), "abc", schema(), gen, corpus_codec());
  // Oracle: same seed and text share the noise field, so the difference is
  // exactly the signature delta.
  const Tensor sig_m = schema().signature(Modality::speech, "gender", "male");
  const Tensor sig_f = schema().signature(Modality::speech, "gender", "female");
  for (int f = 0; f < lat_m.frames; ++f)
    for (int c = 0; c < 16; ++c)
      CHECK(lat_m.data.at(f, c) - lat_f.data.at(f, c) ==
            doctest::Approx(sig_m.at(0, c) - sig_f.at(0, c)).epsilon(1e-12));
}

TEST_CASE("generation is deterministic in the seed") {
  sd::GenParams gen;
  const auto a = sd::gen_speech_sample(9, speech_attrs(), "hello", schema(), gen, corpus_codec());
  const auto b = sd::gen_speech_sample(9, speech_attrs(), "hello", schema(), gen, corpus_codec());
  CHECK(a.second.data == b.second.data);
  const auto c = sd::gen_speech_sample(10, speech_attrs(), "hello", schema(), gen, corpus_codec());
  CHECK(c.second.data.max_abs_diff(a.second.data) > 0.0);
}

TEST_CASE("music adds a periodic channel whose autocorrelation peaks at the genre period") {
  sd::GenParams gen;
  for (auto [genre, period] : {std::pair{"pulse", 8}, {"wave", 12}}) {
    const auto [rec, latent] = sd::gen_music_sample(11, music_attrs(genre), "abcdefgh abcdefgh",
                                                    schema(), gen, corpus_codec());
    const int pc = schema().periodic_channel();
    const int frames = latent.frames;
    // Autocorrelation oracle over the designated channel.
    std::vector<double> x(frames);
    double mean = 0.0;
    for (int f = 0; f < frames; ++f) mean += latent.data.at(f, pc);
    mean /= frames;
    for (int f = 0; f < frames; ++f) x[f] = latent.data.at(f, pc) - mean;
    int best_lag = -1;
    double best = -1e300;
    for (int lag = 2; lag <= frames / 2; ++lag) {
      double acc = 0.0;
      for (int f = 0; f + lag < frames; ++f) acc += x[f] * x[f + lag];
      acc /= (frames - lag);
      if (acc > best) {
        best = acc;
        best_lag = lag;
      }
    }
    CHECK(best_lag == period);
  }
}

TEST_CASE("speech and music share the phoneme-aligned component") {
  sd::GenParams gen;
  const auto [rs, ls] =
      sd::gen_speech_sample(13, speech_attrs(), "abba", schema(), gen, corpus_codec());
  const auto [rm, lm] =
      sd::gen_music_sample(13, music_attrs(), "abba", schema(), gen, corpus_codec());
  // Oracle: subtract the known signatures and periodic component; the
  // remainders (phoneme base + shared noise) must agree exactly.
  Tensor delta(ls.frames, 16);
  for (int f = 0; f < ls.frames; ++f)
    for (int c = 0; c < 16; ++c) delta.at(f, c) = lm.data.at(f, c) - ls.data.at(f, c);
  Tensor expected(1, 16);
  for (const auto& [k, v] : music_attrs()) {
    const Tensor sig = schema().signature(Modality::music, k, v);
    for (int c = 0; c < 16; ++c) expected.at(0, c) += sig.at(0, c);
  }
  for (const auto& [k, v] : speech_attrs()) {
    const Tensor sig = schema().signature(Modality::speech, k, v);
    for (int c = 0; c < 16; ++c) expected.at(0, c) -= sig.at(0, c);
  }
  const int pc = schema().periodic_channel();
  for (int f = 0; f < ls.frames; ++f)
    for (int c = 0; c < 16; ++c) {
      double want = expected.at(0, c);
      if (c == pc) want += gen.periodic_amp * std::cos(2.0 * 3.14159265358979323846 * f / 8);
      CHECK(delta.at(f, c) == doctest::Approx(want).epsilon(1e-10));
    }
  CHECK_THROWS_AS(sd::gen_music_sample(13, music_attrs(), "", schema(), gen, corpus_codec()),
                  std::invalid_argument);
}

TEST_CASE("sfx latents cover frame_count(duration) frames") {
  sd::GenParams gen;
  const auto [rec, latent] =
      sd::gen_sfx_sample(15, sfx_attrs(), 2.0, schema(), gen, corpus_codec());
  CHECK(latent.frames == 86);  // floor(2 * 43)
  CHECK(rec.content_text.empty());
  CHECK_THROWS_AS(sd::gen_sfx_sample(15, sfx_attrs(), 0.0, schema(), gen, corpus_codec()),
                  std::invalid_argument);
  CHECK_THROWS_AS(sd::gen_sfx_sample(15, sfx_attrs(), 0.001, schema(), gen, corpus_codec()),
                  std::invalid_argument);
}

TEST_CASE("burst envelopes peak early, swell envelopes peak late") {
  sd::GenParams gen;
  const auto [rec, latent] =
      sd::gen_sfx_sample(17, sfx_attrs("burst", "fast"), 1.5, schema(), gen, corpus_codec());
  // Oracle: argmax of the event signature channel.
  const auto support = schema().support(Modality::sfx, "event");
  const int ch = support[0];
  int argmax = 0;
  for (int f = 1; f < latent.frames; ++f)
    if (latent.data.at(f, ch) > latent.data.at(argmax, ch)) argmax = f;
  CHECK(argmax < latent.frames / 4);

  const auto [rec2, swell] =
      sd::gen_sfx_sample(18, sfx_attrs("swell", "slow"), 1.5, schema(), gen, corpus_codec());
  const int ch2 = support[1];
  int argmax2 = 0;
  for (int f = 1; f < swell.frames; ++f)
    if (swell.data.at(f, ch2) > swell.data.at(argmax2, ch2)) argmax2 = f;
  CHECK(argmax2 > swell.frames / 2);
}

TEST_CASE("dialogue concatenates two tagged utterances") {
  sd::GenParams gen;
  const auto [rec, latent] =
      sd::gen_dialogue_sample(19, speech_attrs(), "abc", "de", schema(), gen, corpus_codec());
  CHECK(rec.content_text == "abc|de");
  CHECK(latent.frames == (3 + 2) * 4);
  const auto vocab = tc::Vocabulary::standard();
  const auto tokens = sd::record_content(rec, vocab);
  CHECK(tokens.ids.size() == 7);  // [S0] a b c [S1] d e
  CHECK(tokens.ids[0] == vocab.speaker_id(0));
  CHECK(tokens.ids[4] == vocab.speaker_id(1));
}

TEST_CASE("manifests round-trip including tabs and attribute maps") {
  const auto dir = temp_dir("manifest");
  std::vector<sd::SampleRecord> records;
  sd::SampleRecord r;
  r.id = "sp0000";
  r.modality = Modality::speech;
  r.duration = 8.0 / 43.0;
  r.attrs = speech_attrs();
  r.instruction = "a male voice with a bright tone";
  r.content_text = "ab";
  r.latent_path = "latents/sp0000.snlt";
  records.push_back(r);
  sd::SampleRecord weird = r;
  weird.id = "sp0001";
  weird.instruction = "tab\there and back\\slash";
  records.push_back(weird);
  sd::SampleRecord fx;
  fx.id = "fx0000";
  fx.modality = Modality::sfx;
  fx.duration = 2.0;
  fx.attrs = sfx_attrs();
  fx.instruction = "a burst event with a fast decay";
  fx.latent_path = "latents/fx0000.snlt";
  records.push_back(fx);

  sd::write_manifest(records, dir / "manifest.tsv");
  const auto back = sd::read_manifest(dir / "manifest.tsv");
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].id == records[i].id);
    CHECK(back[i].modality == records[i].modality);
    CHECK(back[i].duration == records[i].duration);
    CHECK(back[i].attrs == records[i].attrs);
    CHECK(back[i].instruction == records[i].instruction);
    CHECK(back[i].content_text == records[i].content_text);
    CHECK(back[i].latent_path == records[i].latent_path);
  }

  // Empty manifest reads as an empty list.
  { std::ofstream empty(dir / "empty.tsv"); }
  CHECK(sd::read_manifest(dir / "empty.tsv").empty());

  // A line missing a column is rejected with its line number.
  {
    std::ofstream os(dir / "bad.tsv");
    os << "x\tspeech\t1.0\tgender=male\tinstr\tab\n";  // 6 columns
  }
  CHECK_THROWS_WITH_AS(sd::read_manifest(dir / "bad.tsv"), doctest::Contains("line 1"),
                       std::runtime_error);
}

TEST_CASE("corpus lambda on the fixed-span corpus is exactly 43 / frames_per_phoneme") {
  const auto dir = temp_dir("lambda");
  sd::CorpusSpec spec;
  spec.n_speech = 24;
  spec.n_music = 4;
  spec.n_sfx = 4;
  spec.seed = 3;
  spec.dialogue_frac = 0.1;  // force a couple of dialogue rows
  sd::GenParams gen;
  const auto records = sd::generate_corpus(dir, spec, schema(), gen, corpus_codec());
  const auto stats = sd::corpus_lambda(records);
  CHECK(stats.lambda == 43.0 / 4.0);  // exact equality by construction
  CHECK(stats.sample_count == 24);
  for (double ratio : stats.ratios) CHECK(ratio == 10.75);

  auto shuffled = records;
  std::swap(shuffled[0], shuffled[5]);
  std::swap(shuffled[2], shuffled[9]);
  CHECK(sd::corpus_lambda(shuffled).lambda == stats.lambda);

  std::vector<sd::SampleRecord> no_speech;
  for (const auto& rec : records)
    if (rec.modality != Modality::speech) no_speech.push_back(rec);
  CHECK_THROWS_AS(sd::corpus_lambda(no_speech), std::invalid_argument);
}

TEST_CASE("generate_corpus is deterministic and writes readable latents") {
  const auto dir_a = temp_dir("corpus_a");
  const auto dir_b = temp_dir("corpus_b");
  sd::CorpusSpec spec;
  spec.n_speech = 6;
  spec.n_music = 5;
  spec.n_sfx = 4;
  spec.seed = 21;
  sd::GenParams gen;
  const auto ra = sd::generate_corpus(dir_a, spec, schema(), gen, corpus_codec());
  const auto rb = sd::generate_corpus(dir_b, spec, schema(), gen, corpus_codec());
  REQUIRE(ra.size() == 15);
  REQUIRE(rb.size() == 15);

  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  };
  CHECK(slurp(dir_a / "manifest.tsv") == slurp(dir_b / "manifest.tsv"));
  for (const auto& rec : ra) CHECK(slurp(dir_a / rec.latent_path) == slurp(dir_b / rec.latent_path));

  for (const auto& rec : ra) {
    const auto latent = codec::read_latents(dir_a / rec.latent_path, corpus_codec());
    CHECK(latent.frames > 0);
    CHECK(latent.channels == 16);
  }
}
