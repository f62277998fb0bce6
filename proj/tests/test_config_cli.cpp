#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sonogen/cli.hpp"
#include "sonogen/checkpoint.hpp"
#include "sonogen/config.hpp"
#include "sonogen/syndata.hpp"
#include "sonogen/toycodec.hpp"

namespace cfg_ns = sonogen::config;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& leaf) {
  const auto dir = fs::temp_directory_path() / "sonogen_cli_test" / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::trunc);
  os << text;
}

// Writes a config sized for fast CLI round trips.
fs::path tiny_config_file(const fs::path& dir) {
  const auto path = dir / "tiny.cfg";
  write_file(path,
             "[model]\n"
             "d_model=8\nn_heads=2\nhead_dim=4\nn_joint=1\nn_single=1\nff_dim=16\n"
             "[train]\n"
             "batch_size=3\nsteps_per_epoch=3\nlr=0.001\nseed=5\n"
             "[schedule]\n"
             "e1=1\ne2=2\ntotal_epochs=4\n"
             "[sampler]\n"
             "steps=4\n"
             "[eval]\n"
             "n_per_modality=3\n");
  return path;
}

int run_cli(std::initializer_list<std::string> args) {
  return sonogen::cli::run(std::vector<std::string>(args));
}

}  // namespace

TEST_CASE("canonical config text is a parsing fixed point") {
  const auto cfg = cfg_ns::default_config();
  const std::string text = cfg_ns::canonical_text(cfg);
  const auto reparsed = cfg_ns::parse_config_text(text);
  CHECK(cfg_ns::canonical_text(reparsed) == text);
  CHECK(cfg_ns::arch_digest(reparsed) == cfg_ns::arch_digest(cfg));
}

TEST_CASE("unknown keys and sections are rejected with location") {
  CHECK_THROWS_WITH_AS(cfg_ns::parse_config_text("[model]\nbogus_key=1\n", "x.cfg"),
                       doctest::Contains("x.cfg:2"), cfg_ns::ConfigError);
  CHECK_THROWS_AS(cfg_ns::parse_config_text("[nosuchsection]\n"), cfg_ns::ConfigError);
  CHECK_THROWS_AS(cfg_ns::parse_config_text("stray=1\n"), cfg_ns::ConfigError);
  CHECK_THROWS_AS(cfg_ns::parse_config_text("[model]\nd_model=abc\n"), cfg_ns::ConfigError);
}

TEST_CASE("comments, blanks and whitespace are tolerated") {
  const auto cfg = cfg_ns::parse_config_text("# comment\n\n[model]\n  d_model = 16\n"
                                             "  n_heads=2\n  head_dim=8\n");
  CHECK(cfg.model.d_model == 16);
  CHECK(cfg.model.head_dim == 8);
}

TEST_CASE("the architecture digest ignores training settings") {
  auto a = cfg_ns::default_config();
  auto b = a;
  b.train.lr = 0.5;
  b.sampler.steps = 99;
  CHECK(cfg_ns::arch_digest(a) == cfg_ns::arch_digest(b));
  b.model.n_joint = 7;
  CHECK(cfg_ns::arch_digest(a) != cfg_ns::arch_digest(b));
}

TEST_CASE("wiring validation ties the model to the codec") {
  auto cfg = cfg_ns::default_config();
  cfg.model.latent_channels = 5;
  CHECK_THROWS_AS(cfg_ns::validate_wiring(cfg), cfg_ns::ConfigError);
}

TEST_CASE("gen-data writes a deterministic corpus") {
  const auto dir = temp_dir("gen");
  const auto out_a = (dir / "a").string();
  const auto out_b = (dir / "b").string();
  CHECK(run_cli({"gen-data", "--out", out_a, "--n-speech", "4", "--n-music", "2", "--n-sfx", "2",
                 "--seed", "3"}) == 0);
  CHECK(run_cli({"gen-data", "--out", out_b, "--n-speech", "4", "--n-music", "2", "--n-sfx", "2",
                 "--seed", "3"}) == 0);
  CHECK(slurp(dir / "a" / "manifest.tsv") == slurp(dir / "b" / "manifest.tsv"));
  const auto records = sonogen::syndata::read_manifest(dir / "a" / "manifest.tsv");
  CHECK(records.size() == 8);
  int speech_rows = 0;
  for (const auto& r : records)
    if (r.modality == sonogen::textcond::Modality::speech) ++speech_rows;
  CHECK(speech_rows == 4);
  for (const auto& r : records)
    CHECK(slurp(dir / "a" / r.latent_path) == slurp(dir / "b" / r.latent_path));
}

TEST_CASE("train, sample, eval and inspect-tokens run end to end") {
  const auto dir = temp_dir("pipeline");
  const auto cfg_path = tiny_config_file(dir);
  const auto data = (dir / "data").string();
  REQUIRE(run_cli({"gen-data", "--config", cfg_path.string(), "--out", data, "--n-speech", "6",
                   "--n-music", "4", "--n-sfx", "4", "--seed", "2"}) == 0);
  const auto manifest = data + "/manifest.tsv";
  const auto run_dir = (dir / "run").string();

  CHECK(run_cli({"train", "--config", cfg_path.string(), "--manifest", manifest, "--run-dir",
                 run_dir, "--epochs", "2"}) == 0);
  const auto ckpt = run_dir + "/checkpoints/epoch_0002.snck";
  REQUIRE(fs::exists(ckpt));

  // Missing manifest is a usage error naming the path.
  CHECK(run_cli({"train", "--config", cfg_path.string(), "--manifest", "/nope/missing.tsv"}) == 2);

  // Sampling: speech content path and sfx duration path.
  const auto out_latent = (dir / "sp.snlt").string();
  CHECK(run_cli({"sample", "--config", cfg_path.string(), "--checkpoint", ckpt, "--instruction",
                 "a male voice with a bright tone", "--content", "ab", "--out", out_latent,
                 "--seed", "9"}) == 0);
  const auto latent =
      sonogen::codec::read_latents(out_latent, cfg_ns::load_config(cfg_path).codec);
  CHECK(latent.frames == 8);  // 2 phonemes x 4 frames

  const auto out_sfx = (dir / "fx.snlt").string();
  const auto out_wav = (dir / "fx.snwv").string();
  CHECK(run_cli({"sample", "--config", cfg_path.string(), "--checkpoint", ckpt, "--instruction",
                 "a burst event with a fast decay", "--duration", "2.0", "--lambda",
                 run_dir + "/lambda.stats", "--out", out_sfx, "--wav", out_wav, "--seed",
                 "9"}) == 0);
  // lambda = 10.75: floor(21.5) = 21 tokens, then 84 frames.
  const auto fx = sonogen::codec::read_latents(out_sfx, cfg_ns::load_config(cfg_path).codec);
  CHECK(fx.frames == 84);
  CHECK(fs::exists(out_wav));

  // Determinism: the same sample command writes identical bytes.
  const auto out_sfx2 = (dir / "fx2.snlt").string();
  CHECK(run_cli({"sample", "--config", cfg_path.string(), "--checkpoint", ckpt, "--instruction",
                 "a burst event with a fast decay", "--duration", "2.0", "--lambda",
                 run_dir + "/lambda.stats", "--out", out_sfx2, "--seed", "9"}) == 0);
  CHECK(slurp(out_sfx) == slurp(out_sfx2));

  // Evaluate and inspect.
  const auto report = (dir / "report.txt").string();
  CHECK(run_cli({"eval", "--config", cfg_path.string(), "--checkpoint", ckpt, "--manifest",
                 manifest, "--report", report, "--n", "2"}) == 0);
  CHECK(slurp(report).find("acc.speech.gender") != std::string::npos);

  CHECK(run_cli({"inspect-tokens", "--config", cfg_path.string(), "--manifest", manifest, "--id",
                 "fx0000"}) == 0);
  CHECK(run_cli({"inspect-tokens", "--config", cfg_path.string(), "--manifest", manifest, "--id",
                 "nosuchid"}) == 2);
}

TEST_CASE("sampling under a mismatching architecture is a digest error") {
  const auto dir = temp_dir("digest");
  const auto cfg_path = tiny_config_file(dir);
  auto cfg = cfg_ns::load_config(cfg_path);
  auto params = sonogen::mmdit::init_params(cfg.model, 4);
  sonogen::checkpoint::save(dir / "m.snck", params, cfg, 4);

  const auto other_cfg = dir / "other.cfg";
  write_file(other_cfg,
             "[model]\nd_model=8\nn_heads=2\nhead_dim=4\nn_joint=2\nn_single=1\nff_dim=16\n");
  CHECK(run_cli({"sample", "--config", other_cfg.string(), "--checkpoint",
                 (dir / "m.snck").string(), "--content", "ab", "--instruction", "x", "--out",
                 (dir / "o.snlt").string()}) == 1);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run_cli({"no-such-command"}) == 2);
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"sample"}) == 2);                       // missing required --checkpoint
  CHECK(run_cli({"train", "--config", "/missing.cfg"}) == 2);
}

TEST_CASE("an unwritable output directory is a runtime failure") {
  CHECK(run_cli({"gen-data", "--out", "/proc/definitely/not/writable", "--n-speech", "1"}) == 1);
}

TEST_CASE("SONATE_SEED overrides the config seed") {
  const auto dir = temp_dir("envseed");
  const auto cfg_path = tiny_config_file(dir);
  const auto data = (dir / "data").string();
  REQUIRE(run_cli({"gen-data", "--config", cfg_path.string(), "--out", data, "--n-speech", "3",
                   "--n-music", "0", "--n-sfx", "0", "--seed", "2"}) == 0);
  setenv("SONATE_SEED", "4242", 1);
  const auto run_dir = (dir / "run").string();
  CHECK(run_cli({"train", "--config", cfg_path.string(), "--manifest", data + "/manifest.tsv",
                 "--run-dir", run_dir, "--epochs", "1", "--mode", "tts-only"}) == 0);
  unsetenv("SONATE_SEED");
  const std::string snapshot = slurp(fs::path(run_dir) / "config.snapshot");
  CHECK(snapshot.find("seed=4242") != std::string::npos);
}
