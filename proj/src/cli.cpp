#include "sonogen/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "sonogen/checkpoint.hpp"
#include "sonogen/config.hpp"
#include "sonogen/curriculum.hpp"
#include "sonogen/evalsuite.hpp"
#include "sonogen/flowmatch.hpp"
#include "sonogen/syndata.hpp"

namespace sonogen::cli {

namespace {

namespace fs = std::filesystem;

struct CommonOpts {
  std::string config_path;
};

config::RunConfig load_or_default(const CommonOpts& common) {
  config::RunConfig cfg =
      common.config_path.empty() ? config::default_config() : config::load_config(common.config_path);
  // SONATE_SEED overrides the config-file seeds (explicit CLI flags still win).
  if (const char* env = std::getenv("SONATE_SEED")) {
    try {
      const uint64_t seed = std::stoull(env);
      cfg.train.seed = seed;
      cfg.sampler.seed = seed;
    } catch (...) {
      throw config::ConfigError(std::string("SONATE_SEED is not an integer: ") + env);
    }
  }
  return cfg;
}

fs::path require_manifest(const std::string& flag_value, const config::RunConfig& cfg) {
  const std::string chosen = !flag_value.empty() ? flag_value : cfg.data.manifest;
  if (chosen.empty())
    throw config::ConfigError("no manifest given (use --manifest or [data] manifest=...)");
  if (!fs::exists(chosen)) throw config::ConfigError("manifest not found: " + chosen);
  return chosen;
}

int cmd_gen_data(const CommonOpts& common, const std::string& out_dir, int n_speech, int n_music,
                 int n_sfx, uint64_t seed, double dialogue_frac) {
  const config::RunConfig cfg = load_or_default(common);
  config::validate_wiring(cfg);
  syndata::CorpusSpec spec;
  spec.n_speech = n_speech;
  spec.n_music = n_music;
  spec.n_sfx = n_sfx;
  spec.seed = seed;
  spec.dialogue_frac = dialogue_frac;
  syndata::GenParams gen;
  gen.frames_per_phoneme = cfg.data.frames_per_phoneme;
  gen.noise_scale = cfg.data.noise_scale;
  const auto schema = syndata::AttributeSchema::standard(cfg.codec.latent_dim);
  const auto records = syndata::generate_corpus(out_dir, spec, schema, gen, cfg.codec);
  std::cout << "wrote " << records.size() << " records under " << out_dir << "\n";
  return 0;
}

int cmd_train(const CommonOpts& common, const std::string& mode, const std::string& manifest,
              const std::string& run_dir, int epochs_override) {
  config::RunConfig cfg = load_or_default(common);
  if (epochs_override > 0) cfg.schedule.total_epochs = epochs_override;
  if (!mode.empty()) cfg.train.mode = mode;
  curriculum::TrainRunConfig run;
  run.cfg = cfg;
  run.mode = curriculum::mode_from_name(cfg.train.mode);
  run.manifest = require_manifest(manifest, cfg);
  run.run_dir = run_dir.empty() ? fs::path(cfg.data.run_dir) : fs::path(run_dir);
  const auto art = curriculum::run_training(run);
  std::cout << "trained " << art.losses.size() << " steps; final checkpoint "
            << art.final_checkpoint.string() << "\n";
  return 0;
}

int cmd_ablate(const CommonOpts& common, const std::string& modes_csv, const std::string& manifest,
               const std::string& run_dir) {
  config::RunConfig cfg = load_or_default(common);
  std::vector<curriculum::MixMode> modes;
  std::string item;
  std::istringstream ss(modes_csv);
  while (std::getline(ss, item, ','))
    if (!item.empty()) modes.push_back(curriculum::mode_from_name(item));
  curriculum::TrainRunConfig base;
  base.cfg = cfg;
  base.manifest = require_manifest(manifest, cfg);
  base.run_dir = run_dir.empty() ? fs::path(cfg.data.run_dir) : fs::path(run_dir);
  const auto result = curriculum::run_ablation(base, modes);
  std::cout << result.report_text;
  std::cout << "report written to " << result.report_path.string() << "\n";
  return 0;
}

int cmd_sample(const CommonOpts& common, const std::string& checkpoint_path,
               const std::string& modality_flag, const std::string& instruction,
               const std::string& content, double duration, int steps, std::optional<uint64_t> seed,
               const std::string& lambda_path, const std::string& out_path,
               const std::string& wav_path) {
  config::RunConfig cfg = load_or_default(common);
  if (!fs::exists(checkpoint_path))
    throw config::ConfigError("checkpoint not found: " + checkpoint_path);

  mmdit::ModelParameters params;
  if (common.config_path.empty()) {
    // Self-describing load: adopt the architecture embedded in the checkpoint.
    auto [p, meta] = checkpoint::load(checkpoint_path);
    params = std::move(p);
    const config::RunConfig arch = config::parse_arch_text(meta.arch_text);
    cfg.codec = arch.codec;
    cfg.model = arch.model;
  } else {
    auto [p, meta] = checkpoint::load_checked(checkpoint_path, cfg);
    params = std::move(p);
  }
  config::validate_wiring(cfg);

  textcond::Modality modality;
  if (!modality_flag.empty())
    modality = textcond::modality_from_name(modality_flag);
  else
    modality = duration > 0.0 ? textcond::Modality::sfx : textcond::Modality::speech;

  const auto vocab = textcond::Vocabulary::standard();
  const auto schema = syndata::AttributeSchema::standard(cfg.codec.latent_dim);
  const auto ivocab = syndata::instruction_vocab(schema);

  textcond::ContentTokens tokens;
  long n_frames = 0;
  if (modality == textcond::Modality::sfx) {
    if (!(duration > 0.0))
      throw config::ConfigError("sfx sampling needs --duration (seconds)");
    fs::path stats = lambda_path;
    if (stats.empty()) stats = fs::path(checkpoint_path).parent_path().parent_path() / "lambda.stats";
    if (!fs::exists(stats))
      throw config::ConfigError("lambda stats not found at " + stats.string() +
                                " (pass --lambda)");
    const double lambda = textcond::LambdaStats::load(stats).lambda;
    tokens = textcond::build_sfx_content(duration, lambda, vocab);
    n_frames = flow::sfx_frames_for_tokens(tokens.length(), lambda, cfg.codec);
  } else {
    if (content.empty())
      throw config::ConfigError("speech/music sampling needs --content text");
    tokens = textcond::g2p(content, vocab,
                           modality == textcond::Modality::music ? textcond::Modality::music
                                                                 : textcond::Modality::speech);
    long phonemes = 0;
    for (int id : tokens.ids)
      if (vocab.is_phoneme(id)) ++phonemes;
    n_frames = phonemes * cfg.data.frames_per_phoneme;
  }
  if (n_frames < 1) throw config::ConfigError("request resolves to an empty latent sequence");

  const Tensor instr_emb = textcond::embed_instruction(instruction, ivocab, params.instr_embed);
  const auto cond = textcond::build_condition(instr_emb, tokens, params.content_embed);

  flow::SamplerConfig scfg;
  scfg.steps = steps > 0 ? steps : cfg.sampler.steps;
  scfg.seed = seed ? *seed : cfg.sampler.seed;
  const auto latent = flow::sample(params, cond, static_cast<int>(n_frames), scfg, cfg.codec);
  codec::write_latents(out_path, latent);
  std::cout << "wrote " << latent.frames << " frames x " << latent.channels << " channels to "
            << out_path << " (L_I=" << cond.instruction_length << " L_C=" << cond.content_length
            << ")\n";
  if (!wav_path.empty()) {
    const auto wave = codec::decode(latent, cfg.codec);
    codec::write_waveform(wav_path, wave, static_cast<uint32_t>(cfg.codec.sample_rate));
    std::cout << "decoded waveform to " << wav_path << "\n";
  }
  return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& checkpoint_path,
             const std::string& manifest, const std::string& report_path,
             const std::string& lambda_path, int n_override, std::optional<uint64_t> seed) {
  config::RunConfig cfg = load_or_default(common);
  if (!fs::exists(checkpoint_path))
    throw config::ConfigError("checkpoint not found: " + checkpoint_path);
  const fs::path manifest_path = require_manifest(manifest, cfg);

  mmdit::ModelParameters params;
  if (common.config_path.empty()) {
    auto [p, meta] = checkpoint::load(checkpoint_path);
    params = std::move(p);
    const config::RunConfig arch = config::parse_arch_text(meta.arch_text);
    cfg.codec = arch.codec;
    cfg.model = arch.model;
  } else {
    auto [p, meta] = checkpoint::load_checked(checkpoint_path, cfg);
    params = std::move(p);
  }
  const auto records = syndata::read_manifest(manifest_path);
  const auto schema = syndata::AttributeSchema::standard(cfg.codec.latent_dim);
  double lambda;
  if (!lambda_path.empty())
    lambda = textcond::LambdaStats::load(lambda_path).lambda;
  else
    lambda = syndata::corpus_lambda(records).lambda;

  evalsuite::EvalOptions opts;
  opts.n_per_modality = n_override > 0 ? n_override : cfg.eval.n_per_modality;
  opts.sampler_steps = cfg.sampler.steps;
  opts.seed = seed ? *seed : cfg.eval.seed;
  opts.frames_per_phoneme = cfg.data.frames_per_phoneme;
  const auto report = evalsuite::evaluate_model(params, records, manifest_path.parent_path(),
                                                schema, cfg.codec, lambda, opts,
                                                fs::path(checkpoint_path).stem().string());
  std::ofstream os(report_path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write report: " + report_path);
  os << report.to_text();
  std::cout << report.to_text();
  return 0;
}

int cmd_inspect_tokens(const CommonOpts& common, const std::string& manifest,
                       const std::string& id, const std::string& lambda_path) {
  config::RunConfig cfg = load_or_default(common);
  const fs::path manifest_path = require_manifest(manifest, cfg);
  const auto records = syndata::read_manifest(manifest_path);
  const syndata::SampleRecord* rec = nullptr;
  for (const auto& r : records)
    if (r.id == id) rec = &r;
  if (!rec) throw config::ConfigError("no record with id '" + id + "' in " + manifest_path.string());

  const auto vocab = textcond::Vocabulary::standard();
  const auto schema = syndata::AttributeSchema::standard(cfg.codec.latent_dim);
  const auto ivocab = syndata::instruction_vocab(schema);
  textcond::ContentTokens tokens;
  if (rec->modality == textcond::Modality::sfx) {
    const double lambda = lambda_path.empty()
                              ? syndata::corpus_lambda(records).lambda
                              : textcond::LambdaStats::load(lambda_path).lambda;
    tokens = textcond::build_sfx_content(rec->duration, lambda, vocab);
  } else {
    tokens = syndata::record_content(*rec, vocab);
  }
  const auto instr_ids = ivocab.encode(rec->instruction);

  std::cout << "id=" << rec->id << " modality=" << textcond::modality_name(rec->modality) << "\n";
  std::cout << "instruction=\"" << rec->instruction << "\"\n";
  std::cout << "instr_ids=";
  for (size_t i = 0; i < instr_ids.size(); ++i)
    std::cout << (i ? "," : "") << instr_ids[i];
  std::cout << "\ncontent_ids=";
  for (size_t i = 0; i < tokens.ids.size(); ++i)
    std::cout << (i ? "," : "") << tokens.ids[i];
  std::cout << "\ncontent_symbols=";
  for (size_t i = 0; i < tokens.ids.size(); ++i)
    std::cout << (i ? " " : "") << vocab.symbol(tokens.ids[i]);
  std::cout << "\nL_I=" << instr_ids.size() << " L_C=" << tokens.ids.size() << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"text-conditioned audio latent generation toolkit"};
  app.require_subcommand(1);
  CommonOpts common;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  std::string gen_out = "data";
  int n_speech = 0, n_music = 0, n_sfx = 0;
  uint64_t gen_seed = 1;
  double dialogue_frac = 0.005;
  gen->add_option("--config", common.config_path, "config file");
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--n-speech", n_speech, "speech sample count");
  gen->add_option("--n-music", n_music, "music sample count");
  gen->add_option("--n-sfx", n_sfx, "sfx sample count");
  gen->add_option("--seed", gen_seed, "corpus seed");
  gen->add_option("--dialogue-frac", dialogue_frac, "fraction of speech rows built as dialogue");

  auto* train = app.add_subcommand("train", "train a model");
  std::string train_mode, train_manifest, train_run_dir;
  int train_epochs = 0;
  train->add_option("--config", common.config_path, "config file");
  train->add_option("--mode", train_mode, "data mix mode");
  train->add_option("--manifest", train_manifest, "manifest path (overrides config)");
  train->add_option("--run-dir", train_run_dir, "run directory (overrides config)");
  train->add_option("--epochs", train_epochs, "total epochs (overrides config)");

  auto* ablate = app.add_subcommand("ablate", "retrain under restricted data mixes and compare");
  std::string ablate_modes = "curriculum,tts-only", ablate_manifest, ablate_run_dir;
  ablate->add_option("--config", common.config_path, "config file");
  ablate->add_option("--modes", ablate_modes, "comma-separated mix modes");
  ablate->add_option("--manifest", ablate_manifest, "manifest path (overrides config)");
  ablate->add_option("--run-dir", ablate_run_dir, "run directory (overrides config)");

  auto* sample = app.add_subcommand("sample", "generate a latent from a checkpoint");
  std::string ckpt, modality_flag, instruction, content, lambda_path;
  std::string out_path = "sample.snlt", wav_path;
  double duration = 0.0;
  int steps = 0;
  std::optional<uint64_t> sample_seed;
  uint64_t sample_seed_raw = 0;
  sample->add_option("--config", common.config_path, "config file");
  sample->add_option("--checkpoint", ckpt, "checkpoint path")->required();
  sample->add_option("--modality", modality_flag, "speech, music or sfx");
  sample->add_option("--instruction", instruction, "instruction text");
  sample->add_option("--content", content, "content text (speech/music)");
  sample->add_option("--duration", duration, "target duration in seconds (sfx)");
  sample->add_option("--steps", steps, "Euler steps");
  auto* seed_opt = sample->add_option("--seed", sample_seed_raw, "sampler seed");
  sample->add_option("--lambda", lambda_path, "lambda stats file (sfx)");
  sample->add_option("--out", out_path, "output latent file");
  sample->add_option("--wav", wav_path, "also decode to this waveform file");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint against a manifest");
  std::string eval_ckpt, eval_manifest, eval_report = "eval_report.txt", eval_lambda;
  int eval_n = 0;
  std::optional<uint64_t> eval_seed;
  uint64_t eval_seed_raw = 0;
  eval->add_option("--config", common.config_path, "config file");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--manifest", eval_manifest, "manifest path");
  eval->add_option("--report", eval_report, "report output path");
  eval->add_option("--lambda", eval_lambda, "lambda stats file");
  eval->add_option("--n", eval_n, "samples per modality");
  auto* eval_seed_opt = eval->add_option("--seed", eval_seed_raw, "evaluation seed");

  auto* inspect = app.add_subcommand("inspect-tokens", "print the token breakdown of a sample");
  std::string ins_manifest, ins_id, ins_lambda;
  inspect->add_option("--config", common.config_path, "config file");
  inspect->add_option("--manifest", ins_manifest, "manifest path");
  inspect->add_option("--id", ins_id, "record id")->required();
  inspect->add_option("--lambda", ins_lambda, "lambda stats file (sfx rows)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*seed_opt) sample_seed = sample_seed_raw;
    if (*eval_seed_opt) eval_seed = eval_seed_raw;
    if (gen->parsed())
      return cmd_gen_data(common, gen_out, n_speech, n_music, n_sfx, gen_seed, dialogue_frac);
    if (train->parsed())
      return cmd_train(common, train_mode, train_manifest, train_run_dir, train_epochs);
    if (ablate->parsed()) return cmd_ablate(common, ablate_modes, ablate_manifest, ablate_run_dir);
    if (sample->parsed())
      return cmd_sample(common, ckpt, modality_flag, instruction, content, duration, steps,
                        sample_seed, lambda_path, out_path, wav_path);
    if (eval->parsed())
      return cmd_eval(common, eval_ckpt, eval_manifest, eval_report, eval_lambda, eval_n,
                      eval_seed);
    if (inspect->parsed()) return cmd_inspect_tokens(common, ins_manifest, ins_id, ins_lambda);
  } catch (const config::ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace sonogen::cli
