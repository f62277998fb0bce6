#include "sonogen/curriculum.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sonogen/checkpoint.hpp"
#include "sonogen/rng.hpp"

namespace sonogen::curriculum {

MixMode mode_from_name(const std::string& name) {
  if (name == "curriculum") return MixMode::curriculum;
  if (name == "tts-only") return MixMode::tts_only;
  if (name == "ttm-only") return MixMode::ttm_only;
  if (name == "tta-only") return MixMode::tta_only;
  if (name == "joint-flat") return MixMode::joint_flat;
  throw config::ConfigError("unknown mix mode '" + name +
                            "' (expected curriculum, tts-only, ttm-only, tta-only or joint-flat)");
}

std::string mode_name(MixMode mode) {
  switch (mode) {
    case MixMode::curriculum: return "curriculum";
    case MixMode::tts_only: return "tts-only";
    case MixMode::ttm_only: return "ttm-only";
    case MixMode::tta_only: return "tta-only";
    case MixMode::joint_flat: return "joint-flat";
  }
  throw std::logic_error("bad mode");
}

std::set<DatasetId> select_datasets(int epoch, const CurriculumSchedule& schedule) {
  if (epoch < 1) throw std::invalid_argument("select_datasets: epoch must be >= 1");
  std::set<DatasetId> out = {DatasetId::speech};
  if (epoch > schedule.e1) out.insert(DatasetId::music);
  if (epoch > schedule.e1 + schedule.e2) out.insert(DatasetId::effects);
  return out;
}

std::set<DatasetId> datasets_for_mode(MixMode mode) {
  switch (mode) {
    case MixMode::tts_only: return {DatasetId::speech};
    case MixMode::ttm_only: return {DatasetId::music};
    case MixMode::tta_only: return {DatasetId::effects};
    case MixMode::joint_flat:
      return {DatasetId::speech, DatasetId::music, DatasetId::effects};
    case MixMode::curriculum:
      throw std::logic_error("curriculum mode selects datasets per epoch");
  }
  throw std::logic_error("bad mode");
}

int stage_label(int epoch, const CurriculumSchedule& schedule) {
  if (epoch <= schedule.e1) return 1;
  if (epoch <= schedule.e1 + schedule.e2) return 2;
  return 3;
}

std::string union_label(const std::set<DatasetId>& datasets) {
  std::string out;
  for (DatasetId id : {DatasetId::speech, DatasetId::music, DatasetId::effects}) {
    if (!datasets.count(id)) continue;
    if (!out.empty()) out += '+';
    out += id == DatasetId::speech ? "S" : id == DatasetId::music ? "M" : "E";
  }
  return out;
}

const std::vector<LoadedSample>& LoadedCorpus::dataset(DatasetId id) const {
  switch (id) {
    case DatasetId::speech: return speech;
    case DatasetId::music: return music;
    case DatasetId::effects: return effects;
  }
  throw std::logic_error("bad dataset id");
}

LoadedCorpus load_corpus(const std::filesystem::path& manifest_path,
                         const codec::CodecConfig& codec_cfg,
                         const syndata::AttributeSchema& schema) {
  const auto records = syndata::read_manifest(manifest_path);
  if (records.empty()) throw std::runtime_error("empty manifest: " + manifest_path.string());
  const auto dir = manifest_path.parent_path();
  const auto vocab = textcond::Vocabulary::standard();
  const auto ivocab = syndata::instruction_vocab(schema);

  LoadedCorpus corpus;
  corpus.lambda = syndata::corpus_lambda(records);
  for (const auto& rec : records) {
    LoadedSample s;
    s.rec = rec;
    s.latent = codec::read_latents(dir / rec.latent_path, codec_cfg).data;
    s.cond.instr_ids = ivocab.encode(rec.instruction);
    if (rec.modality == textcond::Modality::sfx)
      s.cond.content = textcond::build_sfx_content(rec.duration, corpus.lambda.lambda, vocab);
    else
      s.cond.content = syndata::record_content(rec, vocab);
    switch (rec.modality) {
      case textcond::Modality::speech: corpus.speech.push_back(std::move(s)); break;
      case textcond::Modality::music: corpus.music.push_back(std::move(s)); break;
      case textcond::Modality::sfx: corpus.effects.push_back(std::move(s)); break;
    }
  }
  return corpus;
}

BatchStream::BatchStream(const LoadedCorpus& corpus, const std::set<DatasetId>& datasets,
                         int batch_size, uint64_t seed)
    : batch_size_(batch_size), rng_(seed) {
  for (DatasetId id : {DatasetId::speech, DatasetId::music, DatasetId::effects}) {
    if (!datasets.count(id)) continue;
    for (const auto& s : corpus.dataset(id)) pool_.push_back(&s);
  }
  if (pool_.empty()) throw std::runtime_error("batch stream over an empty dataset union");
  if (batch_size_ < 1) throw std::invalid_argument("batch size must be >= 1");
}

flow::FlowBatch BatchStream::next() {
  flow::FlowBatch batch;
  last_modalities_.clear();
  std::vector<const LoadedSample*> picks;
  int max_frames = 0;
  for (int i = 0; i < batch_size_; ++i) {
    const LoadedSample* s = pool_[rng_.uniform_index(pool_.size())];
    picks.push_back(s);
    max_frames = std::max(max_frames, s->latent.rows());
    if (!last_modalities_.empty()) last_modalities_ += ',';
    switch (s->rec.modality) {
      case textcond::Modality::speech: last_modalities_ += 's'; break;
      case textcond::Modality::music: last_modalities_ += 'm'; break;
      case textcond::Modality::sfx: last_modalities_ += 'e'; break;
    }
  }
  for (const LoadedSample* s : picks) {
    flow::TrainSample ts;
    ts.valid_frames = s->latent.rows();
    ts.cond = s->cond;
    ts.x1 = Tensor(max_frames, s->latent.cols());
    for (int f = 0; f < s->latent.rows(); ++f)
      for (int c = 0; c < s->latent.cols(); ++c) ts.x1.at(f, c) = s->latent.at(f, c);
    batch.samples.push_back(std::move(ts));
  }
  return batch;
}

RunArtifacts run_training(const TrainRunConfig& run) {
  namespace fs = std::filesystem;
  const config::RunConfig& cfg = run.cfg;
  config::validate_wiring(cfg);
  if (!fs::exists(run.manifest))
    throw config::ConfigError("manifest not found: " + run.manifest.string());

  const auto schema = syndata::AttributeSchema::standard(cfg.codec.latent_dim);
  LoadedCorpus corpus = load_corpus(run.manifest, cfg.codec, schema);

  fs::create_directories(run.run_dir / "checkpoints");
  RunArtifacts art;
  art.run_dir = run.run_dir;
  art.log_path = run.run_dir / "train.log";
  art.lambda_path = run.run_dir / "lambda.stats";

  {
    std::ofstream snap(run.run_dir / "config.snapshot", std::ios::trunc);
    snap << config::canonical_text(cfg);
  }
  corpus.lambda.save(art.lambda_path);
  textcond::Vocabulary::standard().save(run.run_dir / "vocab.txt");
  syndata::instruction_vocab(schema).save(run.run_dir / "instr_vocab.txt");

  mmdit::ModelParameters params = mmdit::init_params(cfg.model, cfg.train.seed);
  flow::OptimizerState opt;
  opt.lr = cfg.train.lr;
  Rng loss_rng(derive_seed(cfg.train.seed, "train.loss"));

  std::ofstream log(art.log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write training log: " + art.log_path.string());
  log << "# run seed=" << cfg.train.seed << " mode=" << mode_name(run.mode) << '\n';

  const CurriculumSchedule schedule{cfg.schedule.e1, cfg.schedule.e2};
  long step = 0;
  char buf[64];
  for (int epoch = 1; epoch <= cfg.schedule.total_epochs; ++epoch) {
    const std::set<DatasetId> datasets = run.mode == MixMode::curriculum
                                             ? select_datasets(epoch, schedule)
                                             : datasets_for_mode(run.mode);
    const int stage = run.mode == MixMode::curriculum ? stage_label(epoch, schedule) : 0;
    const std::string mix = union_label(datasets);
    BatchStream stream(corpus, datasets, cfg.train.batch_size,
                       derive_seed(cfg.train.seed, "train.batch", static_cast<uint64_t>(epoch)));
    for (int s = 0; s < cfg.train.steps_per_epoch; ++s) {
      const flow::FlowBatch batch = stream.next();
      double loss;
      try {
        loss = flow::train_step(params, opt, batch, loss_rng);
      } catch (const std::exception& ex) {
        // Checkpoints from completed epochs stay on disk.
        log.flush();
        throw std::runtime_error(std::string("training aborted at step ") +
                                 std::to_string(step + 1) + ": " + ex.what());
      }
      ++step;
      std::snprintf(buf, sizeof buf, "%.17g", loss);
      log << "step=" << step << " epoch=" << epoch << " stage=" << stage << " mix=" << mix
          << " mods=" << stream.last_modalities() << " loss=" << buf << '\n';
      art.losses.push_back(loss);
      art.stages.push_back(stage);
    }
    if (epoch % cfg.train.checkpoint_every == 0 || epoch == cfg.schedule.total_epochs) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.snck", epoch);
      art.final_checkpoint = run.run_dir / "checkpoints" / name;
      checkpoint::save(art.final_checkpoint, params, cfg, cfg.train.seed);
    }
  }
  log.flush();
  return art;
}

AblationResult run_ablation(const TrainRunConfig& base, const std::vector<MixMode>& modes) {
  if (modes.size() < 2)
    throw config::ConfigError("ablation needs at least two mix modes to compare");
  const auto schema = syndata::AttributeSchema::standard(base.cfg.codec.latent_dim);
  const auto records = syndata::read_manifest(base.manifest);

  AblationResult result;
  for (MixMode mode : modes) {
    TrainRunConfig run = base;
    run.mode = mode;
    run.run_dir = base.run_dir / mode_name(mode);
    AblationEntry entry;
    entry.mode = mode;
    entry.artifacts = run_training(run);
    auto [params, meta] = checkpoint::load(entry.artifacts.final_checkpoint);
    evalsuite::EvalOptions opts;
    opts.n_per_modality = base.cfg.eval.n_per_modality;
    opts.sampler_steps = base.cfg.sampler.steps;
    opts.seed = base.cfg.eval.seed;
    opts.frames_per_phoneme = base.cfg.data.frames_per_phoneme;
    const double lambda = textcond::LambdaStats::load(entry.artifacts.lambda_path).lambda;
    entry.report = evalsuite::evaluate_model(params, records, base.manifest.parent_path(), schema,
                                             base.cfg.codec, lambda, opts, mode_name(mode));
    result.entries.push_back(std::move(entry));
  }

  // Join the per-mode metric blocks into one table.
  std::vector<std::string> metric_names;
  for (const auto& e : result.entries)
    for (const auto& [name, v] : e.report.metrics)
      if (std::find(metric_names.begin(), metric_names.end(), name) == metric_names.end())
        metric_names.push_back(name);
  std::ostringstream os;
  os << "ablation report\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-34s", "metric");
  os << buf;
  for (const auto& e : result.entries) {
    std::snprintf(buf, sizeof buf, " %14s", mode_name(e.mode).c_str());
    os << buf;
  }
  os << '\n';
  for (const auto& name : metric_names) {
    std::snprintf(buf, sizeof buf, "%-34s", name.c_str());
    os << buf;
    for (const auto& e : result.entries) {
      if (e.report.has(name))
        std::snprintf(buf, sizeof buf, " %14.6f", e.report.get(name));
      else
        std::snprintf(buf, sizeof buf, " %14s", "-");
      os << buf;
    }
    os << '\n';
  }
  os << '\n';
  for (const auto& e : result.entries) {
    os << "## mode=" << mode_name(e.mode) << '\n' << e.report.to_text() << '\n';
  }
  result.report_text = os.str();
  result.report_path = base.run_dir / "ablation_report.txt";
  std::filesystem::create_directories(base.run_dir);
  std::ofstream rf(result.report_path, std::ios::trunc);
  rf << result.report_text;
  return result;
}

}  // namespace sonogen::curriculum
