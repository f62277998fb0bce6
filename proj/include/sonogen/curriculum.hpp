#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "sonogen/config.hpp"
#include "sonogen/evalsuite.hpp"
#include "sonogen/flowmatch.hpp"
#include "sonogen/syndata.hpp"

namespace sonogen::curriculum {

enum class MixMode { curriculum, tts_only, ttm_only, tta_only, joint_flat };

MixMode mode_from_name(const std::string& name);
std::string mode_name(MixMode mode);

struct CurriculumSchedule {
  int e1 = 1;
  int e2 = 2;
};

enum class DatasetId { speech, music, effects };

/// Epoch-indexed dataset union: speech through epoch e1, speech+music through
/// e1+e2, all three afterwards. Defined for every epoch >= 1.
std::set<DatasetId> select_datasets(int epoch, const CurriculumSchedule& schedule);

/// Union for a fixed (non-curriculum) mix mode.
std::set<DatasetId> datasets_for_mode(MixMode mode);

/// Curriculum stage label for logging: 1..3 under curriculum, 0 for fixed
/// mixes.
int stage_label(int epoch, const CurriculumSchedule& schedule);

std::string union_label(const std::set<DatasetId>& datasets);

struct LoadedSample {
  syndata::SampleRecord rec;
  Tensor latent;
  mmdit::CondSpec cond;
};

struct LoadedCorpus {
  std::vector<LoadedSample> speech, music, effects;
  textcond::LambdaStats lambda;

  const std::vector<LoadedSample>& dataset(DatasetId id) const;
};

/// Reads the manifest and latent files, computes the speech-split lambda and
/// rebuilds sfx content token sequences from it.
LoadedCorpus load_corpus(const std::filesystem::path& manifest_path,
                         const codec::CodecConfig& codec_cfg,
                         const syndata::AttributeSchema& schema);

/// Batches drawn uniformly over the pooled union, padded to the widest sample
/// with loss masking over padded frames.
class BatchStream {
 public:
  BatchStream(const LoadedCorpus& corpus, const std::set<DatasetId>& datasets, int batch_size,
              uint64_t seed);
  flow::FlowBatch next();
  /// Modality letters (s/m/e) of the most recent batch, in draw order.
  const std::string& last_modalities() const { return last_modalities_; }

 private:
  std::vector<const LoadedSample*> pool_;
  int batch_size_;
  Rng rng_;
  std::string last_modalities_;
};

struct TrainRunConfig {
  config::RunConfig cfg;
  MixMode mode = MixMode::curriculum;
  std::filesystem::path manifest;
  std::filesystem::path run_dir;
};

struct RunArtifacts {
  std::filesystem::path run_dir;
  std::filesystem::path final_checkpoint;
  std::filesystem::path log_path;
  std::filesystem::path lambda_path;
  std::vector<double> losses;  // one per step
  std::vector<int> stages;     // stage label per step
};

/// Full training loop: per-epoch dataset selection, Adam steps over the CFM
/// loss, per-step log lines `step= epoch= stage= mix= mods= loss=`, and
/// checkpoints at the configured cadence (the last epoch is always written).
RunArtifacts run_training(const TrainRunConfig& run);

struct AblationEntry {
  MixMode mode;
  RunArtifacts artifacts;
  evalsuite::EvalReport report;
};

struct AblationResult {
  std::vector<AblationEntry> entries;
  std::filesystem::path report_path;
  std::string report_text;
};

/// Retrains the identical architecture and seed under each mix mode, then
/// evaluates every final checkpoint on the same manifest and joins the
/// per-mode metrics into one table.
AblationResult run_ablation(const TrainRunConfig& base, const std::vector<MixMode>& modes);

}  // namespace sonogen::curriculum
