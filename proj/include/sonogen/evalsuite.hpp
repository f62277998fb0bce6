#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sonogen/flowmatch.hpp"
#include "sonogen/mmdit.hpp"
#include "sonogen/syndata.hpp"
#include "sonogen/tensor.hpp"

namespace sonogen::evalsuite {

using syndata::AttrMap;
using textcond::Modality;

struct MetricValue {
  double value = 0.0;
  long n = 0;
  double half_width = 0.0;  // 95% binomial half-width for accuracies, else 0
};

struct EvalReport {
  std::string run_id;
  std::vector<std::pair<std::string, MetricValue>> metrics;
  std::vector<std::string> notes;

  void add(const std::string& name, double value, long n = 0, double half_width = 0.0);
  bool has(const std::string& name) const;
  double get(const std::string& name) const;
  /// Human-readable table followed by a machine-readable key=value block.
  std::string to_text() const;
};

/// Nearest-signature attribute decoder. Pools the latent over frames and,
/// per attribute, picks the value whose signature is closest on the
/// attribute's support channels; ties break to the lower value index.
AttrMap oracle_classify(const Tensor& latent, Modality modality,
                        const syndata::AttributeSchema& schema);

struct AttrAccuracy {
  std::string attr;
  double accuracy = 0.0;
  long n = 0;
};

/// Exact-match fraction per attribute over (requested attrs, generated
/// latent) pairs.
std::vector<AttrAccuracy> control_accuracy(const std::vector<std::pair<AttrMap, Tensor>>& samples,
                                           Modality modality,
                                           const syndata::AttributeSchema& schema);

/// Mean and max |generated frames - frame_count(T)| over requests.
std::pair<double, double> duration_error(const std::vector<std::pair<double, long>>& samples,
                                         const codec::CodecConfig& codec_cfg);

/// Frechet distance between Gaussian fits of pooled per-sample features:
/// |mu_a - mu_b|^2 + tr(Sa + Sb - 2 (Sa Sb)^(1/2)). Negative eigenvalues of
/// the product are clamped to zero; *repaired reports whether that happened.
double latent_frechet(const std::vector<Tensor>& set_a, const std::vector<Tensor>& set_b,
                      bool* repaired = nullptr);

/// Mean over waveforms of the decode(encode(.)) mean squared error.
double recon_error(const std::vector<std::vector<double>>& waveforms,
                   const codec::CodecConfig& codec_cfg);

struct EvalOptions {
  int n_per_modality = 30;
  int sampler_steps = 32;
  uint64_t seed = 0;
  int frames_per_phoneme = 4;
};

/// Generation harness: re-generates latents for manifest records under the
/// model, then scores control accuracy, sfx duration error, per-modality
/// Frechet distance against the stored ground truth, and a codec
/// reconstruction probe.
EvalReport evaluate_model(const mmdit::ModelParameters& params,
                          const std::vector<syndata::SampleRecord>& records,
                          const std::filesystem::path& manifest_dir,
                          const syndata::AttributeSchema& schema,
                          const codec::CodecConfig& codec_cfg, double lambda,
                          const EvalOptions& opts, const std::string& run_id);

}  // namespace sonogen::evalsuite
