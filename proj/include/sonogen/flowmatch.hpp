#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "sonogen/mmdit.hpp"
#include "sonogen/rng.hpp"
#include "sonogen/tensor.hpp"
#include "sonogen/textcond.hpp"
#include "sonogen/toycodec.hpp"

namespace sonogen::flow {

// Conditional flow matching: x0 is the Gaussian noise endpoint, x1 the clean
// latent, the regression target is x1 - x0 along x_t = t*x1 + (1-t)*x0, and
// sampling integrates t from 0 to 1.

/// One training sample. x1 may be padded beyond valid_frames; padded rows are
/// masked out of the loss and out of every attention softmax.
struct TrainSample {
  Tensor x1;
  int valid_frames = 0;
  mmdit::CondSpec cond;
};

struct FlowBatch {
  std::vector<TrainSample> samples;
};

struct OptimizerState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m, v;  // moment accumulators in tensor_refs() order
};

struct SamplerConfig {
  int steps = 32;
  uint64_t seed = 0;
  bool guidance = false;  // reserved; must stay disabled
};

/// Elementwise t*x1 + (1-t)*x0.
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t);

struct LossResult {
  double loss = 0.0;
  std::vector<double> per_sample;
};

/// Loss at caller-fixed draws (one t and one x0 per sample); fills grads
/// (tensor_refs() order) when non-null. The deterministic core behind
/// cfm_loss and the gradient checks.
LossResult cfm_loss_at(const mmdit::ModelParameters& params, const FlowBatch& batch,
                       const std::vector<double>& ts, const std::vector<Tensor>& x0s,
                       std::vector<Tensor>* grads);

/// Draws t ~ U(0,1) and x0 ~ N(0,I) per sample, then evaluates the loss.
LossResult cfm_loss(const mmdit::ModelParameters& params, const FlowBatch& batch, Rng& rng);

/// Loss with an externally supplied velocity (test double bypassing the
/// network). The callback sees (x_t, t, sample index).
using VelocityFn = std::function<Tensor(const Tensor& x_t, double t, int sample)>;
LossResult cfm_loss_with(const VelocityFn& velocity, const FlowBatch& batch,
                         const std::vector<double>& ts, const std::vector<Tensor>& x0s);

/// One Adam step on one tensor; step_after is the post-increment step count
/// used for bias correction.
void adam_update_tensor(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long step_after,
                        double lr, double beta1, double beta2, double eps);

/// Single Adam update of all non-frozen tensors on the CFM loss. Returns the
/// batch loss. Throws on non-finite gradients, naming the tensor.
double train_step(mmdit::ModelParameters& params, OptimizerState& opt, const FlowBatch& batch,
                  Rng& rng);

/// Euler integration of a velocity field from seeded Gaussian noise:
/// z_{k+1} = z_k + (1/steps) * v(z_k, k/steps). Throws on non-finite state,
/// naming the step.
Tensor integrate(const std::function<Tensor(const Tensor&, double)>& velocity, int frames,
                 int channels, const SamplerConfig& cfg);

/// Generates a latent sequence from the model under a fixed condition.
codec::LatentSequence sample(const mmdit::ModelParameters& params,
                             const textcond::ConditionSequence& c_text, int n_frames,
                             const SamplerConfig& cfg, const codec::CodecConfig& codec_cfg);

/// Latent length implied by an [SFX] token count: frame_count(n/lambda),
/// computed as floor(n * sample_rate / (lambda * window)) so dyadic lambdas
/// land exactly on frame boundaries.
long sfx_frames_for_tokens(long n_tokens, double lambda, const codec::CodecConfig& cfg);

}  // namespace sonogen::flow
