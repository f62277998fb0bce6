#include "sonogen/flowmatch.hpp"

#include <cmath>
#include <stdexcept>

#include "sonogen/graph.hpp"

namespace sonogen::flow {

using graph::Node;
using graph::Tape;

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
  if (!x0.same_shape(x1)) throw std::invalid_argument("interpolate: shape mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolate: t must lie in [0,1]");
  Tensor out(x0.rows(), x0.cols());
  const double s = 1.0 - t;
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] = t * x1.data()[i] + s * x0.data()[i];
  return out;
}

namespace {

void check_batch(const FlowBatch& batch, const std::vector<double>& ts,
                 const std::vector<Tensor>& x0s) {
  if (batch.samples.empty()) throw std::invalid_argument("cfm loss: empty batch");
  if (ts.size() != batch.samples.size() || x0s.size() != batch.samples.size())
    throw std::invalid_argument("cfm loss: draw count does not match batch size");
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    if (s.valid_frames < 1 || s.valid_frames > s.x1.rows())
      throw std::invalid_argument("cfm loss: bad valid_frames at sample " + std::to_string(i));
    if (!s.x1.same_shape(x0s[i]))
      throw std::invalid_argument("cfm loss: x0 shape mismatch at sample " + std::to_string(i));
    if (!(ts[i] >= 0.0 && ts[i] <= 1.0))
      throw std::invalid_argument("cfm loss: t outside [0,1] at sample " + std::to_string(i));
  }
}

Tensor displacement(const Tensor& x0, const Tensor& x1) {
  Tensor d(x1.rows(), x1.cols());
  for (size_t i = 0; i < d.size(); ++i) d.data()[i] = x1.data()[i] - x0.data()[i];
  return d;
}

LossResult reduce_losses(Tape& tape, std::vector<Node*>& loss_nodes, Node** total_out) {
  LossResult result;
  Node* total = nullptr;
  for (size_t i = 0; i < loss_nodes.size(); ++i) {
    const double li = loss_nodes[i]->value.at(0, 0);
    if (!std::isfinite(li))
      throw std::runtime_error("cfm loss: non-finite loss at sample " + std::to_string(i));
    result.per_sample.push_back(li);
    total = total ? tape.add(total, loss_nodes[i]) : loss_nodes[i];
  }
  total = tape.scale(total, 1.0 / static_cast<double>(loss_nodes.size()));
  result.loss = total->value.at(0, 0);
  if (total_out) *total_out = total;
  return result;
}

}  // namespace

LossResult cfm_loss_at(const mmdit::ModelParameters& params, const FlowBatch& batch,
                       const std::vector<double>& ts, const std::vector<Tensor>& x0s,
                       std::vector<Tensor>* grads) {
  check_batch(batch, ts, x0s);
  Tape tape;
  mmdit::BoundParams bp = mmdit::bind_params(tape, params, grads != nullptr);
  std::vector<Node*> loss_nodes;
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    Node* cond = mmdit::condition_graph(tape, bp, s.cond);
    Node* x_t = tape.leaf(interpolate(x0s[i], s.x1, ts[i]));
    Node* v = mmdit::velocity_graph(tape, bp, params.config, cond, x_t, ts[i], s.valid_frames);
    loss_nodes.push_back(tape.mse_masked(v, displacement(x0s[i], s.x1), s.valid_frames));
  }
  Node* total = nullptr;
  LossResult result = reduce_losses(tape, loss_nodes, &total);
  if (grads) {
    tape.backward(total);
    *grads = mmdit::collect_gradients(bp, params);
  }
  return result;
}

LossResult cfm_loss(const mmdit::ModelParameters& params, const FlowBatch& batch, Rng& rng) {
  std::vector<double> ts;
  std::vector<Tensor> x0s;
  for (const auto& s : batch.samples) {
    ts.push_back(rng.uniform());
    x0s.push_back(rng.gaussian_tensor(s.x1.rows(), s.x1.cols()));
  }
  return cfm_loss_at(params, batch, ts, x0s, nullptr);
}

LossResult cfm_loss_with(const VelocityFn& velocity, const FlowBatch& batch,
                         const std::vector<double>& ts, const std::vector<Tensor>& x0s) {
  check_batch(batch, ts, x0s);
  Tape tape;
  std::vector<Node*> loss_nodes;
  for (size_t i = 0; i < batch.samples.size(); ++i) {
    const auto& s = batch.samples[i];
    const Tensor x_t = interpolate(x0s[i], s.x1, ts[i]);
    Node* v = tape.leaf(velocity(x_t, ts[i], static_cast<int>(i)));
    loss_nodes.push_back(tape.mse_masked(v, displacement(x0s[i], s.x1), s.valid_frames));
  }
  return reduce_losses(tape, loss_nodes, nullptr);
}

void adam_update_tensor(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, long step_after,
                        double lr, double beta1, double beta2, double eps) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_after));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_after));
  for (size_t i = 0; i < param.size(); ++i) {
    const double g = grad.data()[i];
    m.data()[i] = beta1 * m.data()[i] + (1.0 - beta1) * g;
    v.data()[i] = beta2 * v.data()[i] + (1.0 - beta2) * g * g;
    const double mhat = m.data()[i] / bc1;
    const double vhat = v.data()[i] / bc2;
    param.data()[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

double train_step(mmdit::ModelParameters& params, OptimizerState& opt, const FlowBatch& batch,
                  Rng& rng) {
  std::vector<double> ts;
  std::vector<Tensor> x0s;
  for (const auto& s : batch.samples) {
    ts.push_back(rng.uniform());
    x0s.push_back(rng.gaussian_tensor(s.x1.rows(), s.x1.cols()));
  }
  std::vector<Tensor> grads;
  const LossResult result = cfm_loss_at(params, batch, ts, x0s, &grads);

  auto refs = params.tensor_refs();
  if (opt.m.empty()) {
    for (const auto& [name, t] : refs) {
      opt.m.emplace_back(t->rows(), t->cols());
      opt.v.emplace_back(t->rows(), t->cols());
    }
  }
  if (opt.m.size() != refs.size())
    throw std::invalid_argument("train_step: optimizer state does not match parameter set");
  for (size_t i = 0; i < refs.size(); ++i)
    if (!grads[i].all_finite())
      throw std::runtime_error("train_step: non-finite gradient for tensor '" + refs[i].first +
                               "'");
  ++opt.step;
  for (size_t i = 0; i < refs.size(); ++i) {
    if (params.tensor_frozen(refs[i].first)) continue;
    adam_update_tensor(*refs[i].second, grads[i], opt.m[i], opt.v[i], opt.step, opt.lr, opt.beta1,
                       opt.beta2, opt.eps);
  }
  return result.loss;
}

Tensor integrate(const std::function<Tensor(const Tensor&, double)>& velocity, int frames,
                 int channels, const SamplerConfig& cfg) {
  if (frames < 1 || channels < 1) throw std::invalid_argument("integrate: empty state shape");
  if (cfg.steps < 1) throw std::invalid_argument("integrate: steps must be >= 1");
  if (cfg.guidance) throw std::invalid_argument("integrate: guidance is reserved and disabled");
  Rng rng(derive_seed(cfg.seed, "sampler.init"));
  Tensor z = rng.gaussian_tensor(frames, channels);
  const double h = 1.0 / static_cast<double>(cfg.steps);
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = static_cast<double>(k) / cfg.steps;
    const Tensor v = velocity(z, t);
    if (!v.same_shape(z)) throw std::runtime_error("integrate: velocity shape mismatch");
    for (size_t i = 0; i < z.size(); ++i) z.data()[i] += h * v.data()[i];
    if (!z.all_finite())
      throw std::runtime_error("integrate: non-finite state at step " + std::to_string(k));
  }
  return z;
}

codec::LatentSequence sample(const mmdit::ModelParameters& params,
                             const textcond::ConditionSequence& c_text, int n_frames,
                             const SamplerConfig& cfg, const codec::CodecConfig& codec_cfg) {
  codec::LatentSequence out;
  out.frames = n_frames;
  out.channels = params.config.latent_channels;
  out.frame_rate = codec_cfg.frame_rate();
  out.data = integrate(
      [&](const Tensor& z, double t) {
        codec::LatentSequence state;
        state.frames = z.rows();
        state.channels = z.cols();
        state.frame_rate = out.frame_rate;
        state.data = z;
        return mmdit::forward(c_text, state, t, params);
      },
      n_frames, out.channels, cfg);
  return out;
}

long sfx_frames_for_tokens(long n_tokens, double lambda, const codec::CodecConfig& cfg) {
  cfg.validate();
  if (n_tokens < 1) throw std::invalid_argument("sfx_frames_for_tokens: need at least one token");
  if (!(lambda > 0.0)) throw std::invalid_argument("sfx_frames_for_tokens: lambda must be positive");
  return static_cast<long>(
      std::floor(static_cast<double>(n_tokens) * cfg.sample_rate / (lambda * cfg.window)));
}

}  // namespace sonogen::flow
