#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sonogen/graph.hpp"
#include "sonogen/tensor.hpp"
#include "sonogen/textcond.hpp"
#include "sonogen/toycodec.hpp"

namespace sonogen::mmdit {

/// Architecture hyperparameters. The text and audio streams share one width
/// (d_model = n_heads * head_dim); latent channels are mapped in and out of
/// that width by learned projections.
struct ModelConfig {
  int d_model = 32;
  int n_heads = 4;
  int head_dim = 8;
  int n_joint = 2;
  int n_single = 1;
  int ff_dim = 64;
  double rope_base = 10000.0;
  int latent_channels = 16;
  int content_vocab = 40;
  int instr_vocab = 21;
  bool freeze_instr = false;

  void validate() const;
};

struct AttentionParams {
  Tensor wq, wk, wv, wo;  // each d x d
};

struct FeedForwardParams {
  Tensor w1, b1, w2, b2;  // d x ff, 1 x ff, ff x d, 1 x d
};

struct ModulationParams {
  Tensor w, b;  // d x 2d, 1 x 2d; produces [scale | shift] from the timestep embedding
};

struct JointLayerParams {
  AttentionParams text_self, audio_self, text_joint, audio_joint;
  FeedForwardParams text_ff, audio_ff;
  Tensor text_norm_self, text_norm_joint, text_norm_ff;     // 1 x d gains
  Tensor audio_norm_self, audio_norm_joint, audio_norm_ff;  // 1 x d gains
  ModulationParams audio_mod_self, audio_mod_joint, audio_mod_ff;
};

struct SingleLayerParams {
  AttentionParams self;
  FeedForwardParams ff;
  Tensor norm_self, norm_ff;
  ModulationParams mod_self, mod_ff;
};

/// All learnable tensors. Enumeration order of tensor_refs() is the
/// serialization and optimizer-state contract.
struct ModelParameters {
  ModelConfig config;
  uint64_t init_seed = 0;

  Tensor content_embed;  // content_vocab x d
  Tensor instr_embed;    // instr_vocab x d
  Tensor in_proj_w, in_proj_b;
  Tensor tmlp_w1, tmlp_b1, tmlp_w2, tmlp_b2;
  std::vector<JointLayerParams> joint;
  std::vector<SingleLayerParams> single;
  Tensor final_norm;
  Tensor out_proj_w, out_proj_b;  // zero-initialized velocity head

  std::vector<std::pair<std::string, Tensor*>> tensor_refs();
  std::vector<std::pair<std::string, const Tensor*>> tensor_refs() const;
  long parameter_count() const;
  bool tensor_frozen(const std::string& name) const;
  bool all_finite() const;
};

/// Gaussian init scaled by 1/sqrt(fan_in); velocity head and modulation maps
/// start at zero, so a fresh model predicts the zero velocity field.
ModelParameters init_params(const ModelConfig& cfg, uint64_t seed);

/// Standard rotary transform applied to a sequence of head_dim vectors.
Tensor rope_apply(const Tensor& vectors, const std::vector<int>& positions, double base);

/// Sinusoidal features of t at geometrically spaced frequencies followed by
/// the model's two-layer map. t must lie in [0, 1].
Tensor timestep_features(double t, int dim);
Tensor timestep_embed(double t, const ModelParameters& params);

/// One joint layer applied outside any training graph (inference/testing).
/// audio_valid < 0 means all audio rows are valid keys.
std::pair<Tensor, Tensor> joint_layer(const Tensor& text_h, const Tensor& audio_h,
                                      const Tensor& t_emb, const JointLayerParams& lp,
                                      const ModelConfig& cfg, int audio_valid = -1);
Tensor single_layer(const Tensor& audio_h, const Tensor& t_emb, const SingleLayerParams& lp,
                    const ModelConfig& cfg, int audio_valid = -1);

using VelocityField = Tensor;

/// Full velocity evaluation: input projections, n_joint joint layers, text
/// stream dropped, n_single single layers, output projection.
VelocityField forward(const textcond::ConditionSequence& c_text, const codec::LatentSequence& x_t,
                      double t, const ModelParameters& params);

// Graph-building interface used by the training loss; the same builders back
// forward() above.

struct CondSpec {
  std::vector<int> instr_ids;
  textcond::ContentTokens content;
};

struct BoundAttention {
  graph::Node *wq, *wk, *wv, *wo;
};
struct BoundFF {
  graph::Node *w1, *b1, *w2, *b2;
};
struct BoundMod {
  graph::Node *w, *b;
};
struct BoundJoint {
  BoundAttention text_self, audio_self, text_joint, audio_joint;
  BoundFF text_ff, audio_ff;
  graph::Node *tn_self, *tn_joint, *tn_ff;
  graph::Node *an_self, *an_joint, *an_ff;
  BoundMod m_self, m_joint, m_ff;
};
struct BoundSingle {
  BoundAttention self;
  BoundFF ff;
  graph::Node *n_self, *n_ff;
  BoundMod m_self, m_ff;
};
struct BoundParams {
  graph::Node *content_embed, *instr_embed;
  graph::Node *in_w, *in_b;
  graph::Node *tm_w1, *tm_b1, *tm_w2, *tm_b2;
  std::vector<BoundJoint> joint;
  std::vector<BoundSingle> single;
  graph::Node *final_g, *out_w, *out_b;
};

/// Binds every parameter tensor as a tape leaf. With for_training, leaves
/// require gradients except tensors the config freezes.
BoundParams bind_params(graph::Tape& tape, const ModelParameters& params, bool for_training);

/// Condition sequence node from token ids (differentiable embedding lookups).
graph::Node* condition_graph(graph::Tape& tape, const BoundParams& bp, const CondSpec& cond);

/// Velocity field node for one sample; audio_valid masks padded frames out of
/// every attention softmax. Throws on a non-finite intermediate, naming the
/// layer.
graph::Node* velocity_graph(graph::Tape& tape, const BoundParams& bp, const ModelConfig& cfg,
                            graph::Node* cond, graph::Node* x_t, double t, int audio_valid);

/// Reads gradients accumulated on bound leaves, in tensor_refs() order.
std::vector<Tensor> collect_gradients(const BoundParams& bp, const ModelParameters& params);

}  // namespace sonogen::mmdit
