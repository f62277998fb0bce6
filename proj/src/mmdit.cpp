#include "sonogen/mmdit.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "sonogen/kernels.hpp"
#include "sonogen/rng.hpp"

namespace sonogen::mmdit {

using graph::Node;
using graph::Tape;

void ModelConfig::validate() const {
  if (n_heads < 1 || head_dim < 1 || n_joint < 1 || n_single < 1 || ff_dim < 1)
    throw std::invalid_argument("model config: all counts must be >= 1");
  if (head_dim % 2 != 0) throw std::invalid_argument("model config: head_dim must be even");
  if (d_model != n_heads * head_dim)
    throw std::invalid_argument("model config: d_model must equal n_heads * head_dim");
  if (latent_channels < 1) throw std::invalid_argument("model config: latent_channels must be >= 1");
  if (content_vocab < 1 || instr_vocab < 1)
    throw std::invalid_argument("model config: vocabulary sizes must be >= 1");
  if (!(rope_base > 1.0)) throw std::invalid_argument("model config: rope_base must exceed 1");
}

namespace {

template <class P, class T, class F>
void visit_tensors(P& p, F&& f) {
  f("embed.content", p.content_embed);
  f("embed.instr", p.instr_embed);
  f("in_proj.w", p.in_proj_w);
  f("in_proj.b", p.in_proj_b);
  f("tmlp.w1", p.tmlp_w1);
  f("tmlp.b1", p.tmlp_b1);
  f("tmlp.w2", p.tmlp_w2);
  f("tmlp.b2", p.tmlp_b2);
  for (size_t j = 0; j < p.joint.size(); ++j) {
    const std::string base = "joint." + std::to_string(j) + ".";
    auto& l = p.joint[j];
    auto attn = [&](const std::string& tag, T& a) {
      f(base + tag + ".wq", a.wq);
      f(base + tag + ".wk", a.wk);
      f(base + tag + ".wv", a.wv);
      f(base + tag + ".wo", a.wo);
    };
    attn("text.self", l.text_self);
    attn("text.joint", l.text_joint);
    f(base + "text.ff.w1", l.text_ff.w1);
    f(base + "text.ff.b1", l.text_ff.b1);
    f(base + "text.ff.w2", l.text_ff.w2);
    f(base + "text.ff.b2", l.text_ff.b2);
    f(base + "text.norm.self", l.text_norm_self);
    f(base + "text.norm.joint", l.text_norm_joint);
    f(base + "text.norm.ff", l.text_norm_ff);
    attn("audio.self", l.audio_self);
    attn("audio.joint", l.audio_joint);
    f(base + "audio.ff.w1", l.audio_ff.w1);
    f(base + "audio.ff.b1", l.audio_ff.b1);
    f(base + "audio.ff.w2", l.audio_ff.w2);
    f(base + "audio.ff.b2", l.audio_ff.b2);
    f(base + "audio.norm.self", l.audio_norm_self);
    f(base + "audio.norm.joint", l.audio_norm_joint);
    f(base + "audio.norm.ff", l.audio_norm_ff);
    f(base + "audio.mod.self.w", l.audio_mod_self.w);
    f(base + "audio.mod.self.b", l.audio_mod_self.b);
    f(base + "audio.mod.joint.w", l.audio_mod_joint.w);
    f(base + "audio.mod.joint.b", l.audio_mod_joint.b);
    f(base + "audio.mod.ff.w", l.audio_mod_ff.w);
    f(base + "audio.mod.ff.b", l.audio_mod_ff.b);
  }
  for (size_t s = 0; s < p.single.size(); ++s) {
    const std::string base = "single." + std::to_string(s) + ".";
    auto& l = p.single[s];
    f(base + "self.wq", l.self.wq);
    f(base + "self.wk", l.self.wk);
    f(base + "self.wv", l.self.wv);
    f(base + "self.wo", l.self.wo);
    f(base + "ff.w1", l.ff.w1);
    f(base + "ff.b1", l.ff.b1);
    f(base + "ff.w2", l.ff.w2);
    f(base + "ff.b2", l.ff.b2);
    f(base + "norm.self", l.norm_self);
    f(base + "norm.ff", l.norm_ff);
    f(base + "mod.self.w", l.mod_self.w);
    f(base + "mod.self.b", l.mod_self.b);
    f(base + "mod.ff.w", l.mod_ff.w);
    f(base + "mod.ff.b", l.mod_ff.b);
  }
  f("final_norm.g", p.final_norm);
  f("out_proj.w", p.out_proj_w);
  f("out_proj.b", p.out_proj_b);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelParameters::tensor_refs() {
  std::vector<std::pair<std::string, Tensor*>> out;
  visit_tensors<ModelParameters, AttentionParams>(
      *this, [&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParameters::tensor_refs() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  visit_tensors<const ModelParameters, const AttentionParams>(
      *this, [&](const std::string& name, const Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

long ModelParameters::parameter_count() const {
  long n = 0;
  for (const auto& [name, t] : tensor_refs()) n += static_cast<long>(t->size());
  return n;
}

bool ModelParameters::tensor_frozen(const std::string& name) const {
  return config.freeze_instr && name == "embed.instr";
}

bool ModelParameters::all_finite() const {
  for (const auto& [name, t] : tensor_refs())
    if (!t->all_finite()) return false;
  return true;
}

ModelParameters init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int d = cfg.d_model;
  ModelParameters p;
  p.config = cfg;
  p.init_seed = seed;
  p.content_embed = Tensor(cfg.content_vocab, d);
  p.instr_embed = Tensor(cfg.instr_vocab, d);
  p.in_proj_w = Tensor(cfg.latent_channels, d);
  p.in_proj_b = Tensor(1, d);
  p.tmlp_w1 = Tensor(d, d);
  p.tmlp_b1 = Tensor(1, d);
  p.tmlp_w2 = Tensor(d, d);
  p.tmlp_b2 = Tensor(1, d);
  auto make_attn = [&] {
    AttentionParams a;
    a.wq = Tensor(d, d);
    a.wk = Tensor(d, d);
    a.wv = Tensor(d, d);
    a.wo = Tensor(d, d);
    return a;
  };
  auto make_ff = [&] {
    FeedForwardParams ff;
    ff.w1 = Tensor(d, cfg.ff_dim);
    ff.b1 = Tensor(1, cfg.ff_dim);
    ff.w2 = Tensor(cfg.ff_dim, d);
    ff.b2 = Tensor(1, d);
    return ff;
  };
  auto make_mod = [&] {
    ModulationParams m;
    m.w = Tensor(d, 2 * d);
    m.b = Tensor(1, 2 * d);
    return m;
  };
  p.joint.resize(cfg.n_joint);
  for (auto& l : p.joint) {
    l.text_self = make_attn();
    l.audio_self = make_attn();
    l.text_joint = make_attn();
    l.audio_joint = make_attn();
    l.text_ff = make_ff();
    l.audio_ff = make_ff();
    l.text_norm_self = Tensor(1, d);
    l.text_norm_joint = Tensor(1, d);
    l.text_norm_ff = Tensor(1, d);
    l.audio_norm_self = Tensor(1, d);
    l.audio_norm_joint = Tensor(1, d);
    l.audio_norm_ff = Tensor(1, d);
    l.audio_mod_self = make_mod();
    l.audio_mod_joint = make_mod();
    l.audio_mod_ff = make_mod();
  }
  p.single.resize(cfg.n_single);
  for (auto& l : p.single) {
    l.self = make_attn();
    l.ff = make_ff();
    l.norm_self = Tensor(1, d);
    l.norm_ff = Tensor(1, d);
    l.mod_self = make_mod();
    l.mod_ff = make_mod();
  }
  p.final_norm = Tensor(1, d);
  p.out_proj_w = Tensor(d, cfg.latent_channels);
  p.out_proj_b = Tensor(1, cfg.latent_channels);

  Rng rng(derive_seed(seed, "mmdit.init"));
  for (auto& [name, t] : p.tensor_refs()) {
    const bool is_mod = name.find(".mod.") != std::string::npos;
    const bool is_out = name.rfind("out_proj.", 0) == 0;
    const bool is_norm = name.find("norm") != std::string::npos;
    const bool is_bias = name.size() > 2 && (name.ends_with(".b") || name.ends_with(".b1") ||
                                             name.ends_with(".b2"));
    const bool is_embed = name.rfind("embed.", 0) == 0;
    if (is_mod || is_out) {
      t->fill(0.0);
    } else if (is_norm) {
      t->fill(1.0);
    } else if (is_bias) {
      t->fill(0.0);
    } else {
      const double scale = is_embed ? 1.0 / std::sqrt(static_cast<double>(d))
                                    : 1.0 / std::sqrt(static_cast<double>(t->rows()));
      for (size_t i = 0; i < t->size(); ++i) t->data()[i] = scale * rng.gaussian();
    }
  }
  return p;
}

Tensor rope_apply(const Tensor& vectors, const std::vector<int>& positions, double base) {
  Tensor out(vectors.rows(), vectors.cols());
  kernels::rope_rows(vectors, vectors.cols(), base, positions, out);
  return out;
}

Tensor timestep_features(double t, int dim) {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument("timestep: t must lie in [0,1], got " + std::to_string(t));
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("timestep: feature dim must be even");
  const int n_freq = dim / 2;
  const double w_min = 1.0, w_max = 100.0;
  Tensor out(1, dim);
  for (int j = 0; j < n_freq; ++j) {
    const double frac = n_freq > 1 ? static_cast<double>(j) / (n_freq - 1) : 0.0;
    const double w = w_min * std::pow(w_max / w_min, frac);
    out.at(0, 2 * j) = std::sin(w * t);
    out.at(0, 2 * j + 1) = std::cos(w * t);
  }
  return out;
}

namespace {

BoundAttention bind_attn(Tape& tape, const AttentionParams& a, bool grads) {
  return {tape.leaf(a.wq, grads), tape.leaf(a.wk, grads), tape.leaf(a.wv, grads),
          tape.leaf(a.wo, grads)};
}

BoundFF bind_ff(Tape& tape, const FeedForwardParams& f, bool grads) {
  return {tape.leaf(f.w1, grads), tape.leaf(f.b1, grads), tape.leaf(f.w2, grads),
          tape.leaf(f.b2, grads)};
}

BoundMod bind_mod(Tape& tape, const ModulationParams& m, bool grads) {
  return {tape.leaf(m.w, grads), tape.leaf(m.b, grads)};
}

Node* mod_vector(Tape& tape, Node* t_emb, const BoundMod& m) {
  return tape.add_row(tape.matmul(t_emb, m.w), m.b);
}

Node* attn_block(Tape& tape, Node* h, const BoundAttention& p, const ModelConfig& cfg,
                 const std::vector<uint8_t>& key_valid) {
  Node* q = tape.matmul(h, p.wq);
  Node* k = tape.matmul(h, p.wk);
  Node* v = tape.matmul(h, p.wv);
  Node* a = tape.attention(q, k, v, cfg.n_heads, cfg.rope_base, key_valid);
  return tape.matmul(a, p.wo);
}

Node* ff_block(Tape& tape, Node* h, const BoundFF& p) {
  Node* hidden = tape.silu(tape.add_row(tape.matmul(h, p.w1), p.b1));
  return tape.add_row(tape.matmul(hidden, p.w2), p.b2);
}

Node* timestep_graph(Tape& tape, const BoundParams& bp, const ModelConfig& cfg, double t) {
  Node* feat = tape.leaf(timestep_features(t, cfg.d_model));
  Node* hidden = tape.silu(tape.add_row(tape.matmul(feat, bp.tm_w1), bp.tm_b1));
  return tape.add_row(tape.matmul(hidden, bp.tm_w2), bp.tm_b2);
}

std::vector<uint8_t> valid_mask(int length, int valid) {
  std::vector<uint8_t> m(static_cast<size_t>(length), 1);
  if (valid >= 0)
    for (int i = valid; i < length; ++i) m[static_cast<size_t>(i)] = 0;
  return m;
}

std::pair<Node*, Node*> joint_layer_graph(Tape& tape, const BoundJoint& l, Node* text_h,
                                          Node* audio_h, Node* t_emb, const ModelConfig& cfg,
                                          int audio_valid) {
  const int lt = text_h ? text_h->value.rows() : 0;
  const int la = audio_h->value.rows();
  const auto audio_mask = valid_mask(la, audio_valid);

  // Per-stream self-attention, positions local to each stream.
  if (lt > 0) {
    Node* h = tape.rmsnorm(text_h, l.tn_self);
    text_h = tape.add(text_h, attn_block(tape, h, l.text_self, cfg, {}));
  }
  {
    Node* h = tape.modulate(tape.rmsnorm(audio_h, l.an_self), mod_vector(tape, t_emb, l.m_self));
    audio_h = tape.add(audio_h, attn_block(tape, h, l.audio_self, cfg, audio_mask));
  }

  // Joint attention over the concatenated sequence, positions 0..lt+la-1.
  {
    Node* tn = lt > 0 ? tape.rmsnorm(text_h, l.tn_joint) : nullptr;
    Node* an = tape.modulate(tape.rmsnorm(audio_h, l.an_joint), mod_vector(tape, t_emb, l.m_joint));
    auto project = [&](Node* tw, Node* aw) {
      Node* ap = tape.matmul(an, aw);
      if (lt == 0) return ap;
      return tape.concat_rows(tape.matmul(tn, tw), ap);
    };
    Node* q = project(l.text_joint.wq, l.audio_joint.wq);
    Node* k = project(l.text_joint.wk, l.audio_joint.wk);
    Node* v = project(l.text_joint.wv, l.audio_joint.wv);
    std::vector<uint8_t> joint_mask(static_cast<size_t>(lt), 1);
    joint_mask.insert(joint_mask.end(), audio_mask.begin(), audio_mask.end());
    Node* a = tape.attention(q, k, v, cfg.n_heads, cfg.rope_base, joint_mask);
    if (lt > 0)
      text_h = tape.add(text_h, tape.matmul(tape.slice_rows(a, 0, lt), l.text_joint.wo));
    audio_h = tape.add(audio_h, tape.matmul(tape.slice_rows(a, lt, la), l.audio_joint.wo));
  }

  // Per-stream feed-forward.
  if (lt > 0) text_h = tape.add(text_h, ff_block(tape, tape.rmsnorm(text_h, l.tn_ff), l.text_ff));
  {
    Node* h = tape.modulate(tape.rmsnorm(audio_h, l.an_ff), mod_vector(tape, t_emb, l.m_ff));
    audio_h = tape.add(audio_h, ff_block(tape, h, l.audio_ff));
  }
  return {text_h, audio_h};
}

Node* single_layer_graph(Tape& tape, const BoundSingle& l, Node* audio_h, Node* t_emb,
                         const ModelConfig& cfg, int audio_valid) {
  const auto audio_mask = valid_mask(audio_h->value.rows(), audio_valid);
  Node* h = tape.modulate(tape.rmsnorm(audio_h, l.n_self), mod_vector(tape, t_emb, l.m_self));
  audio_h = tape.add(audio_h, attn_block(tape, h, l.self, cfg, audio_mask));
  Node* hf = tape.modulate(tape.rmsnorm(audio_h, l.n_ff), mod_vector(tape, t_emb, l.m_ff));
  return tape.add(audio_h, ff_block(tape, hf, l.ff));
}

BoundJoint bind_joint(Tape& tape, const JointLayerParams& l, bool grads) {
  BoundJoint b;
  b.text_self = bind_attn(tape, l.text_self, grads);
  b.audio_self = bind_attn(tape, l.audio_self, grads);
  b.text_joint = bind_attn(tape, l.text_joint, grads);
  b.audio_joint = bind_attn(tape, l.audio_joint, grads);
  b.text_ff = bind_ff(tape, l.text_ff, grads);
  b.audio_ff = bind_ff(tape, l.audio_ff, grads);
  b.tn_self = tape.leaf(l.text_norm_self, grads);
  b.tn_joint = tape.leaf(l.text_norm_joint, grads);
  b.tn_ff = tape.leaf(l.text_norm_ff, grads);
  b.an_self = tape.leaf(l.audio_norm_self, grads);
  b.an_joint = tape.leaf(l.audio_norm_joint, grads);
  b.an_ff = tape.leaf(l.audio_norm_ff, grads);
  b.m_self = bind_mod(tape, l.audio_mod_self, grads);
  b.m_joint = bind_mod(tape, l.audio_mod_joint, grads);
  b.m_ff = bind_mod(tape, l.audio_mod_ff, grads);
  return b;
}

BoundSingle bind_single(Tape& tape, const SingleLayerParams& l, bool grads) {
  BoundSingle b;
  b.self = bind_attn(tape, l.self, grads);
  b.ff = bind_ff(tape, l.ff, grads);
  b.n_self = tape.leaf(l.norm_self, grads);
  b.n_ff = tape.leaf(l.norm_ff, grads);
  b.m_self = bind_mod(tape, l.mod_self, grads);
  b.m_ff = bind_mod(tape, l.mod_ff, grads);
  return b;
}

}  // namespace

BoundParams bind_params(Tape& tape, const ModelParameters& params, bool for_training) {
  BoundParams bp;
  bp.content_embed = tape.leaf(params.content_embed, for_training);
  bp.instr_embed =
      tape.leaf(params.instr_embed, for_training && !params.tensor_frozen("embed.instr"));
  bp.in_w = tape.leaf(params.in_proj_w, for_training);
  bp.in_b = tape.leaf(params.in_proj_b, for_training);
  bp.tm_w1 = tape.leaf(params.tmlp_w1, for_training);
  bp.tm_b1 = tape.leaf(params.tmlp_b1, for_training);
  bp.tm_w2 = tape.leaf(params.tmlp_w2, for_training);
  bp.tm_b2 = tape.leaf(params.tmlp_b2, for_training);
  for (const auto& l : params.joint) bp.joint.push_back(bind_joint(tape, l, for_training));
  for (const auto& l : params.single) bp.single.push_back(bind_single(tape, l, for_training));
  bp.final_g = tape.leaf(params.final_norm, for_training);
  bp.out_w = tape.leaf(params.out_proj_w, for_training);
  bp.out_b = tape.leaf(params.out_proj_b, for_training);
  return bp;
}

graph::Node* condition_graph(Tape& tape, const BoundParams& bp, const CondSpec& cond) {
  Node* instr = tape.gather_rows(bp.instr_embed, cond.instr_ids);
  Node* content = tape.gather_rows(bp.content_embed, cond.content.ids);
  if (cond.instr_ids.empty()) return content;
  if (cond.content.ids.empty()) return instr;
  return tape.concat_rows(instr, content);
}

graph::Node* velocity_graph(Tape& tape, const BoundParams& bp, const ModelConfig& cfg, Node* cond,
                            Node* x_t, double t, int audio_valid) {
  Node* t_emb = timestep_graph(tape, bp, cfg, t);
  Node* audio_h = tape.add_row(tape.matmul(x_t, bp.in_w), bp.in_b);
  Node* text_h = (cond && cond->value.rows() > 0) ? cond : nullptr;
  for (size_t j = 0; j < bp.joint.size(); ++j) {
    auto [th, ah] = joint_layer_graph(tape, bp.joint[j], text_h, audio_h, t_emb, cfg, audio_valid);
    text_h = th;
    audio_h = ah;
    if (!audio_h->value.all_finite() || (text_h && !text_h->value.all_finite()))
      throw std::runtime_error("non-finite activations in joint layer " + std::to_string(j));
  }
  for (size_t s = 0; s < bp.single.size(); ++s) {
    audio_h = single_layer_graph(tape, bp.single[s], audio_h, t_emb, cfg, audio_valid);
    if (!audio_h->value.all_finite())
      throw std::runtime_error("non-finite activations in single layer " + std::to_string(s));
  }
  Node* normed = tape.rmsnorm(audio_h, bp.final_g);
  return tape.add_row(tape.matmul(normed, bp.out_w), bp.out_b);
}

std::vector<Tensor> collect_gradients(const BoundParams& bp, const ModelParameters& params) {
  // Leaf order below must match ModelParameters::tensor_refs().
  std::vector<Node*> leaves;
  leaves.push_back(bp.content_embed);
  leaves.push_back(bp.instr_embed);
  leaves.push_back(bp.in_w);
  leaves.push_back(bp.in_b);
  leaves.push_back(bp.tm_w1);
  leaves.push_back(bp.tm_b1);
  leaves.push_back(bp.tm_w2);
  leaves.push_back(bp.tm_b2);
  for (const auto& l : bp.joint) {
    for (Node* n : {l.text_self.wq, l.text_self.wk, l.text_self.wv, l.text_self.wo,
                    l.text_joint.wq, l.text_joint.wk, l.text_joint.wv, l.text_joint.wo,
                    l.text_ff.w1, l.text_ff.b1, l.text_ff.w2, l.text_ff.b2, l.tn_self, l.tn_joint,
                    l.tn_ff, l.audio_self.wq, l.audio_self.wk, l.audio_self.wv, l.audio_self.wo,
                    l.audio_joint.wq, l.audio_joint.wk, l.audio_joint.wv, l.audio_joint.wo,
                    l.audio_ff.w1, l.audio_ff.b1, l.audio_ff.w2, l.audio_ff.b2, l.an_self,
                    l.an_joint, l.an_ff, l.m_self.w, l.m_self.b, l.m_joint.w, l.m_joint.b,
                    l.m_ff.w, l.m_ff.b})
      leaves.push_back(n);
  }
  for (const auto& l : bp.single) {
    for (Node* n : {l.self.wq, l.self.wk, l.self.wv, l.self.wo, l.ff.w1, l.ff.b1, l.ff.w2,
                    l.ff.b2, l.n_self, l.n_ff, l.m_self.w, l.m_self.b, l.m_ff.w, l.m_ff.b})
      leaves.push_back(n);
  }
  leaves.push_back(bp.final_g);
  leaves.push_back(bp.out_w);
  leaves.push_back(bp.out_b);

  const auto refs = params.tensor_refs();
  if (refs.size() != leaves.size()) throw std::logic_error("collect_gradients: leaf count mismatch");
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (size_t i = 0; i < leaves.size(); ++i) {
    Node* n = leaves[i];
    if (n->grad.same_shape(n->value))
      grads.push_back(n->grad);
    else
      grads.push_back(Tensor(n->value.rows(), n->value.cols()));
  }
  return grads;
}

Tensor timestep_embed(double t, const ModelParameters& params) {
  Tape tape;
  BoundParams bp = bind_params(tape, params, false);
  return timestep_graph(tape, bp, params.config, t)->value;
}

std::pair<Tensor, Tensor> joint_layer(const Tensor& text_h, const Tensor& audio_h,
                                      const Tensor& t_emb, const JointLayerParams& lp,
                                      const ModelConfig& cfg, int audio_valid) {
  if (text_h.rows() > 0 && text_h.cols() != cfg.d_model)
    throw std::invalid_argument("joint_layer: text width mismatch");
  if (audio_h.cols() != cfg.d_model)
    throw std::invalid_argument("joint_layer: audio width mismatch");
  Tape tape;
  BoundJoint bl = bind_joint(tape, lp, false);
  Node* text = text_h.rows() > 0 ? tape.leaf(text_h) : nullptr;
  Node* audio = tape.leaf(audio_h);
  Node* temb = tape.leaf(t_emb);
  auto [th, ah] = joint_layer_graph(tape, bl, text, audio, temb, cfg, audio_valid);
  return {th ? th->value : Tensor(0, cfg.d_model), ah->value};
}

Tensor single_layer(const Tensor& audio_h, const Tensor& t_emb, const SingleLayerParams& lp,
                    const ModelConfig& cfg, int audio_valid) {
  if (audio_h.cols() != cfg.d_model)
    throw std::invalid_argument("single_layer: audio width mismatch");
  Tape tape;
  BoundSingle bl = bind_single(tape, lp, false);
  return single_layer_graph(tape, bl, tape.leaf(audio_h), tape.leaf(t_emb), cfg, audio_valid)->value;
}

VelocityField forward(const textcond::ConditionSequence& c_text, const codec::LatentSequence& x_t,
                      double t, const ModelParameters& params) {
  const ModelConfig& cfg = params.config;
  if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("forward: t must lie in [0,1]");
  if (x_t.data.rows() != x_t.frames || x_t.data.cols() != x_t.channels)
    throw std::invalid_argument("forward: latent shape metadata mismatch");
  if (x_t.channels != cfg.latent_channels)
    throw std::invalid_argument("forward: latent channels do not match the model");
  if (c_text.embeddings.rows() > 0 && c_text.embeddings.cols() != cfg.d_model)
    throw std::invalid_argument("forward: condition width does not match the model");
  if (!x_t.data.all_finite()) throw std::invalid_argument("forward: non-finite latent input");
  Tape tape;
  BoundParams bp = bind_params(tape, params, false);
  Node* cond = tape.leaf(c_text.embeddings);
  Node* x = tape.leaf(x_t.data);
  return velocity_graph(tape, bp, cfg, cond, x, t, -1)->value;
}

}  // namespace sonogen::mmdit
