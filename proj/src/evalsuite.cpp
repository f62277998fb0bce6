#include "sonogen/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "sonogen/rng.hpp"

namespace sonogen::evalsuite {

void EvalReport::add(const std::string& name, double value, long n, double half_width) {
  metrics.emplace_back(name, MetricValue{value, n, half_width});
}

bool EvalReport::has(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return true;
  return false;
}

double EvalReport::get(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v.value;
  throw std::out_of_range("report has no metric '" + name + "'");
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << "evaluation report: " << run_id << "\n";
  os << "----------------------------------------------\n";
  char buf[128];
  for (const auto& [k, v] : metrics) {
    std::snprintf(buf, sizeof buf, "  %-32s %12.6f", k.c_str(), v.value);
    os << buf;
    if (v.n > 0) os << "  (n=" << v.n;
    if (v.half_width > 0) {
      std::snprintf(buf, sizeof buf, ", +/-%.4f", v.half_width);
      os << buf;
    }
    if (v.n > 0) os << ")";
    os << "\n";
  }
  for (const auto& note : notes) os << "  note: " << note << "\n";
  os << "----------------------------------------------\n";
  os << "run=" << run_id << "\n";
  for (const auto& [k, v] : metrics) {
    std::snprintf(buf, sizeof buf, "%.17g", v.value);
    os << k << "=" << buf << "\n";
    if (v.n > 0) os << k << ".n=" << v.n << "\n";
  }
  return os.str();
}

namespace {

Tensor pooled_mean(const Tensor& latent) {
  if (latent.rows() < 1) throw std::invalid_argument("pooled feature needs at least one frame");
  Tensor mean(1, latent.cols());
  for (int f = 0; f < latent.rows(); ++f)
    for (int c = 0; c < latent.cols(); ++c) mean.at(0, c) += latent.at(f, c);
  for (int c = 0; c < latent.cols(); ++c) mean.at(0, c) /= latent.rows();
  return mean;
}

double binomial_half_width(double p, long n) {
  if (n <= 0) return 0.0;
  return 1.96 * std::sqrt(std::max(0.0, p * (1.0 - p)) / static_cast<double>(n));
}

// Cyclic Jacobi eigensolver for symmetric matrices; a is destroyed.
// Returns eigenvalues; eigenvectors in columns of v when non-null.
std::vector<double> jacobi_eigen(Tensor a, Tensor* v_out) {
  const int n = a.rows();
  Tensor v(n, n);
  for (int i = 0; i < n; ++i) v.at(i, i) = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a.at(i, j) * a.at(i, j);
    if (off < 1e-24) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - s * vkq;
          v.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a.at(i, i);
  if (v_out) *v_out = v;
  return eig;
}

// B = U diag(f(eig)) U^T for symmetric A.
Tensor symmetric_apply(const Tensor& a, double (*f)(double), bool* repaired) {
  Tensor u;
  auto eig = jacobi_eigen(a, &u);
  const int n = a.rows();
  for (double& e : eig) {
    if (e < 0.0) {
      if (repaired && e < -1e-8) *repaired = true;
      e = 0.0;
    }
    e = f(e);
  }
  Tensor out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < n; ++k) s += u.at(i, k) * eig[k] * u.at(j, k);
      out.at(i, j) = s;
    }
  return out;
}

void fit_gaussian(const std::vector<Tensor>& features, Tensor& mean, Tensor& cov) {
  const int n = static_cast<int>(features.size());
  const int d = features[0].cols();
  mean = Tensor(1, d);
  for (const auto& f : features)
    for (int c = 0; c < d; ++c) mean.at(0, c) += f.at(0, c);
  for (int c = 0; c < d; ++c) mean.at(0, c) /= n;
  cov = Tensor(d, d);
  for (const auto& f : features)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        cov.at(i, j) += (f.at(0, i) - mean.at(0, i)) * (f.at(0, j) - mean.at(0, j));
  const double denom = n > 1 ? n - 1.0 : 1.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) cov.at(i, j) /= denom;
}

}  // namespace

AttrMap oracle_classify(const Tensor& latent, Modality modality,
                        const syndata::AttributeSchema& schema) {
  if (latent.cols() != schema.channels())
    throw std::invalid_argument("oracle_classify: latent channels " +
                                std::to_string(latent.cols()) + " do not match schema channels " +
                                std::to_string(schema.channels()));
  const Tensor pooled = pooled_mean(latent);
  AttrMap out;
  for (const auto& attr : schema.attributes(modality)) {
    const auto support = schema.support(modality, attr.name);
    double best = 0.0;
    int best_idx = -1;
    for (size_t vi = 0; vi < attr.values.size(); ++vi) {
      const Tensor sig = schema.signature(modality, attr.name, attr.values[vi]);
      double dist = 0.0;
      for (int c : support) {
        const double d = pooled.at(0, c) - sig.at(0, c);
        dist += d * d;
      }
      if (best_idx < 0 || dist < best) {
        best = dist;
        best_idx = static_cast<int>(vi);
      }
    }
    out[attr.name] = attr.values[static_cast<size_t>(best_idx)];
  }
  return out;
}

std::vector<AttrAccuracy> control_accuracy(const std::vector<std::pair<AttrMap, Tensor>>& samples,
                                           Modality modality,
                                           const syndata::AttributeSchema& schema) {
  if (samples.empty()) throw std::invalid_argument("control_accuracy: empty input");
  std::vector<AttrAccuracy> out;
  for (const auto& attr : schema.attributes(modality)) {
    long hits = 0, n = 0;
    for (const auto& [requested, latent] : samples) {
      const auto it = requested.find(attr.name);
      if (it == requested.end()) continue;
      const AttrMap decoded = oracle_classify(latent, modality, schema);
      if (decoded.at(attr.name) == it->second) ++hits;
      ++n;
    }
    if (n > 0)
      out.push_back({attr.name, static_cast<double>(hits) / static_cast<double>(n), n});
  }
  return out;
}

std::pair<double, double> duration_error(const std::vector<std::pair<double, long>>& samples,
                                         const codec::CodecConfig& codec_cfg) {
  if (samples.empty()) throw std::invalid_argument("duration_error: empty input");
  double sum = 0.0, worst = 0.0;
  for (const auto& [requested_t, frames] : samples) {
    const double err =
        std::abs(static_cast<double>(frames - codec::frame_count(requested_t, codec_cfg)));
    sum += err;
    worst = std::max(worst, err);
  }
  return {sum / static_cast<double>(samples.size()), worst};
}

double latent_frechet(const std::vector<Tensor>& set_a, const std::vector<Tensor>& set_b,
                      bool* repaired) {
  if (set_a.size() < 2 || set_b.size() < 2)
    throw std::invalid_argument("latent_frechet: each set needs at least 2 samples");
  if (repaired) *repaired = false;
  std::vector<Tensor> fa, fb;
  for (const auto& x : set_a) fa.push_back(pooled_mean(x));
  for (const auto& x : set_b) fb.push_back(pooled_mean(x));
  Tensor mu_a, cov_a, mu_b, cov_b;
  fit_gaussian(fa, mu_a, cov_a);
  fit_gaussian(fb, mu_b, cov_b);
  const int d = mu_a.cols();
  if (mu_b.cols() != d) throw std::invalid_argument("latent_frechet: feature width mismatch");

  double mean_term = 0.0;
  for (int c = 0; c < d; ++c) {
    const double diff = mu_a.at(0, c) - mu_b.at(0, c);
    mean_term += diff * diff;
  }
  double trace_term = 0.0;
  for (int i = 0; i < d; ++i) trace_term += cov_a.at(i, i) + cov_b.at(i, i);

  // tr((Sa Sb)^(1/2)) via the symmetric form sqrt(Sa)^T Sb sqrt(Sa).
  const Tensor root_a = symmetric_apply(cov_a, [](double x) { return std::sqrt(x); }, repaired);
  Tensor inner(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) s += root_a.at(i, k) * cov_b.at(k, l) * root_a.at(l, j);
      inner.at(i, j) = s;
    }
  // Symmetrize against accumulated rounding before the eigensolve.
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (inner.at(i, j) + inner.at(j, i));
      inner.at(i, j) = avg;
      inner.at(j, i) = avg;
    }
  auto eig = jacobi_eigen(inner, nullptr);
  double sqrt_trace = 0.0;
  for (double e : eig) {
    if (e < 0.0) {
      if (repaired && e < -1e-8) *repaired = true;
      e = 0.0;
    }
    sqrt_trace += std::sqrt(e);
  }
  return mean_term + trace_term - 2.0 * sqrt_trace;
}

double recon_error(const std::vector<std::vector<double>>& waveforms,
                   const codec::CodecConfig& codec_cfg) {
  if (waveforms.empty()) throw std::invalid_argument("recon_error: empty input");
  double total = 0.0;
  for (const auto& w : waveforms) {
    const auto recon = codec::decode(codec::encode(w, codec_cfg), codec_cfg);
    double mse = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
      const double d = recon[i] - w[i];
      mse += d * d;
    }
    total += mse / static_cast<double>(w.size());
  }
  return total / static_cast<double>(waveforms.size());
}

EvalReport evaluate_model(const mmdit::ModelParameters& params,
                          const std::vector<syndata::SampleRecord>& records,
                          const std::filesystem::path& manifest_dir,
                          const syndata::AttributeSchema& schema,
                          const codec::CodecConfig& codec_cfg, double lambda,
                          const EvalOptions& opts, const std::string& run_id) {
  EvalReport report;
  report.run_id = run_id;
  const auto vocab = textcond::Vocabulary::standard();
  const auto ivocab = syndata::instruction_vocab(schema);

  for (Modality m : {Modality::speech, Modality::music, Modality::sfx}) {
    std::vector<const syndata::SampleRecord*> selected;
    for (const auto& r : records) {
      // Dialogue rows are skipped: their latents mix two tagged utterances.
      if (r.modality == m && r.content_text.find('|') == std::string::npos)
        selected.push_back(&r);
      if (static_cast<int>(selected.size()) >= opts.n_per_modality) break;
    }
    if (selected.empty()) continue;

    std::vector<std::pair<AttrMap, Tensor>> generated;
    std::vector<Tensor> gen_set, truth_set;
    std::vector<std::pair<double, long>> durations;
    for (size_t i = 0; i < selected.size(); ++i) {
      const auto& rec = *selected[i];
      textcond::ContentTokens content;
      long n_frames = 0;
      if (m == Modality::sfx) {
        content = textcond::build_sfx_content(rec.duration, lambda, vocab);
        n_frames = flow::sfx_frames_for_tokens(content.length(), lambda, codec_cfg);
      } else {
        content = syndata::record_content(rec, vocab);
        long phonemes = 0;
        for (int id : content.ids)
          if (vocab.is_phoneme(id)) ++phonemes;
        n_frames = phonemes * opts.frames_per_phoneme;
      }
      const Tensor instr_emb = textcond::embed_instruction(rec.instruction, ivocab,
                                                           params.instr_embed);
      const auto cond = textcond::build_condition(instr_emb, content, params.content_embed);
      flow::SamplerConfig scfg;
      scfg.steps = opts.sampler_steps;
      scfg.seed = derive_seed(opts.seed, "eval.sample", fnv1a64(rec.id));
      const auto latent =
          flow::sample(params, cond, static_cast<int>(n_frames), scfg, codec_cfg);
      generated.emplace_back(rec.attrs, latent.data);
      gen_set.push_back(latent.data);
      truth_set.push_back(codec::read_latents(manifest_dir / rec.latent_path, codec_cfg).data);
      if (m == Modality::sfx) durations.emplace_back(rec.duration, latent.frames);
    }

    const std::string tag(textcond::modality_name(m));
    for (const auto& acc : control_accuracy(generated, m, schema))
      report.add("acc." + tag + "." + acc.attr, acc.accuracy, acc.n,
                 binomial_half_width(acc.accuracy, acc.n));
    // Oracle sanity on the stored ground truth.
    std::vector<std::pair<AttrMap, Tensor>> truth_pairs;
    for (size_t i = 0; i < selected.size(); ++i)
      truth_pairs.emplace_back(selected[i]->attrs, truth_set[i]);
    for (const auto& acc : control_accuracy(truth_pairs, m, schema))
      report.add("acc_truth." + tag + "." + acc.attr, acc.accuracy, acc.n, 0.0);
    if (gen_set.size() >= 2) {
      bool repaired = false;
      report.add("frechet." + tag, latent_frechet(gen_set, truth_set, &repaired),
                 static_cast<long>(gen_set.size()));
      if (repaired) report.notes.push_back("frechet." + tag + ": clamped negative eigenvalues");
    }
    if (!durations.empty()) {
      const auto [mean_err, max_err] = duration_error(durations, codec_cfg);
      report.add("duration.sfx.mean_abs_frames", mean_err, static_cast<long>(durations.size()));
      report.add("duration.sfx.max_abs_frames", max_err, static_cast<long>(durations.size()));
    }
  }

  // Codec reconstruction probe over seeded waveforms.
  {
    Rng rng(derive_seed(opts.seed, "eval.recon"));
    std::vector<std::vector<double>> waves;
    for (int i = 0; i < 4; ++i) {
      std::vector<double> w(static_cast<size_t>(codec_cfg.window) * 3);
      for (auto& x : w) x = rng.gaussian();
      waves.push_back(std::move(w));
    }
    report.add("codec.recon_mse", recon_error(waves, codec_cfg), 4);
  }
  return report;
}

}  // namespace sonogen::evalsuite
