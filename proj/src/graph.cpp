#include "sonogen/graph.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sonogen/kernels.hpp"

namespace sonogen::graph {

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  for (size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

Tensor cols_block(const Tensor& x, int c0, int width) {
  Tensor out(x.rows(), width);
  for (int i = 0; i < x.rows(); ++i) {
    const double* src = x.row(i) + c0;
    double* dst = out.row(i);
    for (int j = 0; j < width; ++j) dst[j] = src[j];
  }
  return out;
}

void add_cols_block(Tensor& x, const Tensor& block, int c0) {
  for (int i = 0; i < x.rows(); ++i) {
    double* dst = x.row(i) + c0;
    const double* src = block.row(i);
    for (int j = 0; j < block.cols(); ++j) dst[j] += src[j];
  }
}

std::vector<int> iota_positions(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

}  // namespace

Node* Tape::make(Tensor value, std::vector<Node*> parents, std::function<void(Node&)> bwd) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  for (Node* p : parents) node->needs_grad = node->needs_grad || p->needs_grad;
  if (node->needs_grad) node->backward_fn = std::move(bwd);
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

Node* Tape::leaf(Tensor value, bool needs_grad) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->needs_grad = needs_grad;
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

Node* Tape::matmul(Node* a, Node* b) {
  Tensor y(a->value.rows(), b->value.cols());
  kernels::gemm_nn(a->value, b->value, y);
  return make(std::move(y), {a, b}, [a, b](Node& n) {
    if (a->needs_grad) {
      Tensor da(a->value.rows(), a->value.cols());
      kernels::gemm_nt(n.grad, b->value, da);
      add_into(a->ensure_grad(), da);
    }
    if (b->needs_grad) {
      Tensor db(b->value.rows(), b->value.cols());
      kernels::gemm_tn(a->value, n.grad, db);
      add_into(b->ensure_grad(), db);
    }
  });
}

Node* Tape::matmul_nt(Node* a, Node* b) {
  Tensor y(a->value.rows(), b->value.rows());
  kernels::gemm_nt(a->value, b->value, y);
  return make(std::move(y), {a, b}, [a, b](Node& n) {
    if (a->needs_grad) {
      Tensor da(a->value.rows(), a->value.cols());
      kernels::gemm_nn(n.grad, b->value, da);
      add_into(a->ensure_grad(), da);
    }
    if (b->needs_grad) {
      Tensor db(b->value.rows(), b->value.cols());
      kernels::gemm_tn(n.grad, a->value, db);
      add_into(b->ensure_grad(), db);
    }
  });
}

Node* Tape::add(Node* a, Node* b) {
  if (!a->value.same_shape(b->value)) throw std::invalid_argument("graph add: shape mismatch");
  Tensor y = a->value;
  add_into(y, b->value);
  return make(std::move(y), {a, b}, [a, b](Node& n) {
    if (a->needs_grad) add_into(a->ensure_grad(), n.grad);
    if (b->needs_grad) add_into(b->ensure_grad(), n.grad);
  });
}

Node* Tape::add_row(Node* x, Node* row) {
  if (row->value.rows() != 1 || row->value.cols() != x->value.cols())
    throw std::invalid_argument("graph add_row: row must be 1 x cols(x)");
  Tensor y = x->value;
  for (int i = 0; i < y.rows(); ++i) {
    double* yr = y.row(i);
    const double* r = row->value.data();
    for (int j = 0; j < y.cols(); ++j) yr[j] += r[j];
  }
  return make(std::move(y), {x, row}, [x, row](Node& n) {
    if (x->needs_grad) add_into(x->ensure_grad(), n.grad);
    if (row->needs_grad) {
      double* rg = row->ensure_grad().data();
      for (int i = 0; i < n.grad.rows(); ++i) {
        const double* g = n.grad.row(i);
        for (int j = 0; j < n.grad.cols(); ++j) rg[j] += g[j];
      }
    }
  });
}

Node* Tape::scale(Node* x, double c) {
  Tensor y = x->value;
  for (size_t i = 0; i < y.size(); ++i) y.data()[i] *= c;
  return make(std::move(y), {x}, [x, c](Node& n) {
    if (!x->needs_grad) return;
    Tensor& g = x->ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) g.data()[i] += c * n.grad.data()[i];
  });
}

Node* Tape::silu(Node* x) {
  Tensor y(x->value.rows(), x->value.cols());
  kernels::silu(x->value, y);
  return make(std::move(y), {x}, [x](Node& n) {
    if (!x->needs_grad) return;
    Tensor dx(x->value.rows(), x->value.cols());
    kernels::silu_grad(x->value, n.grad, dx);
    add_into(x->ensure_grad(), dx);
  });
}

Node* Tape::rmsnorm(Node* x, Node* gain) {
  Tensor y(x->value.rows(), x->value.cols());
  auto inv_rms = std::make_shared<std::vector<double>>();
  kernels::rmsnorm_rows(x->value, gain->value, y, inv_rms.get());
  return make(std::move(y), {x, gain}, [x, gain, inv_rms](Node& n) {
    Tensor dx(x->value.rows(), x->value.cols());
    Tensor dg(1, x->value.cols());
    kernels::rmsnorm_rows_grad(x->value, gain->value, *inv_rms, n.grad, dx, dg);
    if (x->needs_grad) add_into(x->ensure_grad(), dx);
    if (gain->needs_grad) add_into(gain->ensure_grad(), dg);
  });
}

Node* Tape::modulate(Node* x, Node* scale_shift) {
  const int d = x->value.cols();
  if (scale_shift->value.rows() != 1 || scale_shift->value.cols() != 2 * d)
    throw std::invalid_argument("graph modulate: scale_shift must be 1 x 2*cols(x)");
  const double* sc = scale_shift->value.data();
  const double* sh = sc + d;
  Tensor y(x->value.rows(), d);
  for (int i = 0; i < y.rows(); ++i) {
    const double* xr = x->value.row(i);
    double* yr = y.row(i);
    for (int j = 0; j < d; ++j) yr[j] = xr[j] * (1.0 + sc[j]) + sh[j];
  }
  return make(std::move(y), {x, scale_shift}, [x, scale_shift, d](Node& n) {
    const double* sc = scale_shift->value.data();
    if (x->needs_grad) {
      Tensor& g = x->ensure_grad();
      for (int i = 0; i < n.grad.rows(); ++i) {
        const double* dyr = n.grad.row(i);
        double* gr = g.row(i);
        for (int j = 0; j < d; ++j) gr[j] += dyr[j] * (1.0 + sc[j]);
      }
    }
    if (scale_shift->needs_grad) {
      double* sg = scale_shift->ensure_grad().data();
      for (int i = 0; i < n.grad.rows(); ++i) {
        const double* dyr = n.grad.row(i);
        const double* xr = x->value.row(i);
        for (int j = 0; j < d; ++j) {
          sg[j] += dyr[j] * xr[j];
          sg[d + j] += dyr[j];
        }
      }
    }
  });
}

Node* Tape::attention(Node* q, Node* k, Node* v, int n_heads, double rope_base,
                      const std::vector<uint8_t>& key_valid) {
  const int L = q->value.rows();
  const int d = q->value.cols();
  if (k->value.rows() != L || v->value.rows() != L || k->value.cols() != d || v->value.cols() != d)
    throw std::invalid_argument("graph attention: q/k/v shape mismatch");
  if (d % n_heads != 0) throw std::invalid_argument("graph attention: cols not divisible by heads");
  if (!key_valid.empty() && static_cast<int>(key_valid.size()) != L)
    throw std::invalid_argument("graph attention: key_valid length mismatch");
  const int hd = d / n_heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const auto positions = iota_positions(L);

  struct Saved {
    Tensor qr, kr;                // rotated q, k
    std::vector<Tensor> probs;    // per head, L x L
  };
  auto saved = std::make_shared<Saved>();
  saved->qr = Tensor(L, d);
  saved->kr = Tensor(L, d);
  kernels::rope_rows(q->value, hd, rope_base, positions, saved->qr);
  kernels::rope_rows(k->value, hd, rope_base, positions, saved->kr);
  saved->probs.reserve(n_heads);

  Tensor out(L, d);
  for (int h = 0; h < n_heads; ++h) {
    const int c0 = h * hd;
    Tensor qh = cols_block(saved->qr, c0, hd);
    Tensor kh = cols_block(saved->kr, c0, hd);
    Tensor vh = cols_block(v->value, c0, hd);
    Tensor scores(L, L);
    kernels::gemm_nt(qh, kh, scores);
    for (int i = 0; i < L; ++i) {
      double* s = scores.row(i);
      for (int j = 0; j < L; ++j) {
        s[j] *= inv_scale;
        if (!key_valid.empty() && !key_valid[j]) s[j] = -std::numeric_limits<double>::infinity();
      }
    }
    Tensor probs(L, L);
    kernels::softmax_rows(scores, probs);
    Tensor oh(L, hd);
    kernels::gemm_nn(probs, vh, oh);
    add_cols_block(out, oh, c0);
    saved->probs.push_back(std::move(probs));
  }

  return make(std::move(out), {q, k, v},
              [q, k, v, n_heads, hd, inv_scale, rope_base, positions, saved](Node& n) {
                const int L = q->value.rows();
                const int d = q->value.cols();
                Tensor dqr(L, d), dkr(L, d);
                for (int h = 0; h < n_heads; ++h) {
                  const int c0 = h * hd;
                  const Tensor& probs = saved->probs[h];
                  Tensor doh = cols_block(n.grad, c0, hd);
                  Tensor vh = cols_block(v->value, c0, hd);
                  Tensor qh = cols_block(saved->qr, c0, hd);
                  Tensor kh = cols_block(saved->kr, c0, hd);
                  if (v->needs_grad) {
                    Tensor dvh(L, hd);
                    kernels::gemm_tn(probs, doh, dvh);
                    add_cols_block(v->ensure_grad(), dvh, c0);
                  }
                  Tensor dprobs(L, L);
                  kernels::gemm_nt(doh, vh, dprobs);
                  Tensor dscores(L, L);
                  kernels::softmax_rows_grad(probs, dprobs, dscores);
                  for (size_t i = 0; i < dscores.size(); ++i) dscores.data()[i] *= inv_scale;
                  Tensor dqh(L, hd), dkh(L, hd);
                  kernels::gemm_nn(dscores, kh, dqh);
                  kernels::gemm_tn(dscores, qh, dkh);
                  add_cols_block(dqr, dqh, c0);
                  add_cols_block(dkr, dkh, c0);
                }
                if (q->needs_grad) {
                  Tensor dq(L, d);
                  kernels::rope_rows_grad(dqr, hd, rope_base, positions, dq);
                  add_into(q->ensure_grad(), dq);
                }
                if (k->needs_grad) {
                  Tensor dk(L, d);
                  kernels::rope_rows_grad(dkr, hd, rope_base, positions, dk);
                  add_into(k->ensure_grad(), dk);
                }
              });
}

Node* Tape::gather_rows(Node* table, const std::vector<int>& ids) {
  const int d = table->value.cols();
  for (int id : ids)
    if (id < 0 || id >= table->value.rows())
      throw std::out_of_range("gather_rows: id " + std::to_string(id) + " outside table of " +
                              std::to_string(table->value.rows()) + " rows");
  Tensor y(static_cast<int>(ids.size()), d);
  for (size_t i = 0; i < ids.size(); ++i) {
    const double* src = table->value.row(ids[i]);
    double* dst = y.row(static_cast<int>(i));
    for (int j = 0; j < d; ++j) dst[j] = src[j];
  }
  return make(std::move(y), {table}, [table, ids, d](Node& n) {
    if (!table->needs_grad) return;
    Tensor& g = table->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i) {
      double* dst = g.row(ids[i]);
      const double* src = n.grad.row(static_cast<int>(i));
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Node* Tape::concat_rows(Node* a, Node* b) {
  if (a->value.rows() > 0 && b->value.rows() > 0 && a->value.cols() != b->value.cols())
    throw std::invalid_argument("concat_rows: width mismatch");
  const int cols = a->value.rows() > 0 ? a->value.cols() : b->value.cols();
  Tensor y(a->value.rows() + b->value.rows(), cols);
  for (int i = 0; i < a->value.rows(); ++i)
    for (int j = 0; j < cols; ++j) y.at(i, j) = a->value.at(i, j);
  for (int i = 0; i < b->value.rows(); ++i)
    for (int j = 0; j < cols; ++j) y.at(a->value.rows() + i, j) = b->value.at(i, j);
  return make(std::move(y), {a, b}, [a, b, cols](Node& n) {
    if (a->needs_grad) {
      Tensor& g = a->ensure_grad();
      for (int i = 0; i < a->value.rows(); ++i)
        for (int j = 0; j < cols; ++j) g.at(i, j) += n.grad.at(i, j);
    }
    if (b->needs_grad) {
      Tensor& g = b->ensure_grad();
      for (int i = 0; i < b->value.rows(); ++i)
        for (int j = 0; j < cols; ++j) g.at(i, j) += n.grad.at(a->value.rows() + i, j);
    }
  });
}

Node* Tape::slice_rows(Node* x, int start, int len) {
  if (start < 0 || len < 0 || start + len > x->value.rows())
    throw std::out_of_range("slice_rows: range outside tensor");
  Tensor y(len, x->value.cols());
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < x->value.cols(); ++j) y.at(i, j) = x->value.at(start + i, j);
  return make(std::move(y), {x}, [x, start, len](Node& n) {
    if (!x->needs_grad) return;
    Tensor& g = x->ensure_grad();
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < n.grad.cols(); ++j) g.at(start + i, j) += n.grad.at(i, j);
  });
}

Node* Tape::mse_masked(Node* pred, const Tensor& target, int valid_rows) {
  if (!pred->value.same_shape(target)) throw std::invalid_argument("mse_masked: shape mismatch");
  if (valid_rows < 1 || valid_rows > pred->value.rows())
    throw std::invalid_argument("mse_masked: valid_rows out of range");
  const int cols = pred->value.cols();
  const double inv_n = 1.0 / (static_cast<double>(valid_rows) * cols);
  double acc = 0.0;
  for (int i = 0; i < valid_rows; ++i) {
    const double* p = pred->value.row(i);
    const double* t = target.row(i);
    for (int j = 0; j < cols; ++j) {
      const double d = p[j] - t[j];
      acc += d * d;
    }
  }
  Tensor y(1, 1);
  y.at(0, 0) = acc * inv_n;
  auto tgt = std::make_shared<Tensor>(target);
  return make(std::move(y), {pred}, [pred, tgt, valid_rows, cols, inv_n](Node& n) {
    if (!pred->needs_grad) return;
    const double up = n.grad.at(0, 0);
    Tensor& g = pred->ensure_grad();
    for (int i = 0; i < valid_rows; ++i) {
      const double* p = pred->value.row(i);
      const double* t = tgt->row(i);
      double* gr = g.row(i);
      for (int j = 0; j < cols; ++j) gr[j] += up * 2.0 * (p[j] - t[j]) * inv_n;
    }
  });
}

void Tape::backward(Node* root) {
  if (root->value.rows() != 1 || root->value.cols() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  root->ensure_grad().at(0, 0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.needs_grad && n.backward_fn && n.grad.same_shape(n.value)) n.backward_fn(n);
  }
}

}  // namespace sonogen::graph
