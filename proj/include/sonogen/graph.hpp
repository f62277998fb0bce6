#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "sonogen/tensor.hpp"

namespace sonogen::graph {

/// One value in the computation graph. Gradients are accumulated into
/// `grad` (allocated lazily) during Tape::backward.
struct Node {
  Tensor value;
  Tensor grad;
  bool needs_grad = false;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (!grad.same_shape(value)) grad = Tensor(value.rows(), value.cols());
    return grad;
  }
};

/// Reverse-mode tape. Nodes are created in topological order by the op
/// builders; backward() walks them in reverse creation order. The tape owns
/// all nodes; pointers stay valid until the tape is destroyed.
class Tape {
 public:
  Node* leaf(Tensor value, bool needs_grad = false);

  Node* matmul(Node* a, Node* b);     // a (m x k) * b (k x n)
  Node* matmul_nt(Node* a, Node* b);  // a (m x k) * b (n x k)^T
  Node* add(Node* a, Node* b);
  Node* add_row(Node* x, Node* row);  // broadcast 1 x n row over rows of x
  Node* scale(Node* x, double c);
  Node* silu(Node* x);
  Node* rmsnorm(Node* x, Node* gain);

  /// y = x * (1 + scale) + shift per row, where scale_shift is 1 x 2n
  /// holding [scale | shift].
  Node* modulate(Node* x, Node* scale_shift);

  /// Fused multi-head attention with rotary positions 0..L-1 over the given
  /// sequence. key_valid marks key columns kept in the softmax (empty means
  /// all valid); invalid columns receive -inf logits.
  Node* attention(Node* q, Node* k, Node* v, int n_heads, double rope_base,
                  const std::vector<uint8_t>& key_valid = {});

  Node* gather_rows(Node* table, const std::vector<int>& ids);
  Node* concat_rows(Node* a, Node* b);
  Node* slice_rows(Node* x, int start, int len);

  /// Mean squared error over the first valid_rows rows of pred against
  /// target; rows at or beyond valid_rows contribute exactly zero to value
  /// and gradient. Returns a 1 x 1 scalar node.
  Node* mse_masked(Node* pred, const Tensor& target, int valid_rows);

  /// Runs reverse-mode accumulation from a 1 x 1 root.
  void backward(Node* root);

  size_t node_count() const { return nodes_.size(); }

 private:
  Node* make(Tensor value, std::vector<Node*> parents, std::function<void(Node&)> bwd);
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace sonogen::graph
