#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "sonogen/graph.hpp"
#include "sonogen/rng.hpp"

using sonogen::Rng;
using sonogen::Tensor;
using sonogen::graph::Node;
using sonogen::graph::Tape;

namespace {

// Central finite differences of a scalar-valued builder with respect to each
// input tensor, compared norm-wise per tensor. The builder reconstructs the
// whole graph per evaluation.
double fd_check(const std::function<double(const std::vector<Tensor>&)>& eval,
                std::vector<Tensor> inputs, const std::vector<Tensor>& analytic) {
  const double h = 1e-5;
  double worst = 0.0;
  for (size_t which = 0; which < inputs.size(); ++which) {
    double diff_sq = 0.0, fd_sq = 0.0, an_sq = 0.0;
    for (size_t i = 0; i < inputs[which].size(); ++i) {
      const double orig = inputs[which].data()[i];
      inputs[which].data()[i] = orig + h;
      const double up = eval(inputs);
      inputs[which].data()[i] = orig - h;
      const double down = eval(inputs);
      inputs[which].data()[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = analytic[which].data()[i];
      diff_sq += (fd - an) * (fd - an);
      fd_sq += fd * fd;
      an_sq += an * an;
    }
    const double denom = std::max({std::sqrt(fd_sq), std::sqrt(an_sq), 1e-10});
    worst = std::max(worst, std::sqrt(diff_sq) / denom);
  }
  return worst;
}

// Builds a scalar from inputs through a given op pipeline and returns both
// the value and the input gradients.
struct EvalResult {
  double value;
  std::vector<Tensor> grads;
};

EvalResult run_graph(const std::function<Node*(Tape&, std::vector<Node*>&)>& build,
                     const std::vector<Tensor>& inputs, bool want_grads) {
  Tape tape;
  std::vector<Node*> leaves;
  for (const auto& t : inputs) leaves.push_back(tape.leaf(t, want_grads));
  Node* root = build(tape, leaves);
  EvalResult result;
  result.value = root->value.at(0, 0);
  if (want_grads) {
    tape.backward(root);
    for (Node* leaf : leaves) {
      if (leaf->grad.same_shape(leaf->value))
        result.grads.push_back(leaf->grad);
      else
        result.grads.push_back(Tensor(leaf->value.rows(), leaf->value.cols()));
    }
  }
  return result;
}

void check_op(const std::function<Node*(Tape&, std::vector<Node*>&)>& build,
              const std::vector<Tensor>& inputs, double tol = 1e-6) {
  const auto res = run_graph(build, inputs, true);
  const double worst = fd_check(
      [&](const std::vector<Tensor>& xs) { return run_graph(build, xs, false).value; }, inputs,
      res.grads);
  CHECK(worst < tol);
}

Tensor target_for(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  return rng.gaussian_tensor(rows, cols);
}

}  // namespace

TEST_CASE("matmul gradients match finite differences") {
  Rng rng(1);
  const Tensor target = target_for(3, 4, 99);
  check_op(
      [&](Tape& t, std::vector<Node*>& in) {
        return t.mse_masked(t.matmul(in[0], in[1]), target, 3);
      },
      {rng.gaussian_tensor(3, 5), rng.gaussian_tensor(5, 4)});
}

TEST_CASE("matmul_nt gradients match finite differences") {
  Rng rng(2);
  const Tensor target = target_for(3, 4, 98);
  check_op(
      [&](Tape& t, std::vector<Node*>& in) {
        return t.mse_masked(t.matmul_nt(in[0], in[1]), target, 3);
      },
      {rng.gaussian_tensor(3, 5), rng.gaussian_tensor(4, 5)});
}

TEST_CASE("rmsnorm gradients match finite differences") {
  Rng rng(3);
  const Tensor target = target_for(4, 6, 97);
  check_op(
      [&](Tape& t, std::vector<Node*>& in) {
        return t.mse_masked(t.rmsnorm(in[0], in[1]), target, 4);
      },
      {rng.gaussian_tensor(4, 6), rng.gaussian_tensor(1, 6)});
}

TEST_CASE("silu, add_row and modulate gradients match finite differences") {
  Rng rng(4);
  const Tensor target = target_for(4, 6, 96);
  check_op(
      [&](Tape& t, std::vector<Node*>& in) {
        Node* x = t.silu(t.add_row(in[0], in[1]));
        return t.mse_masked(t.modulate(x, in[2]), target, 4);
      },
      {rng.gaussian_tensor(4, 6), rng.gaussian_tensor(1, 6), rng.gaussian_tensor(1, 12)});
}

TEST_CASE("attention gradients match finite differences") {
  Rng rng(5);
  const Tensor target = target_for(5, 8, 95);
  std::vector<uint8_t> mask = {1, 1, 1, 1, 0};
  check_op(
      [&](Tape& t, std::vector<Node*>& in) {
        return t.mse_masked(t.attention(in[0], in[1], in[2], 2, 10000.0, mask), target, 4);
      },
      {rng.gaussian_tensor(5, 8), rng.gaussian_tensor(5, 8), rng.gaussian_tensor(5, 8)});
}

TEST_CASE("gather, concat and slice gradients match finite differences") {
  Rng rng(6);
  const Tensor target = target_for(4, 3, 94);
  const std::vector<int> ids = {2, 0, 2};
  check_op(
      [&](Tape& t, std::vector<Node*>& in) {
        Node* g = t.gather_rows(in[0], ids);
        Node* c = t.concat_rows(g, in[1]);
        return t.mse_masked(t.slice_rows(c, 1, 4), target, 4);
      },
      {rng.gaussian_tensor(5, 3), rng.gaussian_tensor(2, 3)});
}

TEST_CASE("attention oracle: output matches a naive per-head recomputation") {
  Rng rng(7);
  const int L = 6, d = 8, heads = 2, hd = 4;
  const Tensor q = rng.gaussian_tensor(L, d);
  const Tensor k = rng.gaussian_tensor(L, d);
  const Tensor v = rng.gaussian_tensor(L, d);
  Tape tape;
  Node* out = tape.attention(tape.leaf(q), tape.leaf(k), tape.leaf(v), heads, 10000.0, {});

  // Independent oracle: explicit rope, scores, softmax, weighted sum.
  auto rope1 = [&](const Tensor& x, int row, int h0, int idx) {
    const int pair = (idx / 2) * 2;
    const double theta = row * std::pow(10000.0, -static_cast<double>(pair - h0) / hd);
    const double c = std::cos(theta), s = std::sin(theta);
    const double x0 = x.at(row, pair), x1 = x.at(row, pair + 1);
    return idx % 2 == 0 ? x0 * c - x1 * s : x0 * s + x1 * c;
  };
  for (int h = 0; h < heads; ++h) {
    const int h0 = h * hd;
    for (int i = 0; i < L; ++i) {
      std::vector<double> scores(L);
      for (int j = 0; j < L; ++j) {
        double s = 0.0;
        for (int c = 0; c < hd; ++c)
          s += rope1(q, i, h0, h0 + c) * rope1(k, j, h0, h0 + c);
        scores[j] = s / std::sqrt(static_cast<double>(hd));
      }
      double mx = scores[0];
      for (double s : scores) mx = std::max(mx, s);
      double z = 0.0;
      std::vector<double> w(L);
      for (int j = 0; j < L; ++j) {
        w[j] = std::exp(scores[j] - mx);
        z += w[j];
      }
      double row_sum = 0.0;
      for (int j = 0; j < L; ++j) row_sum += w[j] / z;
      CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-6));
      for (int c = 0; c < hd; ++c) {
        double o = 0.0;
        for (int j = 0; j < L; ++j) o += w[j] / z * v.at(j, h0 + c);
        CHECK(out->value.at(i, h0 + c) == doctest::Approx(o).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("masked rows contribute exactly zero loss and gradient") {
  Rng rng(8);
  Tensor pred_in = rng.gaussian_tensor(4, 3);
  const Tensor target = target_for(4, 3, 93);

  auto loss_of = [&](const Tensor& p) {
    Tape tape;
    Node* leaf = tape.leaf(p, true);
    Node* root = tape.mse_masked(leaf, target, 2);
    tape.backward(root);
    return std::pair{root->value.at(0, 0), leaf->grad};
  };
  auto [base, grad] = loss_of(pred_in);
  Tensor poked = pred_in;
  poked.at(3, 1) += 100.0;
  auto [poked_loss, poked_grad] = loss_of(poked);
  CHECK(base == poked_loss);
  CHECK(grad.max_abs_diff(poked_grad) == 0.0);
  CHECK(grad.at(2, 0) == 0.0);
  CHECK(grad.at(3, 2) == 0.0);
}
