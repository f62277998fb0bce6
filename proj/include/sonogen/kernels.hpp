#pragma once

#include <cstdint>
#include <vector>

#include "sonogen/tensor.hpp"

namespace sonogen::kernels {

// Data-parallel kernels behind the model's forward and backward passes.
// Each kernel partitions independent output rows across OpenMP threads; no
// floating-point reduction crosses a thread boundary, so results are
// bit-identical for any thread count and identical to the serial reference
// in kernels::ref (both call the same per-row workers).

/// c = a * b, (m x k) * (k x n).
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c);
/// c = a * b^T, (m x k) * (n x k)^T.
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c);
/// c = a^T * b, (k x m)^T * (k x n).
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c);

/// Row-wise softmax. Rows may contain -inf entries (masked); each output row
/// sums to 1 provided at least one entry is finite.
void softmax_rows(const Tensor& scores, Tensor& probs);
/// dscores from (probs, dprobs): dS = P o (dP - rowsum(dP o P)).
void softmax_rows_grad(const Tensor& probs, const Tensor& dprobs, Tensor& dscores);

/// Scale-only RMS normalization per row: y = x / rms(x) * gain.
/// inv_rms (one per row) is written when non-null; the backward pass needs it.
void rmsnorm_rows(const Tensor& x, const Tensor& gain, Tensor& y, std::vector<double>* inv_rms);
void rmsnorm_rows_grad(const Tensor& x, const Tensor& gain, const std::vector<double>& inv_rms,
                       const Tensor& dy, Tensor& dx, Tensor& dgain);

/// Rotary position transform. Row i is treated as n_heads blocks of head_dim;
/// within each block, coordinate pair (2k, 2k+1) is rotated by
/// positions[i] * base^(-2k/head_dim). head_dim must be even.
void rope_rows(const Tensor& x, int head_dim, double base, const std::vector<int>& positions,
               Tensor& y);
/// Backward of rope_rows: applies the inverse rotation to dy.
void rope_rows_grad(const Tensor& dy, int head_dim, double base, const std::vector<int>& positions,
                    Tensor& dx);

/// SiLU activation x * sigmoid(x), elementwise.
void silu(const Tensor& x, Tensor& y);
void silu_grad(const Tensor& x, const Tensor& dy, Tensor& dx);

constexpr double kRmsEps = 1e-8;

namespace ref {
// Serial reference implementations, kept for kernel parity tests and the
// serial side of the benchmark. Outputs are bit-identical to the parallel
// versions above.
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c);
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c);
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c);
void softmax_rows(const Tensor& scores, Tensor& probs);
void softmax_rows_grad(const Tensor& probs, const Tensor& dprobs, Tensor& dscores);
void rmsnorm_rows(const Tensor& x, const Tensor& gain, Tensor& y, std::vector<double>* inv_rms);
void rmsnorm_rows_grad(const Tensor& x, const Tensor& gain, const std::vector<double>& inv_rms,
                       const Tensor& dy, Tensor& dx, Tensor& dgain);
void rope_rows(const Tensor& x, int head_dim, double base, const std::vector<int>& positions,
               Tensor& y);
void rope_rows_grad(const Tensor& dy, int head_dim, double base, const std::vector<int>& positions,
                    Tensor& dx);
void silu(const Tensor& x, Tensor& y);
void silu_grad(const Tensor& x, const Tensor& dy, Tensor& dx);
}  // namespace ref

}  // namespace sonogen::kernels
