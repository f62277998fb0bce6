#include "sonogen/kernels.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sonogen::kernels {

namespace {

void check_gemm(const Tensor& c, int m, int k_a, int k_b, int n) {
  if (k_a != k_b)
    throw std::invalid_argument("gemm: inner dimensions " + std::to_string(k_a) + " vs " +
                                std::to_string(k_b));
  if (c.rows() != m || c.cols() != n) throw std::invalid_argument("gemm: bad output shape");
}

// Per-row workers. Both the OpenMP and the serial entry points dispatch row
// ranges to these, so the two paths execute identical arithmetic.

inline void gemm_nn_row(const Tensor& a, const Tensor& b, Tensor& c, int i) {
  const int k = a.cols(), n = b.cols();
  double* crow = c.row(i);
  for (int j = 0; j < n; ++j) crow[j] = 0.0;
  const double* arow = a.row(i);
  for (int p = 0; p < k; ++p) {
    const double aip = arow[p];
    const double* brow = b.row(p);
    for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
  }
}

inline void gemm_nt_row(const Tensor& a, const Tensor& b, Tensor& c, int i) {
  const int k = a.cols(), n = b.rows();
  const double* arow = a.row(i);
  double* crow = c.row(i);
  for (int j = 0; j < n; ++j) {
    const double* brow = b.row(j);
    double s = 0.0;
    for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
    crow[j] = s;
  }
}

// gemm_tn is parallelized over output rows i (columns of a).
inline void gemm_tn_row(const Tensor& a, const Tensor& b, Tensor& c, int i) {
  const int k = a.rows(), n = b.cols();
  double* crow = c.row(i);
  for (int j = 0; j < n; ++j) crow[j] = 0.0;
  for (int p = 0; p < k; ++p) {
    const double api = a.at(p, i);
    const double* brow = b.row(p);
    for (int j = 0; j < n; ++j) crow[j] += api * brow[j];
  }
}

inline void softmax_row(const Tensor& scores, Tensor& probs, int i) {
  const int n = scores.cols();
  const double* s = scores.row(i);
  double* p = probs.row(i);
  double m = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) m = std::max(m, s[j]);
  double z = 0.0;
  for (int j = 0; j < n; ++j) {
    p[j] = std::exp(s[j] - m);
    z += p[j];
  }
  const double inv = 1.0 / z;
  for (int j = 0; j < n; ++j) p[j] *= inv;
}

inline void softmax_grad_row(const Tensor& probs, const Tensor& dprobs, Tensor& dscores, int i) {
  const int n = probs.cols();
  const double* p = probs.row(i);
  const double* dp = dprobs.row(i);
  double* ds = dscores.row(i);
  double dot = 0.0;
  for (int j = 0; j < n; ++j) dot += dp[j] * p[j];
  for (int j = 0; j < n; ++j) ds[j] = p[j] * (dp[j] - dot);
}

inline void rmsnorm_row(const Tensor& x, const Tensor& gain, Tensor& y, std::vector<double>* inv_rms,
                        int i) {
  const int n = x.cols();
  const double* xr = x.row(i);
  double* yr = y.row(i);
  double s = 0.0;
  for (int j = 0; j < n; ++j) s += xr[j] * xr[j];
  const double inv = 1.0 / std::sqrt(s / n + kRmsEps);
  if (inv_rms) (*inv_rms)[i] = inv;
  const double* g = gain.data();
  for (int j = 0; j < n; ++j) yr[j] = xr[j] * inv * g[j];
}

// dx_j = g_j*inv*dy_j - (sum_k dy_k g_k x_k) * x_j * inv^3 / n
inline void rmsnorm_grad_row(const Tensor& x, const Tensor& gain, const std::vector<double>& inv_rms,
                             const Tensor& dy, Tensor& dx, int i) {
  const int n = x.cols();
  const double* xr = x.row(i);
  const double* dyr = dy.row(i);
  const double* g = gain.data();
  double* dxr = dx.row(i);
  const double inv = inv_rms[i];
  double dot = 0.0;
  for (int j = 0; j < n; ++j) dot += dyr[j] * g[j] * xr[j];
  const double coef = dot * inv * inv * inv / n;
  for (int j = 0; j < n; ++j) dxr[j] = dyr[j] * g[j] * inv - coef * xr[j];
}

inline void rope_row(const Tensor& x, int head_dim, double base, int pos, Tensor& y, int i,
                     bool inverse) {
  const int cols = x.cols();
  const double* xr = x.row(i);
  double* yr = y.row(i);
  for (int h0 = 0; h0 < cols; h0 += head_dim) {
    for (int k = 0; k + 1 < head_dim; k += 2) {
      const double theta = pos * std::pow(base, -static_cast<double>(k) / head_dim);
      const double c = std::cos(theta);
      const double s = inverse ? -std::sin(theta) : std::sin(theta);
      const double x0 = xr[h0 + k], x1 = xr[h0 + k + 1];
      yr[h0 + k] = x0 * c - x1 * s;
      yr[h0 + k + 1] = x0 * s + x1 * c;
    }
  }
}

inline void silu_row(const Tensor& x, Tensor& y, int i) {
  const int n = x.cols();
  const double* xr = x.row(i);
  double* yr = y.row(i);
  for (int j = 0; j < n; ++j) {
    const double sig = 1.0 / (1.0 + std::exp(-xr[j]));
    yr[j] = xr[j] * sig;
  }
}

inline void silu_grad_row(const Tensor& x, const Tensor& dy, Tensor& dx, int i) {
  const int n = x.cols();
  const double* xr = x.row(i);
  const double* dyr = dy.row(i);
  double* dxr = dx.row(i);
  for (int j = 0; j < n; ++j) {
    const double sig = 1.0 / (1.0 + std::exp(-xr[j]));
    dxr[j] = dyr[j] * sig * (1.0 + xr[j] * (1.0 - sig));
  }
}

void check_rope(const Tensor& x, int head_dim, const std::vector<int>& positions) {
  if (head_dim <= 0 || head_dim % 2 != 0)
    throw std::invalid_argument("rope: head_dim must be positive and even, got " +
                                std::to_string(head_dim));
  if (x.cols() % head_dim != 0) throw std::invalid_argument("rope: cols not a multiple of head_dim");
  if (static_cast<int>(positions.size()) != x.rows())
    throw std::invalid_argument("rope: positions length mismatch");
  for (int p : positions)
    if (p < 0) throw std::invalid_argument("rope: negative position");
}

}  // namespace

#define SONOGEN_PAR_ROWS(nrows) _Pragma("omp parallel for schedule(static)")

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  check_gemm(c, a.rows(), a.cols(), b.rows(), b.cols());
  const int m = a.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) gemm_nn_row(a, b, c, i);
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  check_gemm(c, a.rows(), a.cols(), b.cols(), b.rows());
  const int m = a.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) gemm_nt_row(a, b, c, i);
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  check_gemm(c, a.cols(), a.rows(), b.rows(), b.cols());
  const int m = a.cols();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) gemm_tn_row(a, b, c, i);
}

void softmax_rows(const Tensor& scores, Tensor& probs) {
  if (!scores.same_shape(probs)) throw std::invalid_argument("softmax: shape mismatch");
  const int m = scores.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) softmax_row(scores, probs, i);
}

void softmax_rows_grad(const Tensor& probs, const Tensor& dprobs, Tensor& dscores) {
  const int m = probs.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) softmax_grad_row(probs, dprobs, dscores, i);
}

void rmsnorm_rows(const Tensor& x, const Tensor& gain, Tensor& y, std::vector<double>* inv_rms) {
  if (gain.size() != static_cast<size_t>(x.cols()))
    throw std::invalid_argument("rmsnorm: gain size mismatch");
  if (inv_rms) inv_rms->resize(x.rows());
  const int m = x.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) rmsnorm_row(x, gain, y, inv_rms, i);
}

void rmsnorm_rows_grad(const Tensor& x, const Tensor& gain, const std::vector<double>& inv_rms,
                       const Tensor& dy, Tensor& dx, Tensor& dgain) {
  const int m = x.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) rmsnorm_grad_row(x, gain, inv_rms, dy, dx, i);
  // Gain gradient reduces over rows; kept serial so the sum order is fixed.
  for (int i = 0; i < m; ++i) {
    const double* xr = x.row(i);
    const double* dyr = dy.row(i);
    const double inv = inv_rms[i];
    for (int j = 0; j < x.cols(); ++j) dgain.data()[j] += dyr[j] * xr[j] * inv;
  }
}

void rope_rows(const Tensor& x, int head_dim, double base, const std::vector<int>& positions,
               Tensor& y) {
  check_rope(x, head_dim, positions);
  const int m = x.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) rope_row(x, head_dim, base, positions[i], y, i, false);
}

void rope_rows_grad(const Tensor& dy, int head_dim, double base, const std::vector<int>& positions,
                    Tensor& dx) {
  check_rope(dy, head_dim, positions);
  const int m = dy.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) rope_row(dy, head_dim, base, positions[i], dx, i, true);
}

void silu(const Tensor& x, Tensor& y) {
  const int m = x.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) silu_row(x, y, i);
}

void silu_grad(const Tensor& x, const Tensor& dy, Tensor& dx) {
  const int m = x.rows();
  SONOGEN_PAR_ROWS(m)
  for (int i = 0; i < m; ++i) silu_grad_row(x, dy, dx, i);
}

namespace ref {

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  check_gemm(c, a.rows(), a.cols(), b.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) gemm_nn_row(a, b, c, i);
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  check_gemm(c, a.rows(), a.cols(), b.cols(), b.rows());
  for (int i = 0; i < a.rows(); ++i) gemm_nt_row(a, b, c, i);
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  check_gemm(c, a.cols(), a.rows(), b.rows(), b.cols());
  for (int i = 0; i < a.cols(); ++i) gemm_tn_row(a, b, c, i);
}

void softmax_rows(const Tensor& scores, Tensor& probs) {
  if (!scores.same_shape(probs)) throw std::invalid_argument("softmax: shape mismatch");
  for (int i = 0; i < scores.rows(); ++i) softmax_row(scores, probs, i);
}

void softmax_rows_grad(const Tensor& probs, const Tensor& dprobs, Tensor& dscores) {
  for (int i = 0; i < probs.rows(); ++i) softmax_grad_row(probs, dprobs, dscores, i);
}

void rmsnorm_rows(const Tensor& x, const Tensor& gain, Tensor& y, std::vector<double>* inv_rms) {
  if (gain.size() != static_cast<size_t>(x.cols()))
    throw std::invalid_argument("rmsnorm: gain size mismatch");
  if (inv_rms) inv_rms->resize(x.rows());
  for (int i = 0; i < x.rows(); ++i) rmsnorm_row(x, gain, y, inv_rms, i);
}

void rmsnorm_rows_grad(const Tensor& x, const Tensor& gain, const std::vector<double>& inv_rms,
                       const Tensor& dy, Tensor& dx, Tensor& dgain) {
  for (int i = 0; i < x.rows(); ++i) rmsnorm_grad_row(x, gain, inv_rms, dy, dx, i);
  for (int i = 0; i < x.rows(); ++i) {
    const double* xr = x.row(i);
    const double* dyr = dy.row(i);
    const double inv = inv_rms[i];
    for (int j = 0; j < x.cols(); ++j) dgain.data()[j] += dyr[j] * xr[j] * inv;
  }
}

void rope_rows(const Tensor& x, int head_dim, double base, const std::vector<int>& positions,
               Tensor& y) {
  check_rope(x, head_dim, positions);
  for (int i = 0; i < x.rows(); ++i) rope_row(x, head_dim, base, positions[i], y, i, false);
}

void rope_rows_grad(const Tensor& dy, int head_dim, double base, const std::vector<int>& positions,
                    Tensor& dx) {
  check_rope(dy, head_dim, positions);
  for (int i = 0; i < dy.rows(); ++i) rope_row(dy, head_dim, base, positions[i], dx, i, true);
}

void silu(const Tensor& x, Tensor& y) {
  for (int i = 0; i < x.rows(); ++i) silu_row(x, y, i);
}

void silu_grad(const Tensor& x, const Tensor& dy, Tensor& dx) {
  for (int i = 0; i < x.rows(); ++i) silu_grad_row(x, dy, dx, i);
}

}  // namespace ref

}  // namespace sonogen::kernels
