// Benchmark of the OpenMP kernels against their serial references.
// Build target: bench_kernels. Not part of the test suite.

#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "sonogen/kernels.hpp"
#include "sonogen/rng.hpp"

using sonogen::Rng;
using sonogen::Tensor;
namespace kernels = sonogen::kernels;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, int n, double serial_ms, double parallel_ms) {
  std::printf("%-14s n=%4d  serial %9.3f ms  openmp %9.3f ms  speedup %5.2fx\n", name, n,
              serial_ms, parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
  std::printf("openmp max threads: %d\n", omp_get_max_threads());
  Rng rng(42);
  for (int n : {64, 128, 256, 512}) {
    const Tensor a = rng.gaussian_tensor(n, n);
    const Tensor b = rng.gaussian_tensor(n, n);
    Tensor c(n, n);
    const int reps = n <= 128 ? 20 : 5;
    report("gemm_nn", n, time_ms([&] { kernels::ref::gemm_nn(a, b, c); }, reps),
           time_ms([&] { kernels::gemm_nn(a, b, c); }, reps));
    report("gemm_nt", n, time_ms([&] { kernels::ref::gemm_nt(a, b, c); }, reps),
           time_ms([&] { kernels::gemm_nt(a, b, c); }, reps));
    report("gemm_tn", n, time_ms([&] { kernels::ref::gemm_tn(a, b, c); }, reps),
           time_ms([&] { kernels::gemm_tn(a, b, c); }, reps));
    Tensor probs(n, n);
    report("softmax_rows", n, time_ms([&] { kernels::ref::softmax_rows(a, probs); }, reps * 4),
           time_ms([&] { kernels::softmax_rows(a, probs); }, reps * 4));
    const Tensor gain = Tensor::full(1, n, 1.0);
    Tensor y(n, n);
    std::vector<double> inv;
    report("rmsnorm_rows", n,
           time_ms([&] { kernels::ref::rmsnorm_rows(a, gain, y, &inv); }, reps * 4),
           time_ms([&] { kernels::rmsnorm_rows(a, gain, y, &inv); }, reps * 4));
    std::vector<int> positions(n);
    for (int i = 0; i < n; ++i) positions[i] = i;
    report("rope_rows", n,
           time_ms([&] { kernels::ref::rope_rows(a, 8, 10000.0, positions, y); }, reps * 2),
           time_ms([&] { kernels::rope_rows(a, 8, 10000.0, positions, y); }, reps * 2));
  }
  return 0;
}
