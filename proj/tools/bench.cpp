// Compares the OpenMP kernels against the serial reference implementations:
// wall time, speedup, and the largest absolute difference (which must stay
// at zero for matmul and within float-noise elsewhere).

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

#include "vitl/kernels.hpp"
#include "vitl/reference.hpp"
#include "vitl/rng.hpp"

using namespace vitl;
using Clock = std::chrono::high_resolution_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<double> random_vec(size_t n, SeededRng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0;
  for (size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

template <class Fn>
double time_best_of(int reps, Fn&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void bench_matmul(size_t m, size_t k, size_t n, SeededRng& rng) {
  auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
  std::vector<double> c_par(m * n), c_ser(m * n);
  const double t_par = time_best_of(3, [&] { kernels::matmul_nn(a.data(), b.data(), c_par.data(), m, k, n); });
  const double t_ser = time_best_of(3, [&] { ref::matmul_naive(a.data(), b.data(), c_ser.data(), m, k, n); });
  const double gflops = 2.0 * double(m) * double(k) * double(n) / t_par / 1e9;
  std::printf("matmul   %4zux%-4zu * %4zux%-4zu  parallel %8.2f ms (%5.2f GF/s)  serial %8.2f ms  speedup %4.2fx  max|diff| %g\n",
              m, k, k, n, t_par * 1e3, gflops, t_ser * 1e3, t_ser / t_par, max_abs_diff(c_par, c_ser));
}

void bench_conv(size_t cin, size_t hw, size_t cout, size_t ks, SeededRng& rng) {
  auto x = random_vec(cin * hw * hw, rng);
  auto w = random_vec(cout * cin * ks * ks, rng);
  auto bias = random_vec(cout, rng);
  const size_t ohw = hw - ks + 1;
  std::vector<double> out_par(cout * ohw * ohw), out_ser(cout * ohw * ohw);
  const double t_par = time_best_of(3, [&] {
    kernels::conv2d(x.data(), w.data(), bias.data(), out_par.data(), cin, hw, hw, cout, ks, 1, ohw, ohw);
  });
  const double t_ser = time_best_of(3, [&] {
    ref::conv2d_naive(x.data(), w.data(), bias.data(), out_ser.data(), cin, hw, hw, cout, ks, 1, ohw, ohw);
  });
  std::printf("conv2d   %zux%zux%-6zu k=%zu f=%-4zu parallel %8.2f ms  serial %8.2f ms  speedup %4.2fx  max|diff| %g\n",
              cin, hw, hw, ks, cout, t_par * 1e3, t_ser * 1e3, t_ser / t_par, max_abs_diff(out_par, out_ser));
}

void bench_attention(size_t s, size_t dk, SeededRng& rng) {
  auto q = random_vec(s * dk, rng), k = random_vec(s * dk, rng), v = random_vec(s * dk, rng);
  std::vector<double> out_par(s * dk), scores(s * s), weights(s * s);
  const double scale = 1.0 / std::sqrt(double(dk));
  const double t_par = time_best_of(3, [&] {
    kernels::matmul_nt(q.data(), k.data(), scores.data(), s, dk, s);
    for (auto& x : scores) x *= scale;
    kernels::softmax_rows(scores.data(), weights.data(), s, s);
    kernels::matmul_nn(weights.data(), v.data(), out_par.data(), s, s, dk);
  });
  std::vector<double> out_ser;
  const double t_ser = time_best_of(3, [&] { out_ser = ref::attention_naive(q, k, v, s, dk); });
  std::printf("attention s=%-5zu dk=%-5zu          parallel %8.2f ms  serial %8.2f ms  speedup %4.2fx  max|diff| %g\n",
              s, dk, t_par * 1e3, t_ser * 1e3, t_ser / t_par, max_abs_diff(out_par, out_ser));
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  SeededRng rng(42);
  bench_matmul(25, 1200, 128, rng);
  bench_matmul(256, 256, 256, rng);
  bench_matmul(512, 512, 512, rng);
  bench_conv(3, 100, 8, 3, rng);
  bench_conv(8, 49, 16, 3, rng);
  bench_attention(25, 32, rng);
  bench_attention(256, 64, rng);
  return 0;
}
