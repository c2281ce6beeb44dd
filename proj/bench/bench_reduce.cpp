#include <functional>
// Compares the serial reference reduction against the OpenMP kernel on the
// per-leaf objective sums that dominate evaluation on large trees. Both run
// the same fixed-chunk association, so the outputs must agree bit for bit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "stochdual/extreal.hpp"
#include "stochdual/parallel.hpp"

using namespace stochdual;

namespace {

double time_of(const std::function<double()>& fn, double* result) {
  // warm up once, then best of three
  *result = fn();
  double best = 1e300;
  for (int rep = 0; rep < 3; ++rep) {
    auto t0 = std::chrono::steady_clock::now();
    double r = fn();
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r != *result) std::puts("MISMATCH");
    best = std::min(best, dt);
  }
  return best;
}

}  // namespace

int main() {
  const std::size_t n = 1 << 22;
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> claim(n), gain(n), prob(n);
  for (std::size_t i = 0; i < n; ++i) {
    claim[i] = u(rng);
    gain[i] = u(rng);
    prob[i] = 1.0 / static_cast<double>(n);
  }

  // quadratic-loss scenario term, as in the hedging objective
  auto term = [&](std::size_t i) {
    double z = claim[i] - gain[i];
    return prob[i] * 0.5 * z * z;
  };
  // exponential-loss variant (heavier per-element work)
  auto term_exp = [&](std::size_t i) { return prob[i] * std::exp(claim[i] - gain[i]); };

  double r1, r2;
  double ts = time_of([&] { return chunked_sum_serial<double>(n, term); }, &r1);
  double tp = time_of([&] { return chunked_sum_parallel<double>(n, term); }, &r2);
  std::printf("quadratic terms  n=%zu\n", n);
  std::printf("  serial   %8.3f ms\n", ts * 1e3);
  std::printf("  parallel %8.3f ms   speedup %.2fx\n", tp * 1e3, ts / tp);
  std::printf("  bitwise equal: %s\n", r1 == r2 ? "yes" : "NO");

  double e1, e2;
  ts = time_of([&] { return chunked_sum_serial<double>(n, term_exp); }, &e1);
  tp = time_of([&] { return chunked_sum_parallel<double>(n, term_exp); }, &e2);
  std::printf("exponential terms n=%zu\n", n);
  std::printf("  serial   %8.3f ms\n", ts * 1e3);
  std::printf("  parallel %8.3f ms   speedup %.2fx\n", tp * 1e3, ts / tp);
  std::printf("  bitwise equal: %s\n", e1 == e2 ? "yes" : "NO");

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (OpenMP disabled)\n");
#endif
  return (r1 == r2 && e1 == e2) ? 0 : 1;
}
