#pragma once

#include <cstddef>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stochdual {

// Chunked deterministic reductions.
//
// Both variants sum term(i) for i in [0,n) with identical association:
// fixed-size chunks are accumulated left to right, then chunk totals are
// added in chunk order. The OpenMP kernel only distributes the independent
// chunk accumulations, so serial and parallel results are bit-identical for
// any thread count.

inline constexpr std::size_t kReduceChunk = 64;

template <class T, class F>
T chunked_sum_serial(std::size_t n, F&& term) {
  const std::size_t nchunks = (n + kReduceChunk - 1) / kReduceChunk;
  T total{};
  for (std::size_t c = 0; c < nchunks; ++c) {
    const std::size_t lo = c * kReduceChunk;
    const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
    T acc{};
    for (std::size_t i = lo; i < hi; ++i) acc += term(i);
    total += acc;
  }
  return total;
}

template <class T, class F>
T chunked_sum_parallel(std::size_t n, F&& term) {
  const std::size_t nchunks = (n + kReduceChunk - 1) / kReduceChunk;
  if (nchunks <= 1) return chunked_sum_serial<T>(n, term);
  std::vector<T> partial(nchunks);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long c = 0; c < static_cast<long>(nchunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kReduceChunk;
    const std::size_t hi = lo + kReduceChunk < n ? lo + kReduceChunk : n;
    T acc{};
    for (std::size_t i = lo; i < hi; ++i) acc += term(i);
    partial[static_cast<std::size_t>(c)] = acc;
  }
  T total{};
  for (std::size_t c = 0; c < nchunks; ++c) total += partial[c];
  return total;
}

// Default entry point used by objective/residual evaluations.
template <class T, class F>
T chunked_sum(std::size_t n, F&& term) {
#ifdef _OPENMP
  if (n >= 4 * kReduceChunk) return chunked_sum_parallel<T>(n, term);
#endif
  return chunked_sum_serial<T>(n, term);
}

}  // namespace stochdual
