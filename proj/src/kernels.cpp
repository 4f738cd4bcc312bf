#include "scp/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace scp::kernels {

namespace {

// Rows per task; large enough that tiny GEMMs stay on one thread.
constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kParallelMinWork = 1 << 15;

bool worth_parallel(std::size_t m, std::size_t n, std::size_t k) {
  return m * n * k >= kParallelMinWork && m >= 2 * kRowBlock;
}

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      dst[c * rows + r] = src[r * cols + c];
    }
  }
}

// Rows [i0, i1) of C = A * B.
inline void nn_rows(std::size_t i0, std::size_t i1, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c, bool accumulate) {
  std::size_t i = i0;
  for (; i + kRowBlock <= i1; i += kRowBlock) {
    double* c0 = c + (i + 0) * n;
    double* c1 = c + (i + 1) * n;
    double* c2 = c + (i + 2) * n;
    double* c3 = c + (i + 3) * n;
    if (!accumulate) {
      std::fill(c0, c0 + n, 0.0);
      std::fill(c1, c1 + n, 0.0);
      std::fill(c2, c2 + n, 0.0);
      std::fill(c3, c3 + n, 0.0);
    }
    const double* a0 = a + (i + 0) * k;
    const double* a1 = a + (i + 1) * k;
    const double* a2 = a + (i + 2) * k;
    const double* a3 = a + (i + 3) * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      const double x0 = a0[p], x1 = a1[p], x2 = a2[p], x3 = a3[p];
      for (std::size_t j = 0; j < n; ++j) {
        const double bj = brow[j];
        c0[j] += x0 * bj;
        c1[j] += x1 * bj;
        c2[j] += x2 * bj;
        c3[j] += x3 * bj;
      }
    }
  }
  for (; i < i1; ++i) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      const double x = arow[p];
      for (std::size_t j = 0; j < n; ++j) crow[j] += x * brow[j];
    }
  }
}

void nn_dispatch(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c, bool accumulate) {
  const std::size_t blocks = (m + kRowBlock - 1) / kRowBlock;
#ifdef _OPENMP
  if (worth_parallel(m, n, k) && omp_get_max_threads() > 1) {
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < static_cast<std::ptrdiff_t>(blocks); ++blk) {
      const std::size_t i0 = static_cast<std::size_t>(blk) * kRowBlock;
      nn_rows(i0, std::min(m, i0 + kRowBlock), n, k, a, b, c, accumulate);
    }
    return;
  }
#endif
  (void)blocks;
  nn_rows(0, m, n, k, a, b, c, accumulate);
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  assert(a.size() >= m * k && b.size() >= k * n && c.size() >= m * n);
  nn_dispatch(m, n, k, a.data(), b.data(), c.data(), accumulate);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  assert(a.size() >= m * k && b.size() >= n * k && c.size() >= m * n);
  std::vector<double> bt(k * n);
  transpose(n, k, b.data(), bt.data());
  nn_dispatch(m, n, k, a.data(), bt.data(), c.data(), accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  assert(a.size() >= k * m && b.size() >= k * n && c.size() >= m * n);
  // Transposing A keeps the inner loop contiguous in both operands and the
  // per-element summation order (ascending over k) identical to serial::gemm_tn.
  std::vector<double> at(m * k);
  transpose(k, m, a.data(), at.data());
  nn_dispatch(m, n, k, at.data(), b.data(), c.data(), accumulate);
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

}  // namespace serial

}  // namespace scp::kernels
