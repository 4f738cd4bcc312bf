#pragma once

// Dense row-major GEMM kernels used by the autograd core.
//
// Two implementations live side by side. `scp::kernels::serial` is the plain
// triple-loop reference kept for testing; the functions directly in
// `scp::kernels` are blocked and parallelized over output rows with OpenMP.
// Each output element is produced by exactly one thread with the same
// summation order for any thread count, so results do not depend on
// OMP_NUM_THREADS.

#include <cstddef>
#include <span>

namespace scp::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// C[m x n] (+)= A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// C[m x n] (+)= A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

// Number of OpenMP threads the parallel kernels use (1 when built without OpenMP).
int max_threads();
void set_threads(int n);

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c, bool accumulate);

}  // namespace serial

}  // namespace scp::kernels
