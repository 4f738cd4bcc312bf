// Serial reference vs. blocked OpenMP GEMM on shapes the model actually runs.
// Usage: bench_kernels [threads]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "scp/kernels.hpp"
#include "scp/rng.hpp"

using namespace scp;
using Gemm = void (*)(std::size_t, std::size_t, std::size_t, std::span<const double>,
                      std::span<const double>, std::span<double>, bool);

namespace {

struct Case {
  const char* what;
  std::size_t m, n, k;
};

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() - 0.5;
  return v;
}

// Best of `reps` wall-clock seconds.
double time_best(const std::function<void()>& f, int reps) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) kernels::set_threads(std::atoi(argv[1]));
  std::printf("threads: %d\n", kernels::max_threads());
  std::printf("%-28s %-3s %10s %10s %8s %10s\n", "shape (m x n x k)", "op", "serial ms",
              "omp ms", "speedup", "max |diff|");

  const Case cases[] = {
      {"GRU input  64x384x192", 64, 384, 192},
      {"GRU hidden 64x384x128", 64, 384, 128},
      {"LM hidden  64x1536x512", 64, 1536, 512},
      {"readout    64x81x256", 64, 81, 256},
      {"square     256x256x256", 256, 256, 256},
  };
  const struct {
    const char* name;
    Gemm fast, ref;
  } ops[] = {{"nn", kernels::gemm_nn, kernels::serial::gemm_nn},
             {"nt", kernels::gemm_nt, kernels::serial::gemm_nt},
             {"tn", kernels::gemm_tn, kernels::serial::gemm_tn}};

  Rng rng(42);
  for (const auto& c : cases) {
    const auto a = random_vec(rng, c.m * c.k);
    const auto b = random_vec(rng, c.k * c.n);
    for (const auto& op : ops) {
      std::vector<double> c_ref(c.m * c.n), c_fast(c.m * c.n);
      const int reps = 5;
      const double t_ref = time_best([&] { op.ref(c.m, c.n, c.k, a, b, c_ref, false); }, reps);
      const double t_fast = time_best([&] { op.fast(c.m, c.n, c.k, a, b, c_fast, false); }, reps);
      double diff = 0.0;
      for (std::size_t i = 0; i < c_ref.size(); ++i) diff = std::max(diff, std::abs(c_ref[i] - c_fast[i]));
      std::printf("%-28s %-3s %10.3f %10.3f %7.2fx %10.2e\n", c.what, op.name, 1e3 * t_ref,
                  1e3 * t_fast, t_ref / t_fast, diff);
    }
  }
  return 0;
}
