#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "scp/tensor.hpp"

namespace scp {

// Seeded generator with a platform-independent sample stream: the engine is
// std::mt19937_64 (bit-exact by the standard) and all distributions are
// implemented here rather than taken from <random>.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Standard normal (Box-Muller).
  double normal();
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  // Independent child stream keyed by a fixed label.
  Rng derive(std::string_view label) const;

  std::string state() const;
  void set_state(const std::string& s);

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[below(i)]);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t mix_seed(std::uint64_t seed, std::string_view label);

// g = -log(-log(u)), u ~ U(0,1) clamped to [1e-12, 1 - 1e-12].
double gumbel_from_uniform(double u);
Tensor gumbel_noise(Rng& rng, const Shape& shape);

}  // namespace scp
