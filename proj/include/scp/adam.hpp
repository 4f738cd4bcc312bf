#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "scp/tensor.hpp"

namespace scp {

struct ParamRef {
  std::string name;
  Tensor* tensor;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// One bias-corrected Adam update using each tensor's accumulated grad.
// Throws NonFiniteError naming the parameter if any gradient is NaN/Inf.
void adam_step(std::span<const ParamRef> params, AdamState& state, double lr);

}  // namespace scp
