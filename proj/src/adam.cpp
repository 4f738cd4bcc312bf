#include "scp/adam.hpp"

#include <cmath>

#include "scp/error.hpp"

namespace scp {

void adam_step(std::span<const ParamRef> params, AdamState& state, double lr) {
  if (!(lr > 0.0)) throw ContractError("adam_step: learning rate must be positive");
  for (const auto& p : params) {
    for (double g : p.tensor->grad()) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient for parameter " + p.name);
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& p : params) {
    auto& m = state.m[p.name];
    auto& v = state.v[p.name];
    auto data = p.tensor->data();
    auto grad = p.tensor->grad();
    if (m.empty()) {
      m.assign(data.size(), 0.0);
      v.assign(data.size(), 0.0);
    } else if (m.size() != data.size()) {
      throw DimensionError("adam_step: moment shape changed for " + p.name);
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace scp
