#include "tensor/adam.hpp"

#include <cmath>

#include "common/error.hpp"

namespace fare::tensor {

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw Error(Errc::shape_mismatch, "adam: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape(), 0.0);
      state.v.emplace_back(p.shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error(Errc::shape_mismatch, "adam: state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    if (p.shape() != g.shape() || p.shape() != state.m[i].shape()) {
      throw Error(Errc::shape_mismatch, "adam: shape mismatch for parameter " + std::to_string(i));
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      p[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
    }
  }
}

}  // namespace fare::tensor
