#include "mpa/nn/adam.hpp"

#include <cmath>

#include "mpa/error.hpp"

namespace mpa::nn {

AdamState AdamState::for_store(const ParameterStore& store, AdamConfig config) {
  AdamState s;
  s.config = config;
  s.first_moment = zero_gradients(store);
  s.second_moment = zero_gradients(store);
  return s;
}

void adam_step(ParameterStore& params, const GradientSet& grads, AdamState& state,
               float learning_rate) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(state.first_moment.size()) + " moment buffers");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& shape = params.value(i).shape();
    if (grads[i].shape() != shape || state.first_moment[i].shape() != shape ||
        state.second_moment[i].shape() != shape) {
      throw ShapeError("adam_step: shape mismatch for '" + params.name(i) + "'");
    }
  }
  const AdamConfig& c = state.config;
  const float lr = learning_rate > 0.0f ? learning_rate : c.learning_rate;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(static_cast<double>(c.beta1), t);
  const double bc2 = 1.0 - std::pow(static_cast<double>(c.beta2), t);
  const double step_size = lr / bc1;
  const double inv_sqrt_bc2 = 1.0 / std::sqrt(bc2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0f - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0f - c.beta2) * g[j] * g[j];
      const double denom = std::sqrt(static_cast<double>(v[j])) * inv_sqrt_bc2 + c.epsilon;
      p[j] = static_cast<float>(p[j] - step_size * m[j] / denom);
    }
  }
}

double global_norm(const GradientSet& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (float v : g.data()) sq += static_cast<double>(v) * v;
  }
  return std::sqrt(sq);
}

double clip_global_norm(GradientSet& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const auto s = static_cast<float>(max_norm / norm);
    for (auto& g : grads) {
      for (float& v : g.data()) v *= s;
    }
  }
  return norm;
}

}  // namespace mpa::nn
