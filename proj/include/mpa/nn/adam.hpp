#pragma once

#include <cstdint>
#include <vector>

#include "mpa/nn/autograd.hpp"

namespace mpa::nn {

struct AdamConfig {
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.98f;
  float epsilon = 1e-8f;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static AdamState for_store(const ParameterStore& store, AdamConfig config = {});
};

// One bias-corrected Adam update. `learning_rate` overrides the configured
// rate when positive (for schedules). Throws ShapeError if the gradient set,
// the moments and the store disagree.
void adam_step(ParameterStore& params, const GradientSet& grads, AdamState& state,
               float learning_rate = -1.0f);

// Global L2 norm over all buffers.
double global_norm(const GradientSet& grads);

// Rescales so the global norm is at most max_norm; returns the norm before
// clipping.
double clip_global_norm(GradientSet& grads, double max_norm);

}  // namespace mpa::nn
