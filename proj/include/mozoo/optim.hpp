#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "mozoo/tensor.hpp"

namespace mozoo {

/// Named parameters; std::map keeps iteration order deterministic.
using ParameterSet = std::map<std::string, Tensor>;

struct AdamConfig {
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adaptive-moment optimizer state. Moments are created lazily on the first
/// step that sees a parameter.
struct OptimState {
  AdamConfig config;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter that has a gradient.
/// Throws TrainingError naming the parameter on a non-finite gradient.
void optim_step(ParameterSet& params, const std::map<std::string, Tensor>& grads, OptimState& state);

}  // namespace mozoo
