#include "mozoo/optim.hpp"

#include <cmath>

#include "mozoo/errors.hpp"

namespace mozoo {

void optim_step(ParameterSet& params, const std::map<std::string, Tensor>& grads, OptimState& state) {
  if (!(state.config.learning_rate >= 0.0f)) throw ContractError("learning rate must be >= 0");

  // Validate everything before touching any parameter so a failed step leaves
  // the state untouched.
  for (const auto& [name, grad] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("gradient for unknown parameter '" + name + "'");
    if (it->second.shape() != grad.shape()) {
      throw DimensionError("gradient " + shape_str(grad.shape()) + " for parameter '" + name +
                           "' of shape " + shape_str(it->second.shape()));
    }
    if (!grad.all_finite()) throw TrainingError("non-finite gradient for parameter '" + name + "'");
  }

  state.step += 1;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(static_cast<double>(c.beta1), t);
  const double correction2 = 1.0 - std::pow(static_cast<double>(c.beta2), t);

  for (const auto& [name, grad] : grads) {
    Tensor& p = params.at(name);
    auto [m_it, m_new] = state.first_moment.try_emplace(name, p.shape());
    auto [v_it, v_new] = state.second_moment.try_emplace(name, p.shape());
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const float g = grad[i];
      m[i] = c.beta1 * m[i] + (1.0f - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0f - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] = static_cast<float>(p[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.eps));
    }
  }
}

}  // namespace mozoo
