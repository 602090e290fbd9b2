#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "mozoo/autograd.hpp"

namespace mozoo::testkit {

using LossFn = std::function<Var(Graph&, const std::map<std::string, Var>&)>;

struct GradCheck {
  std::map<std::string, double> rel_err;  // per input tensor
  double worst = 0.0;
  std::string worst_name;
};

inline double eval_loss(const std::map<std::string, Tensor>& inputs, const LossFn& fn) {
  Graph g;
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : inputs) vars.emplace(name, g.leaf(t, false, name));
  return fn(g, vars).value().item();
}

/// Compares reverse-mode gradients with fourth-order central differences. The error of a
/// tensor is |g_a - g_n| / max(|g_a|, |g_n|) in the 2-norm.
inline GradCheck grad_check(std::map<std::string, Tensor> inputs, const LossFn& fn, double h = 1e-2) {
  std::map<std::string, Tensor> analytic;
  {
    Graph g;
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : inputs) vars.emplace(name, g.leaf(t, true, name));
    const Gradients grads = backward(fn(g, vars));
    for (const auto& [name, v] : vars) analytic.emplace(name, grads.of(v));
  }
  GradCheck out;
  for (auto& [name, t] : inputs) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const float saved = t[i];
      // Central difference over the step actually representable in float.
      const auto central = [&](double step) {
        const float hi = static_cast<float>(saved + step), lo = static_cast<float>(saved - step);
        t[i] = hi;
        const double up = eval_loss(inputs, fn);
        t[i] = lo;
        const double down = eval_loss(inputs, fn);
        t[i] = saved;
        return (up - down) / (double(hi) - double(lo));
      };
      // Richardson extrapolation of two central differences.
      const double numeric = (4.0 * central(h) - central(2.0 * h)) / 3.0;
      const double a = analytic.at(name)[i];
      diff += (a - numeric) * (a - numeric);
      na += a * a;
      nn += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(std::max(na, nn)), 1e-12);
    const double err = std::sqrt(diff) / denom;
    out.rel_err[name] = err;
    if (err >= out.worst) {
      out.worst = err;
      out.worst_name = name;
    }
  }
  return out;
}

}  // namespace mozoo::testkit
