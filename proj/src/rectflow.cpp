#include "mozoo/rectflow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "mozoo/errors.hpp"
#include "mozoo/ops.hpp"
#include "mozoo/random.hpp"

namespace mozoo {

Tensor interpolate(const Tensor& z0, const Tensor& eps, double t) {
  if (z0.shape() != eps.shape()) {
    throw DimensionError("interpolate: " + shape_str(z0.shape()) + " vs " + shape_str(eps.shape()));
  }
  if (!(t >= 0.0 && t <= 1.0)) throw ContractError("interpolate: t must lie in [0,1]");
  if (t == 0.0) return z0;
  if (t == 1.0) return eps;
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<float>((1.0 - t) * z0[i] + t * eps[i]);
  }
  return out;
}

NoiseSchedulePoint NoiseSchedulePoint::make(const Tensor& z0, const Tensor& eps, double t) {
  NoiseSchedulePoint p{t, interpolate(z0, eps, t), eps};
  return p;
}

Tensor target_velocity(const Tensor& z0, const Tensor& eps) {
  if (z0.shape() != eps.shape()) {
    throw DimensionError("target_velocity: " + shape_str(z0.shape()) + " vs " + shape_str(eps.shape()));
  }
  Tensor u(z0.shape());
  for (std::size_t i = 0; i < u.numel(); ++i) u[i] = eps[i] - z0[i];
  return u;
}

Var fm_loss(const Var& pred_v, const Tensor& z0, const Tensor& eps) {
  Tensor u = target_velocity(z0, eps);
  if (u.shape() != pred_v.shape()) {
    throw DimensionError("fm_loss: prediction " + shape_str(pred_v.shape()) + " vs target " + shape_str(u.shape()));
  }
  return ops::mse(pred_v, pred_v.graph().leaf(std::move(u)));
}

double fm_loss(const Tensor& pred_v, const Tensor& z0, const Tensor& eps) {
  const Tensor u = target_velocity(z0, eps);
  if (u.shape() != pred_v.shape()) {
    throw DimensionError("fm_loss: prediction " + shape_str(pred_v.shape()) + " vs target " + shape_str(u.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < u.numel(); ++i) {
    const double d = static_cast<double>(pred_v[i]) - u[i];
    acc += d * d;
  }
  return acc / static_cast<double>(u.numel());
}

std::vector<double> SamplerConfig::grid() const {
  if (steps == 0) throw ContractError("sampler needs at least one step");
  std::vector<double> g(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) g[k] = 1.0 - static_cast<double>(k) / static_cast<double>(steps);
  g.back() = 0.0;
  return g;
}

Tensor euler_integrate(const VelocityFn& velocity, const std::vector<double>& grid, Tensor z1) {
  if (grid.size() < 2 || grid.front() != 1.0 || grid.back() != 0.0) {
    throw ContractError("timestep grid must run from 1 to 0");
  }
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] < grid[k - 1])) throw ContractError("timestep grid must be strictly decreasing");
  }
  // The state is carried in double and rounded once per velocity query.
  std::vector<double> state(z1.data().begin(), z1.data().end());
  Tensor z = std::move(z1);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double dt = grid[k] - grid[k + 1];
    Tensor v;
    try {
      v = velocity(z, grid[k]);
    } catch (const NumericError& e) {
      throw SamplingError("sampling step " + std::to_string(k) + ": " + e.what(), static_cast<long>(k));
    }
    if (v.shape() != z.shape()) {
      throw DimensionError("velocity " + shape_str(v.shape()) + " for state " + shape_str(z.shape()));
    }
    if (!v.all_finite()) {
      throw SamplingError("non-finite velocity at sampling step " + std::to_string(k), static_cast<long>(k));
    }
    for (std::size_t i = 0; i < state.size(); ++i) {
      state[i] -= static_cast<double>(v[i]) * dt;
      z[i] = static_cast<float>(state[i]);
    }
    if (!z.all_finite()) {
      throw SamplingError("non-finite state after sampling step " + std::to_string(k), static_cast<long>(k));
    }
  }
  return z;
}

Tensor euler_sample(const VelocityFn& velocity, const SamplerConfig& sampler, const Shape& shape) {
  Rng rng = substream(sampler.seed, "sample_noise");
  return euler_integrate(velocity, sampler.grid(), randn(shape, rng));
}

void write_trace_header(std::ostream& out) { out << "step,t,loss,wall_ms\n"; }

void write_trace_row(std::ostream& out, const TraceRow& row) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%llu,%.9g,%.9g,%.3f\n", static_cast<unsigned long long>(row.step), row.t,
                row.loss, row.wall_ms);
  out << buf;
}

double TrainConfig::learning_rate_at(std::uint64_t step) const {
  double lr = adam.learning_rate;
  if (warmup_steps > 0 && step < warmup_steps) {
    lr *= static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  if (decay_steps > 0) {
    const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(decay_steps));
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  return lr;
}

std::vector<TraceRow> train_loop(Checkpoint& ckpt, const std::vector<TrainingExample>& dataset,
                                 const TrainConfig& cfg, const TrainObserver& observer) {
  if (dataset.empty()) throw ContractError("training dataset is empty");
  if (cfg.grad_accum == 0) throw ContractError("grad_accum must be >= 1");
  ckpt.config.validate();
  ckpt.optim.config = cfg.adam;
  ckpt.seed = cfg.seed;

  std::vector<TraceRow> trace;
  trace.reserve(cfg.steps);
  for (std::size_t i = 0; i < cfg.steps; ++i) {
    const auto started = std::chrono::steady_clock::now();
    const std::uint64_t step = ckpt.step;
    std::map<std::string, Tensor> grads;
    double loss_sum = 0.0;
    double t_first = 0.0;
    for (std::size_t micro = 0; micro < cfg.grad_accum; ++micro) {
      const std::uint64_t draw = step * cfg.grad_accum + micro;
      Rng data_rng = substream(cfg.seed, "data", draw);
      Rng t_rng = substream(cfg.seed, "t", draw);
      Rng noise_rng = substream(cfg.seed, "noise", draw);
      const std::size_t index = std::uniform_int_distribution<std::size_t>(0, dataset.size() - 1)(data_rng);
      const double t = std::uniform_real_distribution<double>(0.0, 1.0)(t_rng);
      if (micro == 0) t_first = t;
      const TrainingExample& ex = dataset[index];
      const Tensor eps = randn(ex.target.shape(), noise_rng);

      Graph g;
      const ParamVars p = bind_parameters(g, ckpt.params, true);
      Var loss;
      try {
        Var v = forward(g, ckpt.config, p, interpolate(ex.target, eps, t), ex.cond, t);
        loss = fm_loss(v, ex.target, eps);
      } catch (const NumericError& e) {
        throw TrainingError("training step " + std::to_string(step) + ": " + e.what(), static_cast<long>(step));
      }
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw TrainingError("non-finite loss at training step " + std::to_string(step), static_cast<long>(step));
      }
      loss_sum += value;
      const Gradients gr = backward(loss);
      for (const auto& [name, grad] : gr.named()) {
        auto [it, inserted] = grads.try_emplace(name, grad);
        if (!inserted) {
          for (std::size_t j = 0; j < grad.numel(); ++j) it->second[j] += grad[j];
        }
      }
    }
    if (cfg.grad_accum > 1) {
      const float inv = 1.0f / static_cast<float>(cfg.grad_accum);
      for (auto& [name, grad] : grads) {
        for (auto& v : grad.data()) v *= inv;
      }
    }
    ckpt.optim.config.learning_rate = static_cast<float>(cfg.learning_rate_at(step));
    try {
      optim_step(ckpt.params, grads, ckpt.optim);
    } catch (const TrainingError& e) {
      throw TrainingError("training step " + std::to_string(step) + ": " + e.what(), static_cast<long>(step));
    }
    ckpt.step += 1;
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    TraceRow row{step, t_first, loss_sum / static_cast<double>(cfg.grad_accum), ms};
    trace.push_back(row);
    if (observer) observer(row);
  }
  ckpt.optim.config = cfg.adam;
  return trace;
}

}  // namespace mozoo
