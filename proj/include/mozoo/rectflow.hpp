#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "mozoo/autograd.hpp"
#include "mozoo/model.hpp"

namespace mozoo {

/// z_t = (1 - t) z0 + t eps. Exact at both endpoints.
Tensor interpolate(const Tensor& z0, const Tensor& eps, double t);

/// A point on the straight noising path, validated on construction.
struct NoiseSchedulePoint {
  double t = 0.0;
  Tensor z_t;
  Tensor epsilon;

  static NoiseSchedulePoint make(const Tensor& z0, const Tensor& eps, double t);
};

/// Target velocity u = eps - z0.
Tensor target_velocity(const Tensor& z0, const Tensor& eps);

/// Mean squared error between the predicted velocity and eps - z0.
Var fm_loss(const Var& pred_v, const Tensor& z0, const Tensor& eps);
double fm_loss(const Tensor& pred_v, const Tensor& z0, const Tensor& eps);

struct SamplerConfig {
  std::size_t steps = 20;
  std::uint64_t seed = 0;

  /// t_k = 1 - k/steps, k = 0..steps.
  std::vector<double> grid() const;
};

using VelocityFn = std::function<Tensor(const Tensor& z, double t)>;

/// Euler integration of dz/dt = v from t = 1 (seeded standard normal) to t = 0.
Tensor euler_sample(const VelocityFn& velocity, const SamplerConfig& sampler, const Shape& shape);
/// Same integration from a caller-provided starting point z1.
Tensor euler_integrate(const VelocityFn& velocity, const std::vector<double>& grid, Tensor z1);

/// One training example in model space ([-1, 1] pixels).
struct TrainingExample {
  Tensor target;
  Conditioning cond;
};

struct TrainConfig {
  std::size_t steps = 200;
  AdamConfig adam{};
  std::uint64_t seed = 0;
  std::size_t grad_accum = 1;
  /// Linear warmup length in global steps.
  std::size_t warmup_steps = 0;
  /// Cosine decay to zero over this many global steps; 0 keeps the rate constant.
  std::size_t decay_steps = 0;

  /// Learning rate for global step `step`.
  double learning_rate_at(std::uint64_t step) const;
};

struct TraceRow {
  std::uint64_t step = 0;
  double t = 0.0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

void write_trace_header(std::ostream& out);
void write_trace_row(std::ostream& out, const TraceRow& row);

/// Called after each optimizer step.
using TrainObserver = std::function<void(const TraceRow&)>;

/// Continues training `ckpt` for `cfg.steps` optimizer steps. Every draw for
/// step k (example index, t, noise) comes from substreams keyed by (seed, k),
/// so resuming from a saved checkpoint reproduces an uninterrupted run.
std::vector<TraceRow> train_loop(Checkpoint& ckpt, const std::vector<TrainingExample>& dataset,
                                 const TrainConfig& cfg, const TrainObserver& observer = {});

}  // namespace mozoo
