#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mozoo/ada_attention.hpp"
#include "mozoo/autograd.hpp"
#include "mozoo/optim.hpp"
#include "mozoo/rope.hpp"

namespace mozoo {

struct PatchSize {
  std::size_t t = 1;
  std::size_t h = 4;
  std::size_t w = 4;
  std::size_t volume() const { return t * h * w; }
  bool operator==(const PatchSize&) const = default;
};

/// Hyperparameters of the miniature diffusion transformer.
struct ModelConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t model_dim = 128;
  std::size_t ff_mult = 2;
  PatchSize patch{};
  std::size_t channels = 3;
  std::size_t time_freq_dim = 64;
  double rope_base = 10000.0;
  int delta = 0;  // reference temporal offset; 0 means "frame count"

  std::size_t head_dim() const { return model_dim / heads; }
  std::size_t hidden_dim() const { return ff_mult * model_dim; }
  std::size_t patch_features() const { return patch.volume() * channels; }
  RopeConfig rope(std::size_t frames) const;

  /// Throws ConfigError on an invalid combination.
  void validate() const;

  /// `key = value` lines, one per field.
  std::string to_text() const;
  /// Applies one `key = value` assignment; returns false for unknown keys.
  bool set(const std::string& key, const std::string& value);

  bool operator==(const ModelConfig&) const = default;
};

/// Inputs that condition the generation of the target video. Pixel tensors
/// are [frames, H, W, C] in [-1, 1]; the mask is [1, H, W, 1] in {0, 1}.
struct Conditioning {
  Tensor mesh_video;
  Tensor first_frame_mask;
  Tensor reference;
  RefModality modality = RefModality::video;

  void validate(const Shape& target_shape) const;
};

struct TokenSite {
  std::size_t frame = 0;
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const TokenSite&) const = default;
};

/// Tokens ordered frame-major then row-major; features in (dt, dy, dx, c)
/// raster order.
struct Patches {
  Tensor tokens;
  std::vector<TokenSite> sites;
  std::size_t frames = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

Patches patchify(const Tensor& video, const PatchSize& patch);
Tensor unpatchify(const Tensor& tokens, const PatchSize& patch, const Shape& video_shape);

/// Flat source index of every element of unpatchify's output.
std::vector<std::size_t> unpatchify_index(const PatchSize& patch, const Shape& video_shape);

struct SegmentTokens {
  Var target;
  Var mesh;
  Var mask;
  Var reference;
};

struct TokenGrid {
  std::size_t frames = 1;
  std::size_t rows = 1;
  std::size_t cols = 1;
};

struct PackedSequence {
  Var tokens;
  SegmentLayout layout;
};

/// Concatenates [target, mesh, mask, reference] and adds the learned type
/// embedding (rows of `type_embed`, one per segment).
PackedSequence pack_sequence(const SegmentTokens& parts, const TokenGrid& grid, const Var& type_embed);

/// Fresh parameters: truncated normal (sigma 0.02) weights, zero biases and
/// zero residual output projections.
ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed);
std::size_t parameter_count(const ModelConfig& cfg);
std::size_t parameter_count(const ParameterSet& params);

using ParamVars = std::map<std::string, Var>;
ParamVars bind_parameters(Graph& g, const ParameterSet& params, bool requires_grad);

/// Sinusoidal features of t in [0, 1].
Tensor timestep_features(double t, std::size_t dim);

/// Per-block [6, D] rows (shift, scale, gate for attention, then for the
/// feed-forward) and a [2, D] head modulation (shift, scale).
struct Modulation {
  std::vector<Var> blocks;
  Var head;
};
Modulation timestep_embed(Graph& g, const ModelConfig& cfg, const ParamVars& p, double t);

/// Predicted velocity, shaped like `noisy_target`. Only the target segment
/// reaches the output head.
Var forward(Graph& g, const ModelConfig& cfg, const ParamVars& p, const Tensor& noisy_target,
            const Conditioning& cond, double t);

/// Inference-only convenience wrapper.
Tensor predict_velocity(const ModelConfig& cfg, const ParameterSet& params, const Tensor& noisy_target,
                        const Conditioning& cond, double t);

/// Learned parameters plus the state needed to resume training.
struct Checkpoint {
  ModelConfig config;
  ParameterSet params;
  OptimState optim;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mozoo
