#include "mozoo/model.hpp"

#include <cmath>
#include <memory>
#include <sstream>

#include "mozoo/errors.hpp"
#include "mozoo/ops.hpp"
#include "mozoo/random.hpp"

namespace mozoo {

namespace {

constexpr float kNormEps = 1e-6f;
constexpr float kInitStd = 0.02f;

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + value + "'");
  }
  if (pos != value.size() || v < 0) throw ConfigError("'" + key + "' expects a non-negative integer, got '" + value + "'");
  return static_cast<std::size_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(value, &pos);
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  }
  if (pos != value.size()) throw ConfigError("'" + key + "' expects a number, got '" + value + "'");
  return v;
}

}  // namespace

RopeConfig ModelConfig::rope(std::size_t frames) const {
  const int d = delta > 0 ? delta : static_cast<int>(frames);
  return RopeConfig::with_default_split(head_dim(), d, rope_base);
}

void ModelConfig::validate() const {
  if (layers == 0 || heads == 0 || model_dim == 0 || ff_mult == 0) {
    throw ConfigError("layers, heads, model_dim and ff_mult must be positive");
  }
  if (model_dim % heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " is not divisible by heads " +
                      std::to_string(heads));
  }
  if (head_dim() % 2 != 0) throw ConfigError("head dimension must be even for rotary pairs");
  if (head_dim() / 2 < 3) throw ConfigError("head dimension must hold at least one rotary pair per axis");
  if (patch.t == 0 || patch.h == 0 || patch.w == 0) throw ConfigError("patch sizes must be positive");
  if (channels == 0) throw ConfigError("channels must be positive");
  if (time_freq_dim == 0 || time_freq_dim % 2 != 0) throw ConfigError("time_freq_dim must be even");
  if (!(rope_base > 0.0)) throw ConfigError("rope_base must be positive");
  if (delta < 0) throw ConfigError("delta must be >= 0");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "layers = " << layers << "\n"
     << "heads = " << heads << "\n"
     << "model_dim = " << model_dim << "\n"
     << "ff_mult = " << ff_mult << "\n"
     << "patch_t = " << patch.t << "\n"
     << "patch_h = " << patch.h << "\n"
     << "patch_w = " << patch.w << "\n"
     << "channels = " << channels << "\n"
     << "time_freq_dim = " << time_freq_dim << "\n"
     << "rope_base = " << rope_base << "\n"
     << "delta = " << delta << "\n";
  return os.str();
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
  if (key == "layers") layers = parse_size(key, value);
  else if (key == "heads") heads = parse_size(key, value);
  else if (key == "model_dim") model_dim = parse_size(key, value);
  else if (key == "ff_mult") ff_mult = parse_size(key, value);
  else if (key == "patch_t") patch.t = parse_size(key, value);
  else if (key == "patch_h") patch.h = parse_size(key, value);
  else if (key == "patch_w") patch.w = parse_size(key, value);
  else if (key == "channels") channels = parse_size(key, value);
  else if (key == "time_freq_dim") time_freq_dim = parse_size(key, value);
  else if (key == "rope_base") rope_base = parse_double(key, value);
  else if (key == "delta") delta = static_cast<int>(parse_size(key, value));
  else return false;
  return true;
}

void Conditioning::validate(const Shape& target_shape) const {
  if (target_shape.size() != 4) throw DimensionError("target video must be [frames, H, W, C], got " + shape_str(target_shape));
  if (mesh_video.shape() != target_shape) {
    throw DimensionError("mesh video " + shape_str(mesh_video.shape()) + " does not match target " +
                         shape_str(target_shape));
  }
  const Shape mask_shape{1, target_shape[1], target_shape[2], 1};
  if (first_frame_mask.shape() != mask_shape) {
    throw DimensionError("first-frame mask " + shape_str(first_frame_mask.shape()) + " expected " +
                         shape_str(mask_shape));
  }
  for (float v : first_frame_mask.data()) {
    if (v != 0.0f && v != 1.0f) throw ContractError("first-frame mask must be binary");
  }
  const Shape& r = reference.shape();
  if (r.size() != 4 || r[1] != target_shape[1] || r[2] != target_shape[2] || r[3] != target_shape[3]) {
    throw DimensionError("reference " + shape_str(r) + " does not match target frame size " +
                         shape_str(target_shape));
  }
  if (modality == RefModality::image && r[0] != 1) {
    throw DimensionError("image reference must hold one frame, got " + shape_str(r));
  }
}

Patches patchify(const Tensor& video, const PatchSize& patch) {
  if (video.rank() != 4) throw DimensionError("patchify expects [frames, H, W, C], got " + shape_str(video.shape()));
  const std::size_t F = video.dim(0), H = video.dim(1), W = video.dim(2), C = video.dim(3);
  if (patch.t == 0 || patch.h == 0 || patch.w == 0 || F % patch.t || H % patch.h || W % patch.w) {
    throw DimensionError("patch (" + std::to_string(patch.t) + "," + std::to_string(patch.h) + "," +
                         std::to_string(patch.w) + ") does not divide video " + shape_str(video.shape()));
  }
  Patches p;
  p.frames = F / patch.t;
  p.rows = H / patch.h;
  p.cols = W / patch.w;
  const std::size_t feat = patch.volume() * C;
  p.tokens = Tensor({p.frames * p.rows * p.cols, feat});
  p.sites.reserve(p.frames * p.rows * p.cols);
  std::size_t tok = 0;
  for (std::size_t f = 0; f < p.frames; ++f) {
    for (std::size_t r = 0; r < p.rows; ++r) {
      for (std::size_t c = 0; c < p.cols; ++c, ++tok) {
        p.sites.push_back({f, r, c});
        float* dst = p.tokens.ptr() + tok * feat;
        for (std::size_t dt = 0; dt < patch.t; ++dt) {
          for (std::size_t dy = 0; dy < patch.h; ++dy) {
            const std::size_t src = (((f * patch.t + dt) * H + r * patch.h + dy) * W + c * patch.w) * C;
            std::copy_n(video.ptr() + src, patch.w * C, dst);
            dst += patch.w * C;
          }
        }
      }
    }
  }
  return p;
}

std::vector<std::size_t> unpatchify_index(const PatchSize& patch, const Shape& video_shape) {
  if (video_shape.size() != 4) throw DimensionError("unpatchify expects a [frames, H, W, C] target shape");
  const std::size_t F = video_shape[0], H = video_shape[1], W = video_shape[2], C = video_shape[3];
  if (F % patch.t || H % patch.h || W % patch.w) {
    throw DimensionError("patch does not divide video " + shape_str(video_shape));
  }
  const std::size_t rows = H / patch.h, cols = W / patch.w;
  const std::size_t feat = patch.volume() * C;
  std::vector<std::size_t> index(F * H * W * C);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t tok = ((f / patch.t) * rows + y / patch.h) * cols + x / patch.w;
        const std::size_t within = ((f % patch.t) * patch.h + y % patch.h) * patch.w + x % patch.w;
        for (std::size_t c = 0; c < C; ++c) {
          index[((f * H + y) * W + x) * C + c] = tok * feat + within * C + c;
        }
      }
    }
  }
  return index;
}

Tensor unpatchify(const Tensor& tokens, const PatchSize& patch, const Shape& video_shape) {
  const auto index = unpatchify_index(patch, video_shape);
  if (tokens.numel() != index.size()) {
    throw DimensionError("unpatchify: tokens " + shape_str(tokens.shape()) + " cannot fill " +
                         shape_str(video_shape));
  }
  Tensor out(video_shape);
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = tokens[index[i]];
  return out;
}

PackedSequence pack_sequence(const SegmentTokens& parts, const TokenGrid& grid, const Var& type_embed) {
  const std::size_t s = grid.rows * grid.cols;
  if (s == 0 || grid.frames == 0) throw LayoutError("empty token grid");
  const std::size_t lt = parts.target.shape().at(0);
  const std::size_t lm = parts.mesh.shape().at(0);
  const std::size_t lk = parts.mask.shape().at(0);
  const std::size_t lr = parts.reference.shape().at(0);
  if (lt != grid.frames * s) {
    throw LayoutError("target has " + std::to_string(lt) + " tokens, grid implies " +
                      std::to_string(grid.frames * s));
  }
  if (lm != lt) {
    throw LayoutError("mesh has " + std::to_string(lm) + " tokens but target has " + std::to_string(lt));
  }
  if (lr == 0 || lr % s != 0) {
    throw LayoutError("reference token count " + std::to_string(lr) + " is not a whole number of frames of " +
                      std::to_string(s));
  }
  const std::size_t dim = parts.target.shape().back();
  if (type_embed.shape() != Shape{4, dim}) {
    throw DimensionError("type embedding " + shape_str(type_embed.shape()) + " expected [4," +
                         std::to_string(dim) + "]");
  }
  PackedSequence out;
  out.layout = SegmentLayout{grid.frames, grid.rows, grid.cols, lk, lr / s};
  out.layout.validate();
  out.tokens = ops::concat_rows({ops::add(parts.target, ops::row(type_embed, 0)),
                                 ops::add(parts.mesh, ops::row(type_embed, 1)),
                                 ops::add(parts.mask, ops::row(type_embed, 2)),
                                 ops::add(parts.reference, ops::row(type_embed, 3))});
  return out;
}

ParameterSet init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterSet p;
  Rng rng = substream(seed, "init");
  const std::size_t D = cfg.model_dim, Hd = cfg.hidden_dim(), pf = cfg.patch_features();
  const std::size_t mask_feat = cfg.patch.h * cfg.patch.w;
  auto weight = [&](const std::string& name, std::size_t in, std::size_t out) {
    p[name] = truncated_normal({in, out}, rng, kInitStd);
  };
  auto zeros = [&](const std::string& name, Shape shape) { p[name] = Tensor(std::move(shape)); };

  weight("embed.target.w", pf, D);
  zeros("embed.target.b", {D});
  weight("embed.mesh.w", pf, D);
  zeros("embed.mesh.b", {D});
  weight("embed.mask.w", mask_feat, D);
  zeros("embed.mask.b", {D});
  weight("embed.ref.w", pf, D);
  zeros("embed.ref.b", {D});
  p["embed.type"] = truncated_normal({4, D}, rng, kInitStd);

  weight("time.fc1.w", cfg.time_freq_dim, D);
  zeros("time.fc1.b", {D});
  weight("time.fc2.w", D, D);
  zeros("time.fc2.b", {D});
  weight("time.mod.w", D, 6 * D);
  zeros("time.mod.b", {6 * D});

  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string b = "block" + std::to_string(i) + ".";
    p[b + "mod"] = truncated_normal({6, D}, rng, kInitStd);
    weight(b + "attn.q.w", D, D);
    zeros(b + "attn.q.b", {D});
    weight(b + "attn.k.w", D, D);
    zeros(b + "attn.k.b", {D});
    weight(b + "attn.v.w", D, D);
    zeros(b + "attn.v.b", {D});
    zeros(b + "attn.out.w", {D, D});
    zeros(b + "attn.out.b", {D});
    weight(b + "ff.gate.w", D, Hd);
    zeros(b + "ff.gate.b", {Hd});
    weight(b + "ff.up.w", D, Hd);
    zeros(b + "ff.up.b", {Hd});
    zeros(b + "ff.out.w", {Hd, D});
    zeros(b + "ff.out.b", {D});
  }

  weight("head.mod.w", D, 2 * D);
  zeros("head.mod.b", {2 * D});
  zeros("head.out.w", {D, pf});
  zeros("head.out.b", {pf});
  return p;
}

std::size_t parameter_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.model_dim, Hd = cfg.hidden_dim(), pf = cfg.patch_features();
  const std::size_t mask_feat = cfg.patch.h * cfg.patch.w;
  std::size_t n = 0;
  n += 3 * (pf * D + D) + (mask_feat * D + D) + 4 * D;
  n += cfg.time_freq_dim * D + D + D * D + D + D * 6 * D + 6 * D;
  const std::size_t block = 6 * D + 4 * (D * D + D) + 2 * (D * Hd + Hd) + Hd * D + D;
  n += cfg.layers * block;
  n += D * 2 * D + 2 * D + D * pf + pf;
  return n;
}

ParamVars bind_parameters(Graph& g, const ParameterSet& params, bool requires_grad) {
  ParamVars out;
  for (const auto& [name, t] : params) out.emplace(name, g.leaf(t, requires_grad, name));
  return out;
}

Tensor timestep_features(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor out({dim});
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = t * 1000.0 * freq;
    out[i] = static_cast<float>(std::cos(arg));
    out[half + i] = static_cast<float>(std::sin(arg));
  }
  return out;
}

namespace {

const Var& param(const ParamVars& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ContractError("missing parameter '" + name + "'");
  return it->second;
}

// LN(x) * (1 + scale) + shift, with shift/scale taken from rows of `mod`.
Var modulate(const Var& x, const Var& mod, std::size_t shift_row, std::size_t scale_row) {
  Var normed = ops::layer_norm(x, kNormEps);
  return ops::add(ops::mul(normed, ops::add_scalar(ops::row(mod, scale_row), 1.0f)),
                  ops::row(mod, shift_row));
}

Tensor image_as_clip(const Tensor& image, std::size_t frames) {
  Shape s = image.shape();
  s[0] = frames;
  Tensor out(s);
  for (std::size_t f = 0; f < frames; ++f) {
    std::copy(image.data().begin(), image.data().end(), out.ptr() + f * image.numel());
  }
  return out;
}

}  // namespace

Modulation timestep_embed(Graph& g, const ModelConfig& cfg, const ParamVars& p, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ContractError("timestep must lie in [0,1], got " + std::to_string(t));
  const std::size_t D = cfg.model_dim;
  Var features = g.leaf(timestep_features(t, cfg.time_freq_dim));
  Var hidden = ops::silu(ops::linear(features, param(p, "time.fc1.w"), param(p, "time.fc1.b")));
  Var emb = ops::linear(hidden, param(p, "time.fc2.w"), param(p, "time.fc2.b"));
  Var act = ops::silu(emb);
  Var shared = ops::reshape(ops::linear(act, param(p, "time.mod.w"), param(p, "time.mod.b")), {6, D});
  Modulation m;
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    m.blocks.push_back(ops::add(shared, param(p, "block" + std::to_string(i) + ".mod")));
  }
  m.head = ops::reshape(ops::linear(act, param(p, "head.mod.w"), param(p, "head.mod.b")), {2, D});
  return m;
}

Var forward(Graph& g, const ModelConfig& cfg, const ParamVars& p, const Tensor& noisy_target,
            const Conditioning& cond, double t) {
  cfg.validate();
  if (!(t >= 0.0 && t <= 1.0)) throw ContractError("timestep must lie in [0,1], got " + std::to_string(t));
  cond.validate(noisy_target.shape());
  if (noisy_target.dim(3) != cfg.channels) {
    throw DimensionError("target has " + std::to_string(noisy_target.dim(3)) + " channels, model expects " +
                         std::to_string(cfg.channels));
  }

  const Patches tgt = patchify(noisy_target, cfg.patch);
  const Patches mesh = patchify(cond.mesh_video, cfg.patch);
  const Patches mask = patchify(cond.first_frame_mask, PatchSize{1, cfg.patch.h, cfg.patch.w});
  const Patches ref = patchify(
      cond.modality == RefModality::image ? image_as_clip(cond.reference, cfg.patch.t) : cond.reference,
      cfg.patch);

  const SegmentTokens parts{
      ops::linear(g.leaf(tgt.tokens), param(p, "embed.target.w"), param(p, "embed.target.b")),
      ops::linear(g.leaf(mesh.tokens), param(p, "embed.mesh.w"), param(p, "embed.mesh.b")),
      ops::linear(g.leaf(mask.tokens), param(p, "embed.mask.w"), param(p, "embed.mask.b")),
      ops::linear(g.leaf(ref.tokens), param(p, "embed.ref.w"), param(p, "embed.ref.b"))};
  PackedSequence seq = pack_sequence(parts, TokenGrid{tgt.frames, tgt.rows, tgt.cols}, param(p, "embed.type"));
  const SegmentLayout& layout = seq.layout;

  const RopeConfig rope_cfg = cfg.rope(layout.frames);
  const RopeTable rope(assign_coords(layout, cond.modality, rope_cfg.delta), rope_cfg);
  const BlockMask blocks = build_ada_blocks(layout);
  const Modulation mod = timestep_embed(g, cfg, p, t);

  const std::size_t L = layout.total(), D = cfg.model_dim, heads = cfg.heads, dh = cfg.head_dim();
  Var x = seq.tokens;
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    const std::string b = "block" + std::to_string(i) + ".";
    const Var& m = mod.blocks[i];
    try {
      Var h = modulate(x, m, 0, 1);
      Var q = ops::reshape(ops::linear(h, param(p, b + "attn.q.w"), param(p, b + "attn.q.b")), {L, heads, dh});
      Var k = ops::reshape(ops::linear(h, param(p, b + "attn.k.w"), param(p, b + "attn.k.b")), {L, heads, dh});
      Var v = ops::reshape(ops::linear(h, param(p, b + "attn.v.w"), param(p, b + "attn.v.b")), {L, heads, dh});
      q = ops::rope_rotate(q, rope);
      k = ops::rope_rotate(k, rope);
      Var attn = ops::reshape(ops::blockwise_attention(q, k, v, blocks), {L, D});
      Var o = ops::linear(attn, param(p, b + "attn.out.w"), param(p, b + "attn.out.b"));
      x = ops::add(x, ops::mul(o, ops::row(m, 2)));

      Var h2 = modulate(x, m, 3, 4);
      Var gate = ops::silu(ops::linear(h2, param(p, b + "ff.gate.w"), param(p, b + "ff.gate.b")));
      Var up = ops::linear(h2, param(p, b + "ff.up.w"), param(p, b + "ff.up.b"));
      Var ff = ops::linear(ops::mul(gate, up), param(p, b + "ff.out.w"), param(p, b + "ff.out.b"));
      x = ops::add(x, ops::mul(ff, ops::row(m, 5)));
    } catch (const NumericError& e) {
      throw NumericError("layer " + std::to_string(i) + ": " + e.what());
    }
  }

  Var target_rows = ops::slice_rows(x, 0, layout.target_len());
  Var h = modulate(target_rows, mod.head, 0, 1);
  Var out_tokens = ops::linear(h, param(p, "head.out.w"), param(p, "head.out.b"));
  auto index = std::make_shared<const std::vector<std::size_t>>(
      unpatchify_index(cfg.patch, noisy_target.shape()));
  return ops::gather(out_tokens, index, noisy_target.shape());
}

Tensor predict_velocity(const ModelConfig& cfg, const ParameterSet& params, const Tensor& noisy_target,
                        const Conditioning& cond, double t) {
  Graph g;
  const ParamVars p = bind_parameters(g, params, false);
  return forward(g, cfg, p, noisy_target, cond, t).value();
}

}  // namespace mozoo
