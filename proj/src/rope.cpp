#include "mozoo/rope.hpp"

#include <cmath>
#include <memory>

#include "mozoo/errors.hpp"

namespace mozoo {

const char* role_name(Role r) {
  switch (r) {
    case Role::target:
      return "target";
    case Role::mesh:
      return "mesh";
    case Role::mask:
      return "mask";
    case Role::ref_video:
      return "ref_video";
    case Role::ref_image:
      return "ref_image";
  }
  return "?";
}

const char* modality_name(RefModality m) { return m == RefModality::video ? "video" : "image"; }

RefModality parse_modality(const std::string& text) {
  if (text == "video") return RefModality::video;
  if (text == "image") return RefModality::image;
  throw ConfigError("reference modality must be 'video' or 'image', got '" + text + "'");
}

RopeConfig RopeConfig::with_default_split(std::size_t head_dim, int delta, double base) {
  RopeConfig cfg;
  cfg.head_dim = head_dim;
  cfg.base_frequency = base;
  cfg.delta = delta;
  const std::size_t pairs = head_dim / 2;
  cfg.pairs_h = pairs / 3;
  cfg.pairs_w = pairs / 3;
  cfg.pairs_t = pairs - 2 * (pairs / 3);
  cfg.validate();
  return cfg;
}

void RopeConfig::validate() const {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw ConfigError("rotary head_dim must be even and positive, got " + std::to_string(head_dim));
  }
  if (pairs_t == 0 || pairs_h == 0 || pairs_w == 0) {
    throw ConfigError("every rotary axis needs at least one channel pair");
  }
  if (pairs_t + pairs_h + pairs_w != head_dim / 2) {
    throw ConfigError("rotary pair split " + std::to_string(pairs_t) + "+" + std::to_string(pairs_h) +
                      "+" + std::to_string(pairs_w) + " does not cover head_dim " +
                      std::to_string(head_dim));
  }
  if (!(base_frequency > 0.0)) throw ConfigError("rotary base frequency must be positive");
  if (delta <= 0) throw ConfigError("reference offset delta must be positive");
}

std::vector<Role> assign_roles(const SegmentLayout& layout, RefModality modality) {
  layout.validate();
  if (modality == RefModality::image && layout.ref_frames != 1) {
    throw LayoutError("image reference needs exactly one reference frame, " + layout.describe());
  }
  std::vector<Role> roles;
  roles.reserve(layout.total());
  roles.insert(roles.end(), layout.target_len(), Role::target);
  roles.insert(roles.end(), layout.mesh_len(), Role::mesh);
  roles.insert(roles.end(), layout.mask_len(), Role::mask);
  roles.insert(roles.end(), layout.ref_len(),
               modality == RefModality::video ? Role::ref_video : Role::ref_image);
  return roles;
}

std::vector<RoleCoord> assign_coords(const SegmentLayout& layout, RefModality modality, int delta) {
  const auto roles = assign_roles(layout, modality);
  if (delta < static_cast<int>(layout.frames)) {
    throw ContractError("reference offset delta=" + std::to_string(delta) +
                        " is smaller than the frame count " + std::to_string(layout.frames));
  }
  const std::size_t s = layout.tokens_per_frame();
  std::vector<RoleCoord> coords(roles.size());
  for (std::size_t i = 0; i < roles.size(); ++i) {
    const Segment seg = layout.segment_of(i);
    const std::size_t local = i - layout.offset(seg);
    const int t = static_cast<int>(local / s);
    // Mask tokens beyond one frame wrap over the same raster.
    const std::size_t site = local % s;
    const int h = static_cast<int>(site / layout.grid_cols);
    const int w = static_cast<int>(site % layout.grid_cols);
    switch (roles[i]) {
      case Role::target:
      case Role::mesh:
        coords[i] = {t, h, w};
        break;
      case Role::ref_video:
        coords[i] = {t - delta, h, w};
        break;
      case Role::ref_image:
        coords[i] = {-1, h, w};
        break;
      case Role::mask:
        coords[i] = {0, h, w};
        break;
    }
  }
  return coords;
}

RopeTable::RopeTable(const std::vector<RoleCoord>& coords, const RopeConfig& cfg)
    : tokens_(coords.size()), pairs_(cfg.head_dim / 2) {
  cfg.validate();
  // Inverse frequency of pair j on an axis with p pairs: base^(-j/p).
  std::vector<double> freq(pairs_);
  std::vector<int> axis(pairs_);
  const std::size_t bounds[3] = {cfg.pairs_t, cfg.pairs_t + cfg.pairs_h, pairs_};
  const std::size_t counts[3] = {cfg.pairs_t, cfg.pairs_h, cfg.pairs_w};
  for (std::size_t p = 0, a = 0; p < pairs_; ++p) {
    while (p >= bounds[a]) ++a;
    const std::size_t j = p - (a == 0 ? 0 : bounds[a - 1]);
    axis[p] = static_cast<int>(a);
    freq[p] = std::pow(cfg.base_frequency, -static_cast<double>(j) / static_cast<double>(counts[a]));
  }
  cos_.resize(tokens_ * pairs_);
  sin_.resize(tokens_ * pairs_);
  for (std::size_t i = 0; i < tokens_; ++i) {
    const int c[3] = {coords[i].t, coords[i].h, coords[i].w};
    for (std::size_t p = 0; p < pairs_; ++p) {
      const double angle = c[axis[p]] * freq[p];
      cos_[i * pairs_ + p] = static_cast<float>(std::cos(angle));
      sin_[i * pairs_ + p] = static_cast<float>(std::sin(angle));
    }
  }
}

Tensor rope_rotate(const Tensor& x, const RopeTable& table, bool inverse) {
  if (x.rank() != 3) throw DimensionError("rope_rotate expects [tokens, heads, head_dim], got " + shape_str(x.shape()));
  if (x.dim(0) != table.tokens()) {
    throw DimensionError("rope_rotate: " + std::to_string(table.tokens()) + " coordinates for " +
                         std::to_string(x.dim(0)) + " tokens");
  }
  if (x.dim(2) != 2 * table.pairs()) {
    throw ConfigError("rotary table covers head_dim " + std::to_string(2 * table.pairs()) +
                      ", tensor has " + std::to_string(x.dim(2)));
  }
  const std::size_t heads = x.dim(1), dh = x.dim(2), pairs = table.pairs();
  const float sign = inverse ? -1.0f : 1.0f;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    for (std::size_t h = 0; h < heads; ++h) {
      const float* in = x.ptr() + (i * heads + h) * dh;
      float* o = out.ptr() + (i * heads + h) * dh;
      for (std::size_t p = 0; p < pairs; ++p) {
        const float c = table.cos(i, p);
        const float s = sign * table.sin(i, p);
        const float a = in[2 * p], b = in[2 * p + 1];
        o[2 * p] = a * c - b * s;
        o[2 * p + 1] = a * s + b * c;
      }
    }
  }
  return out;
}

Tensor rope_rotate(const Tensor& x, const std::vector<RoleCoord>& coords, const RopeConfig& cfg) {
  if (x.rank() == 3 && x.dim(2) != cfg.head_dim) {
    throw ConfigError("rotary config head_dim " + std::to_string(cfg.head_dim) +
                      " does not match tensor " + shape_str(x.shape()));
  }
  return rope_rotate(x, RopeTable(coords, cfg));
}

namespace ops {

Var rope_rotate(const Var& x, const RopeTable& table) {
  auto shared = std::make_shared<RopeTable>(table);
  Tensor out = mozoo::rope_rotate(x.value(), *shared);
  return x.graph().record("rope_rotate", std::move(out), {x}, [shared](Node& n) {
    n.inputs[0]->accumulate(mozoo::rope_rotate(n.grad, *shared, true));
  });
}

}  // namespace ops
}  // namespace mozoo
