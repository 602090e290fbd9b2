#pragma once

#include <compare>
#include <vector>

#include "mozoo/autograd.hpp"
#include "mozoo/layout.hpp"

namespace mozoo {

enum class Role { target, mesh, mask, ref_video, ref_image };
enum class RefModality { video, image };

const char* role_name(Role r);
const char* modality_name(RefModality m);
RefModality parse_modality(const std::string& text);

/// Rotary coordinate of one token. Temporal indices may be negative.
struct RoleCoord {
  int t = 0;
  int h = 0;
  int w = 0;
  auto operator<=>(const RoleCoord&) const = default;
};

/// Rotary channel layout. Channel pairs (2j, 2j+1) are assigned in order to
/// the temporal, height and width axes.
struct RopeConfig {
  std::size_t head_dim = 0;
  double base_frequency = 10000.0;
  std::size_t pairs_t = 0;
  std::size_t pairs_h = 0;
  std::size_t pairs_w = 0;
  int delta = 1;

  /// Near-even split: ⌊P/3⌋ pairs for each spatial axis, the rest temporal.
  static RopeConfig with_default_split(std::size_t head_dim, int delta, double base = 10000.0);
  void validate() const;
};

/// Role of every token in the layout.
std::vector<Role> assign_roles(const SegmentLayout& layout, RefModality modality);

/// Role-aware coordinates: target and mesh tokens share (t, h, w); video
/// references are shifted to t - delta; an image reference sits at t = -1;
/// mask tokens are anchored at t = 0.
std::vector<RoleCoord> assign_coords(const SegmentLayout& layout, RefModality modality, int delta);

/// Per-token cos/sin of every rotary pair, shared by all heads and layers.
class RopeTable {
 public:
  RopeTable(const std::vector<RoleCoord>& coords, const RopeConfig& cfg);

  std::size_t tokens() const { return tokens_; }
  std::size_t pairs() const { return pairs_; }
  float cos(std::size_t token, std::size_t pair) const { return cos_[token * pairs_ + pair]; }
  float sin(std::size_t token, std::size_t pair) const { return sin_[token * pairs_ + pair]; }

 private:
  std::size_t tokens_;
  std::size_t pairs_;
  std::vector<float> cos_;
  std::vector<float> sin_;
};

/// Rotates x[tokens, heads, head_dim]; `inverse` applies the transpose.
Tensor rope_rotate(const Tensor& x, const RopeTable& table, bool inverse = false);
Tensor rope_rotate(const Tensor& x, const std::vector<RoleCoord>& coords, const RopeConfig& cfg);

namespace ops {
Var rope_rotate(const Var& x, const RopeTable& table);
}

}  // namespace mozoo
