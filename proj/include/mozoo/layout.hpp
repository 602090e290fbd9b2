#pragma once

#include <cstddef>
#include <string>

namespace mozoo {

enum class Segment { target = 0, mesh = 1, mask = 2, reference = 3 };

const char* segment_name(Segment s);

/// Bookkeeping for the packed sequence [target, mesh, mask, reference].
///
/// Target and mesh hold `frames` runs of `tokens_per_frame()` tokens each, the
/// reference holds `ref_frames` such runs, and the mask holds `mask_tokens`
/// tokens. Each frame is a grid_rows x grid_cols raster of patch sites.
struct SegmentLayout {
  std::size_t frames = 1;
  std::size_t grid_rows = 1;
  std::size_t grid_cols = 1;
  std::size_t mask_tokens = 1;
  std::size_t ref_frames = 1;

  /// Layout with a near-square frame grid holding `spatial` tokens.
  static SegmentLayout from_counts(std::size_t frames, std::size_t spatial, std::size_t mask_tokens,
                                   std::size_t ref_frames);

  std::size_t tokens_per_frame() const { return grid_rows * grid_cols; }
  std::size_t target_len() const { return frames * tokens_per_frame(); }
  std::size_t mesh_len() const { return frames * tokens_per_frame(); }
  std::size_t mask_len() const { return mask_tokens; }
  std::size_t ref_len() const { return ref_frames * tokens_per_frame(); }
  std::size_t total() const { return target_len() + mesh_len() + mask_len() + ref_len(); }

  std::size_t offset(Segment s) const;
  std::size_t length(Segment s) const;
  std::size_t end(Segment s) const { return offset(s) + length(s); }

  Segment segment_of(std::size_t token) const;
  /// Frame index of a target/mesh/reference token within its own segment.
  std::size_t frame_of(std::size_t token) const;

  /// Throws LayoutError when any length is zero.
  void validate() const;

  std::string describe() const;
  bool operator==(const SegmentLayout&) const = default;
};

}  // namespace mozoo
