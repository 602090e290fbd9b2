#include "mozoo/layout.hpp"

#include <cmath>
#include <sstream>

#include "mozoo/errors.hpp"

namespace mozoo {

const char* segment_name(Segment s) {
  switch (s) {
    case Segment::target:
      return "target";
    case Segment::mesh:
      return "mesh";
    case Segment::mask:
      return "mask";
    case Segment::reference:
      return "reference";
  }
  return "?";
}

SegmentLayout SegmentLayout::from_counts(std::size_t frames, std::size_t spatial,
                                         std::size_t mask_tokens, std::size_t ref_frames) {
  if (spatial == 0) throw LayoutError("tokens per frame must be >= 1");
  std::size_t rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(spatial)));
  while (rows > 1 && spatial % rows != 0) --rows;
  rows = std::max<std::size_t>(rows, 1);
  SegmentLayout l{frames, rows, spatial / rows, mask_tokens, ref_frames};
  l.validate();
  return l;
}

std::size_t SegmentLayout::offset(Segment s) const {
  switch (s) {
    case Segment::target:
      return 0;
    case Segment::mesh:
      return target_len();
    case Segment::mask:
      return target_len() + mesh_len();
    case Segment::reference:
      return target_len() + mesh_len() + mask_len();
  }
  return 0;
}

std::size_t SegmentLayout::length(Segment s) const {
  switch (s) {
    case Segment::target:
      return target_len();
    case Segment::mesh:
      return mesh_len();
    case Segment::mask:
      return mask_len();
    case Segment::reference:
      return ref_len();
  }
  return 0;
}

Segment SegmentLayout::segment_of(std::size_t token) const {
  if (token >= total()) throw LayoutError("token " + std::to_string(token) + " outside " + describe());
  if (token < offset(Segment::mesh)) return Segment::target;
  if (token < offset(Segment::mask)) return Segment::mesh;
  if (token < offset(Segment::reference)) return Segment::mask;
  return Segment::reference;
}

std::size_t SegmentLayout::frame_of(std::size_t token) const {
  const Segment s = segment_of(token);
  if (s == Segment::mask) throw LayoutError("mask tokens carry no frame index");
  return (token - offset(s)) / tokens_per_frame();
}

void SegmentLayout::validate() const {
  if (frames == 0 || grid_rows == 0 || grid_cols == 0 || mask_tokens == 0 || ref_frames == 0) {
    throw LayoutError("every segment needs at least one token: " + describe());
  }
}

std::string SegmentLayout::describe() const {
  std::ostringstream os;
  os << "layout(F=" << frames << ", S=" << grid_rows << "x" << grid_cols << ", L_msk=" << mask_tokens
     << ", F_ref=" << ref_frames << ")";
  return os.str();
}

}  // namespace mozoo
