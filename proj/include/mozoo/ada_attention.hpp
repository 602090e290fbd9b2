#pragma once

#include <cstdint>
#include <vector>

#include "mozoo/autograd.hpp"
#include "mozoo/layout.hpp"

namespace mozoo {

/// Half-open key interval [begin, end).
struct KeyRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const KeyRange&) const = default;
};

/// A run of consecutive query rows sharing one admissible key set.
struct QueryBlock {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<KeyRange> keys;  // sorted, disjoint
  std::size_t key_count() const;
  bool operator==(const QueryBlock&) const = default;
};

/// Boolean L x L attention relation. Row i lists the keys query i may read.
class AttnMask {
 public:
  explicit AttnMask(std::size_t length, bool fill = false);

  static AttnMask identity(std::size_t length);

  std::size_t length() const { return length_; }
  bool admits(std::size_t query, std::size_t key) const { return bits_[query * length_ + key] != 0; }
  void set(std::size_t query, std::size_t key, bool value = true) {
    bits_[query * length_ + key] = value ? 1 : 0;
  }
  std::uint64_t popcount() const;
  std::size_t row_count(std::size_t query) const;

  bool operator==(const AttnMask&) const = default;

 private:
  std::size_t length_;
  std::vector<std::uint8_t> bits_;
};

/// Compact form of an attention relation: query blocks with key ranges.
struct BlockMask {
  std::size_t length = 0;
  std::vector<QueryBlock> blocks;

  AttnMask to_dense() const;
  /// Groups consecutive rows with identical key sets.
  static BlockMask from_dense(const AttnMask& mask);
  std::uint64_t popcount() const;
  std::size_t max_keys() const;
};

/// Asymmetric decoupled attention relation for a layout:
///  - target queries in frame i read every target key, mesh keys of frame i,
///    every mask key and every reference key;
///  - mesh, mask and reference queries read only keys of their own segment.
BlockMask build_ada_blocks(const SegmentLayout& layout);
AttnMask build_ada_mask(const SegmentLayout& layout);

/// Closed form of popcount(build_ada_mask(layout)).
std::uint64_t count_attended_pairs(const SegmentLayout& layout);
std::uint64_t count_dense_pairs(const SegmentLayout& layout);

/// Masked-out logits are set to this value before the softmax.
inline constexpr float kMaskedLogit = -1e9f;

/// Softmax attention over q,k,v[L, heads, dh] with logits scaled by 1/sqrt(dh).
/// Inadmissible keys get kMaskedLogit; a row with no admissible key throws
/// MaskError.
Tensor dense_masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttnMask& mask);
/// Unmasked reference; identical arithmetic to an all-true mask.
Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v);
/// Same relation computed per query block over gathered key ranges, never
/// forming an L x L score matrix.
Tensor blockwise_attention(const Tensor& q, const Tensor& k, const Tensor& v, const SegmentLayout& layout);
Tensor blockwise_attention(const Tensor& q, const Tensor& k, const Tensor& v, const BlockMask& blocks);

namespace ops {
Var dense_masked_attention(const Var& q, const Var& k, const Var& v, const AttnMask& mask);
Var blockwise_attention(const Var& q, const Var& k, const Var& v, const SegmentLayout& layout);
Var blockwise_attention(const Var& q, const Var& k, const Var& v, const BlockMask& blocks);
}  // namespace ops

}  // namespace mozoo
