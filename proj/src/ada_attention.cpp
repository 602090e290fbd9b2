#include "mozoo/ada_attention.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "mozoo/errors.hpp"

namespace mozoo {

std::size_t QueryBlock::key_count() const {
  std::size_t n = 0;
  for (const auto& r : keys) n += r.size();
  return n;
}

AttnMask::AttnMask(std::size_t length, bool fill)
    : length_(length), bits_(length * length, fill ? 1 : 0) {}

AttnMask AttnMask::identity(std::size_t length) {
  AttnMask m(length);
  for (std::size_t i = 0; i < length; ++i) m.set(i, i);
  return m;
}

std::uint64_t AttnMask::popcount() const {
  return static_cast<std::uint64_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t AttnMask::row_count(std::size_t query) const {
  const auto* row = bits_.data() + query * length_;
  return static_cast<std::size_t>(std::count(row, row + length_, std::uint8_t{1}));
}

AttnMask BlockMask::to_dense() const {
  AttnMask m(length);
  for (const auto& b : blocks) {
    for (std::size_t q = b.begin; q < b.end; ++q) {
      for (const auto& r : b.keys) {
        for (std::size_t k = r.begin; k < r.end; ++k) m.set(q, k);
      }
    }
  }
  return m;
}

BlockMask BlockMask::from_dense(const AttnMask& mask) {
  BlockMask out;
  out.length = mask.length();
  auto row_ranges = [&](std::size_t q) {
    std::vector<KeyRange> ranges;
    for (std::size_t k = 0; k < mask.length();) {
      if (!mask.admits(q, k)) {
        ++k;
        continue;
      }
      const std::size_t start = k;
      while (k < mask.length() && mask.admits(q, k)) ++k;
      ranges.push_back({start, k});
    }
    return ranges;
  };
  for (std::size_t q = 0; q < mask.length(); ++q) {
    auto ranges = row_ranges(q);
    if (!out.blocks.empty() && out.blocks.back().keys == ranges) {
      out.blocks.back().end = q + 1;
    } else {
      out.blocks.push_back({q, q + 1, std::move(ranges)});
    }
  }
  return out;
}

std::uint64_t BlockMask::popcount() const {
  std::uint64_t n = 0;
  for (const auto& b : blocks) n += static_cast<std::uint64_t>(b.end - b.begin) * b.key_count();
  return n;
}

std::size_t BlockMask::max_keys() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n = std::max(n, b.key_count());
  return n;
}

BlockMask build_ada_blocks(const SegmentLayout& layout) {
  layout.validate();
  const std::size_t s = layout.tokens_per_frame();
  const std::size_t mesh0 = layout.offset(Segment::mesh);
  const std::size_t mask0 = layout.offset(Segment::mask);
  const std::size_t ref0 = layout.offset(Segment::reference);
  BlockMask out;
  out.length = layout.total();
  for (std::size_t f = 0; f < layout.frames; ++f) {
    // Mask and reference segments are adjacent, so they form one key range.
    out.blocks.push_back({f * s,
                          (f + 1) * s,
                          {{0, layout.target_len()},
                           {mesh0 + f * s, mesh0 + (f + 1) * s},
                           {mask0, layout.total()}}});
  }
  out.blocks.push_back({mesh0, mask0, {{mesh0, mask0}}});
  out.blocks.push_back({mask0, ref0, {{mask0, ref0}}});
  out.blocks.push_back({ref0, layout.total(), {{ref0, layout.total()}}});
  return out;
}

AttnMask build_ada_mask(const SegmentLayout& layout) {
  layout.validate();
  // Built directly from the per-segment rules rather than through the block
  // form, so the two representations can be checked against each other.
  const std::size_t L = layout.total();
  AttnMask m(L);
  for (std::size_t q = 0; q < L; ++q) {
    const Segment qs = layout.segment_of(q);
    for (std::size_t k = 0; k < L; ++k) {
      const Segment ks = layout.segment_of(k);
      bool ok = false;
      if (qs == Segment::target) {
        ok = ks != Segment::mesh || layout.frame_of(k) == layout.frame_of(q);
      } else {
        ok = ks == qs;
      }
      if (ok) m.set(q, k);
    }
  }
  return m;
}

std::uint64_t count_attended_pairs(const SegmentLayout& layout) {
  layout.validate();
  const std::uint64_t tgt = layout.target_len(), mesh = layout.mesh_len(), msk = layout.mask_len(),
                      ref = layout.ref_len(), s = layout.tokens_per_frame();
  return tgt * (tgt + s + msk + ref) + mesh * mesh + msk * msk + ref * ref;
}

std::uint64_t count_dense_pairs(const SegmentLayout& layout) {
  const std::uint64_t L = layout.total();
  return L * L;
}

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t length) {
  if (q.rank() != 3 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("attention expects equal [L, heads, dh] q/k/v, got " + shape_str(q.shape()) +
                         ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  if (q.dim(0) != length) {
    throw DimensionError("attention mask covers " + std::to_string(length) + " tokens, q has " +
                         std::to_string(q.dim(0)));
  }
}

// Rows of one head, copied out of [L, heads, dh] for the listed ranges.
RowMat gather_head(const Tensor& x, std::size_t head, const std::vector<KeyRange>& ranges,
                   std::size_t rows) {
  const std::size_t heads = x.dim(1), dh = x.dim(2);
  RowMat out(rows, dh);
  std::size_t r = 0;
  for (const auto& range : ranges) {
    for (std::size_t i = range.begin; i < range.end; ++i, ++r) {
      std::copy_n(x.ptr() + (i * heads + head) * dh, dh, out.row(r).data());
    }
  }
  return out;
}

void scatter_add_head(Tensor& x, std::size_t head, const std::vector<KeyRange>& ranges,
                      const RowMat& rows) {
  const std::size_t heads = x.dim(1), dh = x.dim(2);
  std::size_t r = 0;
  for (const auto& range : ranges) {
    for (std::size_t i = range.begin; i < range.end; ++i, ++r) {
      float* dst = x.ptr() + (i * heads + head) * dh;
      const float* src = rows.row(r).data();
      for (std::size_t c = 0; c < dh; ++c) dst[c] += src[c];
    }
  }
}

// Row softmax in place; entries with mask 0 are forced to kMaskedLogit first.
void softmax_rows(RowMat& s, const AttnMask* mask, std::size_t row0) {
  const Eigen::Index cols = s.cols();
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    float* row = s.row(r).data();
    if (mask) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!mask->admits(row0 + static_cast<std::size_t>(r), static_cast<std::size_t>(c))) {
          row[c] = kMaskedLogit;
        }
      }
    }
    const float m = *std::max_element(row, row + cols);
    double total = 0.0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double e = std::exp(static_cast<double>(row[c]) - m);
      row[c] = static_cast<float>(e);
      total += e;
    }
    const double inv = 1.0 / total;
    for (Eigen::Index c = 0; c < cols; ++c) row[c] = static_cast<float>(row[c] * inv);
  }
}

// Saved softmax probabilities per (head, block), in block-major order.
struct AttentionPlan {
  BlockMask blocks;
  const AttnMask* mask = nullptr;  // dense path only; owned by the caller/closure
  std::shared_ptr<const AttnMask> owned_mask;
  std::vector<RowMat> probs;
};

Tensor attention_forward(const Tensor& q, const Tensor& k, const Tensor& v, AttentionPlan& plan,
                         bool keep_probs) {
  const std::size_t heads = q.dim(1), dh = q.dim(2);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Tensor out(q.shape());
  if (keep_probs) plan.probs.reserve(heads * plan.blocks.blocks.size());
  for (std::size_t h = 0; h < heads; ++h) {
    for (const auto& b : plan.blocks.blocks) {
      const std::size_t nq = b.end - b.begin;
      const std::size_t nk = b.key_count();
      const RowMat qb = gather_head(q, h, {{b.begin, b.end}}, nq);
      const RowMat kb = gather_head(k, h, b.keys, nk);
      const RowMat vb = gather_head(v, h, b.keys, nk);
      RowMat s = (qb * kb.transpose()) * scale;
      softmax_rows(s, plan.mask, b.begin);
      const RowMat ob = s * vb;
      for (std::size_t r = 0; r < nq; ++r) {
        std::copy_n(ob.row(static_cast<Eigen::Index>(r)).data(), dh,
                    out.ptr() + ((b.begin + r) * heads + h) * dh);
      }
      if (keep_probs) plan.probs.push_back(std::move(s));
    }
  }
  return out;
}

void attention_backward(Node& n, const AttentionPlan& plan) {
  Node* qn = n.inputs[0];
  Node* kn = n.inputs[1];
  Node* vn = n.inputs[2];
  const Tensor& q = qn->value;
  const Tensor& k = kn->value;
  const Tensor& v = vn->value;
  const std::size_t heads = q.dim(1), dh = q.dim(2);
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  Tensor dq(q.shape()), dk(k.shape()), dv(v.shape());
  std::size_t idx = 0;
  for (std::size_t h = 0; h < heads; ++h) {
    for (const auto& b : plan.blocks.blocks) {
      const RowMat& p = plan.probs[idx++];
      const std::size_t nq = b.end - b.begin;
      const std::size_t nk = b.key_count();
      const std::vector<KeyRange> qrange{{b.begin, b.end}};
      const RowMat qb = gather_head(q, h, qrange, nq);
      const RowMat kb = gather_head(k, h, b.keys, nk);
      const RowMat vb = gather_head(v, h, b.keys, nk);
      const RowMat dob = gather_head(n.grad, h, qrange, nq);

      scatter_add_head(dv, h, b.keys, p.transpose() * dob);
      RowMat ds = dob * vb.transpose();
      for (Eigen::Index r = 0; r < ds.rows(); ++r) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < ds.cols(); ++c) dot += static_cast<double>(ds(r, c)) * p(r, c);
        for (Eigen::Index c = 0; c < ds.cols(); ++c) {
          ds(r, c) = static_cast<float>(p(r, c) * (ds(r, c) - dot));
        }
      }
      ds *= scale;
      scatter_add_head(dq, h, qrange, ds * kb);
      scatter_add_head(dk, h, b.keys, ds.transpose() * qb);
    }
  }
  if (qn->requires_grad) qn->accumulate(dq);
  if (kn->requires_grad) kn->accumulate(dk);
  if (vn->requires_grad) vn->accumulate(dv);
}

BlockMask single_block(std::size_t length) {
  BlockMask b;
  b.length = length;
  b.blocks.push_back({0, length, {{0, length}}});
  return b;
}

void require_nonempty_rows(const AttnMask& mask) {
  for (std::size_t i = 0; i < mask.length(); ++i) {
    if (mask.row_count(i) == 0) {
      throw MaskError("attention row " + std::to_string(i) + " has no admissible key");
    }
  }
}

void require_nonempty_blocks(const BlockMask& blocks) {
  for (const auto& b : blocks.blocks) {
    if (b.key_count() == 0) {
      throw MaskError("attention rows [" + std::to_string(b.begin) + "," + std::to_string(b.end) +
                      ") have no admissible key");
    }
  }
}

}  // namespace

Tensor dense_masked_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttnMask& mask) {
  check_qkv(q, k, v, mask.length());
  require_nonempty_rows(mask);
  AttentionPlan plan{single_block(mask.length()), &mask, nullptr, {}};
  return attention_forward(q, k, v, plan, false);
}

Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 3) throw DimensionError("attention expects [L, heads, dh], got " + shape_str(q.shape()));
  check_qkv(q, k, v, q.dim(0));
  AttentionPlan plan{single_block(q.dim(0)), nullptr, nullptr, {}};
  return attention_forward(q, k, v, plan, false);
}

Tensor blockwise_attention(const Tensor& q, const Tensor& k, const Tensor& v, const BlockMask& blocks) {
  check_qkv(q, k, v, blocks.length);
  require_nonempty_blocks(blocks);
  AttentionPlan plan{blocks, nullptr, nullptr, {}};
  return attention_forward(q, k, v, plan, false);
}

Tensor blockwise_attention(const Tensor& q, const Tensor& k, const Tensor& v, const SegmentLayout& layout) {
  return blockwise_attention(q, k, v, build_ada_blocks(layout));
}

namespace ops {

Var dense_masked_attention(const Var& q, const Var& k, const Var& v, const AttnMask& mask) {
  check_qkv(q.value(), k.value(), v.value(), mask.length());
  require_nonempty_rows(mask);
  auto owned = std::make_shared<const AttnMask>(mask);
  auto plan = std::make_shared<AttentionPlan>(AttentionPlan{single_block(mask.length()), owned.get(), owned, {}});
  Tensor out = attention_forward(q.value(), k.value(), v.value(), *plan, true);
  return q.graph().record("dense_masked_attention", std::move(out), {q, k, v},
                          [plan](Node& n) { attention_backward(n, *plan); });
}

Var blockwise_attention(const Var& q, const Var& k, const Var& v, const BlockMask& blocks) {
  check_qkv(q.value(), k.value(), v.value(), blocks.length);
  require_nonempty_blocks(blocks);
  auto plan = std::make_shared<AttentionPlan>(AttentionPlan{blocks, nullptr, nullptr, {}});
  const bool need_grad = q.requires_grad() || k.requires_grad() || v.requires_grad();
  Tensor out = attention_forward(q.value(), k.value(), v.value(), *plan, need_grad);
  return q.graph().record("blockwise_attention", std::move(out), {q, k, v},
                          [plan](Node& n) { attention_backward(n, *plan); });
}

Var blockwise_attention(const Var& q, const Var& k, const Var& v, const SegmentLayout& layout) {
  return blockwise_attention(q, k, v, build_ada_blocks(layout));
}

}  // namespace ops
}  // namespace mozoo
