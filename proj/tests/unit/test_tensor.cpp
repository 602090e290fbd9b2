#include <gtest/gtest.h>

#include <tuple>

#include <cmath>

#include "gradcheck.hpp"
#include "mozoo/errors.hpp"
#include "mozoo/ops.hpp"
#include "mozoo/random.hpp"

using namespace mozoo;

namespace {

Tensor random_tensor(const Shape& s, std::uint64_t seed) {
  Rng rng = substream(seed, "test");
  return randn(s, rng);
}

// Triple-loop reference product for 2-D operands.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i) {
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < a.dim(1); ++k) acc += double(a.at({i, k})) * b.at({k, j});
      c.at({i, j}) = static_cast<float>(acc);
    }
  }
  return c;
}

}  // namespace

TEST(Tensor, ShapeAndFill) {
  Tensor t({2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_FLOAT_EQ(t.at({1, 2}), 1.5f);
  EXPECT_EQ(shape_str(t.shape()), "[2, 3]");
}

TEST(Tensor, ZeroDimensionRejected) {
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>(3)), DimensionError);
}

TEST(Tensor, ItemRequiresOneElement) {
  EXPECT_FLOAT_EQ(Tensor::scalar(2.0f).item(), 2.0f);
  EXPECT_THROW(Tensor({2}).item(), ContractError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.values(), t.values());
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Tensor, FiniteChecks) {
  Tensor t({3}, 0.0f);
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nanf("");
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(require_finite(t, "t"), NumericError);
}

TEST(Kernels, MatmulMatchesTripleLoop) {
  const Tensor a = random_tensor({7, 5}, 1), b = random_tensor({5, 9}, 2);
  EXPECT_LT(max_abs_diff(kernels::matmul(a, b), naive_matmul(a, b)), 1e-5);
}

TEST(Kernels, MatmulShapeMismatch) {
  EXPECT_THROW(kernels::matmul(Tensor({2, 3}), Tensor({4, 2})), DimensionError);
}

TEST(Kernels, SoftmaxRowsSumToOne) {
  const Tensor p = kernels::softmax_lastdim(random_tensor({4, 6}, 5));
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 6; ++c) s += p.at({r, c});
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Ops, BroadcastAddSuffixAndGeneral) {
  Graph g;
  const Tensor a = random_tensor({2, 3, 4}, 6);
  const Tensor b = random_tensor({4}, 7);
  const Tensor c = random_tensor({2, 1, 4}, 8);
  const Tensor s = ops::add(g.leaf(a), g.leaf(b)).value();
  const Tensor t = ops::add(g.leaf(a), g.leaf(c)).value();
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_FLOAT_EQ(s.at({i, j, k}), a.at({i, j, k}) + b.at({k}));
        EXPECT_FLOAT_EQ(t.at({i, j, k}), a.at({i, j, k}) + c.at({i, 0, k}));
      }
    }
  }
  EXPECT_THROW(ops::add(g.leaf(a), g.leaf(Tensor({3}))), DimensionError);
}

TEST(Ops, LayerNormZeroMeanUnitVariance) {
  Graph g;
  const Tensor y = ops::layer_norm(g.leaf(random_tensor({3, 16}, 9)), 1e-6f).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (std::size_t c = 0; c < 16; ++c) m += y.at({r, c});
    m /= 16;
    for (std::size_t c = 0; c < 16; ++c) v += (y.at({r, c}) - m) * (y.at({r, c}) - m);
    EXPECT_NEAR(m, 0.0, 1e-5);
    EXPECT_NEAR(v / 16, 1.0, 1e-3);
  }
}

TEST(Ops, SliceConcatRoundTrip) {
  Graph g;
  const Var x = g.leaf(random_tensor({5, 3}, 10));
  const Var y = ops::concat_rows({ops::slice_rows(x, 0, 2), ops::slice_rows(x, 2, 5)});
  EXPECT_EQ(y.value(), x.value());
  EXPECT_THROW(ops::slice_rows(x, 3, 6), DimensionError);
}

TEST(Ops, RecordRejectsNonFinite) {
  Graph g;
  Tensor big({2}, 1e30f);
  EXPECT_THROW(ops::square(g.leaf(big)), NumericError);
}

// Central-difference checks of every differentiable op.

using testkit::grad_check;

struct OpCase {
  const char* name;
  std::map<std::string, Tensor> inputs;
  testkit::LossFn fn;
};

class OpGradient : public ::testing::TestWithParam<std::tuple<int, int>> {};

std::vector<OpCase> op_cases(std::uint64_t trial) {
  auto w = [=](std::uint64_t s, Shape shape) { return random_tensor(shape, 100 + s + 1000 * trial); };
  // Weighted sum so every output element carries a distinct gradient.
  auto wsum = [=](Graph& g, const Var& y, std::uint64_t seed) {
    return ops::sum(ops::mul(y, g.leaf(random_tensor(y.shape(), 500 + seed + 1000 * trial))));
  };
  std::vector<OpCase> c;
  c.push_back({"add", {{"a", w(1, {3, 4})}, {"b", w(2, {4})}},
               [=](Graph& g, const auto& v) { return wsum(g, ops::add(v.at("a"), v.at("b")), 1); }});
  c.push_back({"sub", {{"a", w(3, {2, 3, 4})}, {"b", w(4, {2, 1, 4})}},
               [=](Graph& g, const auto& v) { return wsum(g, ops::sub(v.at("a"), v.at("b")), 2); }});
  c.push_back({"mul", {{"a", w(5, {3, 4})}, {"b", w(6, {3, 4})}},
               [=](Graph& g, const auto& v) { return wsum(g, ops::mul(v.at("a"), v.at("b")), 3); }});
  c.push_back({"scale", {{"a", w(7, {5})}},
               [=](Graph& g, const auto& v) { return wsum(g, ops::add_scalar(ops::scale(v.at("a"), 1.7f), 0.3f), 4); }});
  c.push_back({"matmul", {{"a", w(8, {2, 3, 4})}, {"b", w(9, {4, 5})}},
               [=](Graph& g, const auto& v) { return wsum(g, ops::matmul(v.at("a"), v.at("b")), 5); }});
  c.push_back({"linear", {{"x", w(10, {6, 4})}, {"w", w(11, {4, 3})}, {"b", w(12, {3})}},
               [=](Graph& g, const auto& v) { return wsum(g, ops::linear(v.at("x"), v.at("w"), v.at("b")), 6); }});
  c.push_back({"silu", {{"a", w(13, {10})}},
               [=](Graph& g, const auto& v) { return wsum(g, ops::silu(v.at("a")), 7); }});
  c.push_back({"softmax", {{"a", w(14, {3, 6})}},
               [=](Graph& g, const auto& v) { return wsum(g, ops::softmax_lastdim(v.at("a")), 8); }});
  c.push_back({"layer_norm", {{"x", w(15, {4, 8})}, {"g", w(16, {8})}, {"b", w(17, {8})}},
               [=](Graph& g, const auto& v) {
                 return wsum(g, ops::layer_norm(v.at("x"), v.at("g"), v.at("b"), 1e-6f), 9);
               }});
  c.push_back({"mean_mse", {{"a", w(18, {4, 3})}, {"b", w(19, {4, 3})}},
               [=](Graph&, const auto& v) { return ops::add(ops::mse(v.at("a"), v.at("b")), ops::mean(v.at("a"))); }});
  c.push_back({"rows", {{"a", w(20, {6, 3})}, {"b", w(21, {2, 3})}},
               [=](Graph& g, const auto& v) {
                 const Var cat = ops::concat_rows({ops::slice_rows(v.at("a"), 1, 4), v.at("b"), ops::slice_rows(v.at("a"), 5, 6)});
                 return wsum(g, ops::reshape(cat, {2, 9}), 10);
               }});
  c.push_back({"gather", {{"a", w(22, {2, 5})}},
               [=](Graph& g, const auto& v) {
                 auto idx = std::make_shared<const std::vector<std::size_t>>(std::vector<std::size_t>{4, 0, 0, 9, 3, 7});
                 return wsum(g, ops::gather(v.at("a"), idx, {3, 2}), 11);
               }});
  return c;
}

TEST_P(OpGradient, MatchesCentralDifferences) {
  const auto [op, trial] = GetParam();
  const OpCase c = op_cases(static_cast<std::uint64_t>(trial))[op];
  const auto r = grad_check(c.inputs, c.fn);
  EXPECT_LT(r.worst, 1e-3) << c.name << " trial " << trial << ": worst input " << r.worst_name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradient, ::testing::Combine(::testing::Range(0, 12), ::testing::Range(0, 10)));
