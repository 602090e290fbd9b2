#include <gtest/gtest.h>

#include "mozoo/errors.hpp"
#include "mozoo/ops.hpp"

using namespace mozoo;

TEST(Autograd, ChainRuleOnKnownFunction) {
  // f(x, y) = sum(x * y + x^2), df/dx = y + 2x, df/dy = x.
  Graph g;
  const Var x = g.leaf(Tensor({3}, std::vector<float>{1, 2, 3}), true, "x");
  const Var y = g.leaf(Tensor({3}, std::vector<float>{4, 5, 6}), true, "y");
  const Gradients gr = backward(ops::sum(ops::add(ops::mul(x, y), ops::square(x))));
  EXPECT_EQ(gr.of(x).values(), (std::vector<float>{6, 9, 12}));
  EXPECT_EQ(gr.of("y").values(), (std::vector<float>{1, 2, 3}));
}

TEST(Autograd, ReusedNodeAccumulates) {
  Graph g;
  const Var x = g.leaf(Tensor({2}, std::vector<float>{1, -2}), true, "x");
  const Var s = ops::add(x, x);
  const Gradients gr = backward(ops::sum(ops::mul(s, x)));  // 2 x^2
  EXPECT_EQ(gr.of(x).values(), (std::vector<float>{4, -8}));
}

TEST(Autograd, UnusedLeafGetsZeroGradient) {
  Graph g;
  const Var x = g.leaf(Tensor({2}, 1.0f), true, "x");
  const Var unused = g.leaf(Tensor({3}, 1.0f), true, "unused");
  const Gradients gr = backward(ops::sum(x));
  EXPECT_EQ(gr.of(unused).values(), (std::vector<float>(3, 0.0f)));
}

TEST(Autograd, ConstantsCarryNoGradient) {
  Graph g;
  const Var c = g.leaf(Tensor({2}, 3.0f));
  const Var x = g.leaf(Tensor({2}, 1.0f), true, "x");
  const Gradients gr = backward(ops::sum(ops::mul(c, x)));
  EXPECT_FALSE(gr.contains("c"));
  EXPECT_EQ(gr.of(x).values(), (std::vector<float>{3, 3}));
}

TEST(Autograd, NonScalarLossRejected) {
  Graph g;
  const Var x = g.leaf(Tensor({2}, 1.0f), true, "x");
  EXPECT_THROW(backward(ops::square(x)), ContractError);
}

TEST(Autograd, RepeatedBackwardIsIdempotent) {
  Graph g;
  const Var x = g.leaf(Tensor({2}, std::vector<float>{1, 2}), true, "x");
  const Var loss = ops::sum(ops::square(x));
  const Gradients first = backward(loss);
  const Gradients second = backward(loss);
  EXPECT_EQ(first.of(x).values(), second.of(x).values());
}
