#include <gtest/gtest.h>

#include <cmath>

#include "mozoo/errors.hpp"
#include "mozoo/optim.hpp"

using namespace mozoo;

TEST(Adam, MatchesHandComputedUpdates) {
  ParameterSet params{{"w", Tensor({2}, std::vector<float>{0.5f, -1.0f})}};
  OptimState state;
  state.config.learning_rate = 0.1f;
  const std::vector<std::vector<float>> grads{{1.0f, -2.0f}, {0.5f, 0.25f}, {-3.0f, 1.0f}};

  double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {0.5, -1.0};
  for (std::size_t step = 0; step < grads.size(); ++step) {
    optim_step(params, {{"w", Tensor({2}, grads[step])}}, state);
    const double t = static_cast<double>(step + 1);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[step][i];
      v[i] = 0.999 * v[i] + 0.001 * grads[step][i] * grads[step][i];
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      EXPECT_NEAR(params.at("w")[i], w[i], 1e-5) << "step " << step << " element " << i;
    }
  }
  EXPECT_EQ(state.step, 3u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet params{{"w", Tensor({3}, 0.0f)}};
  OptimState state;
  state.config.learning_rate = 0.01f;
  optim_step(params, {{"w", Tensor({3}, std::vector<float>{5.0f, -0.1f, 2.0f})}}, state);
  EXPECT_NEAR(params.at("w")[0], -0.01f, 1e-6);
  EXPECT_NEAR(params.at("w")[1], 0.01f, 1e-6);
}

TEST(Adam, NanGradientNamesParameterAndLeavesStateUntouched) {
  ParameterSet params{{"a", Tensor({1}, 1.0f)}, {"b", Tensor({1}, 2.0f)}};
  OptimState state;
  try {
    optim_step(params, {{"a", Tensor({1}, 1.0f)}, {"b", Tensor({1}, std::nanf(""))}}, state);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos) << e.what();
  }
  EXPECT_FLOAT_EQ(params.at("a")[0], 1.0f);
  EXPECT_EQ(state.step, 0u);
}

TEST(Adam, ShapeMismatchRejected) {
  ParameterSet params{{"a", Tensor({2}, 1.0f)}};
  OptimState state;
  EXPECT_THROW(optim_step(params, {{"a", Tensor({3}, 1.0f)}}, state), DimensionError);
}
