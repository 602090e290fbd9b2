#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "mozoo/tensor.hpp"

namespace mozoo {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream name, index). All randomness in
/// the project is drawn from named substreams so that data, noise, timestep
/// and init draws can be varied separately and resumed at any index.
Rng substream(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

std::uint64_t mix_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

Tensor randn(const Shape& shape, Rng& rng, float stddev = 1.0f);
Tensor rand_uniform(const Shape& shape, Rng& rng, float lo, float hi);
/// Normal samples re-drawn until they fall within two standard deviations.
Tensor truncated_normal(const Shape& shape, Rng& rng, float stddev);

}  // namespace mozoo
