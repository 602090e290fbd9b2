#include "mozoo/random.hpp"

#include <cmath>

namespace mozoo {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ fnv1a(stream)) + index);
}

Rng substream(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  return Rng(mix_seed(seed, stream, index));
}

Tensor randn(const Shape& shape, Rng& rng, float stddev) {
  Tensor out(shape);
  std::normal_distribution<float> dist(0.0f, stddev);
  for (auto& v : out.data()) v = dist(rng);
  return out;
}

Tensor rand_uniform(const Shape& shape, Rng& rng, float lo, float hi) {
  Tensor out(shape);
  std::uniform_real_distribution<float> dist(lo, hi);
  for (auto& v : out.data()) v = dist(rng);
  return out;
}

Tensor truncated_normal(const Shape& shape, Rng& rng, float stddev) {
  Tensor out(shape);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : out.data()) {
    float z = dist(rng);
    while (std::fabs(z) > 2.0f) z = dist(rng);
    v = z * stddev;
  }
  return out;
}

}  // namespace mozoo
