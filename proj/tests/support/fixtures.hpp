#pragma once

#include <filesystem>
#include <string>

#include "mozoo/cli.hpp"
#include "mozoo/model.hpp"
#include "mozoo/random.hpp"
#include "mozoo/zoodata.hpp"

namespace mozoo::testkit {

inline ModelConfig tiny_config(std::size_t dim = 16, std::size_t heads = 2, std::size_t layers = 2) {
  ModelConfig c;
  c.layers = layers;
  c.heads = heads;
  c.model_dim = dim;
  c.ff_mult = 2;
  c.patch = {1, 4, 4};
  c.time_freq_dim = 8;
  return c;
}

/// Every parameter drawn from N(0, stddev^2), so no path is zero at the start.
inline ParameterSet dense_parameters(const ModelConfig& cfg, std::uint64_t seed, float stddev = 0.2f) {
  ParameterSet p = init_parameters(cfg, seed);
  Rng rng = substream(seed, "dense_parameters");
  for (auto& [name, t] : p) t = randn(t.shape(), rng, stddev);
  return p;
}

inline TripletSample scene_sample(std::uint64_t seed, std::size_t frames, std::size_t size,
                                  RefModality modality = RefModality::video) {
  TripletSample s = generate_triplet(random_scene(seed, frames, size, size, modality));
  s.id = "t" + std::to_string(seed);
  return s;
}

/// Fresh scratch directory under the system temp path.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mozoo_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace mozoo::testkit
