#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mozoo/model.hpp"
#include "mozoo/rectflow.hpp"
#include "mozoo/zoodata.hpp"

namespace mozoo {

/// Process exit codes shared by every command.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitNumeric = 3 };

enum class LrSchedule { constant, cosine };

/// Run configuration read from `[section]` / `key = value` text. Later
/// assignments override earlier ones; unknown sections or keys are rejected.
struct RunConfig {
  ModelConfig model;

  struct Train {
    std::size_t steps = 200;  // total optimizer steps, counted across resumes
    double lr = 1e-3;
    std::size_t batch = 1;
    std::uint64_t seed = 0;
    std::size_t grad_accum = 1;
    std::size_t warmup_steps = 0;
    LrSchedule lr_schedule = LrSchedule::constant;  // cosine decays to zero at `steps`
  } train;

  struct Sample {
    std::size_t steps = 20;
    std::uint64_t seed = 0;
    RefModality ref_modality = RefModality::video;
  } sample;

  struct Data {
    std::size_t frames = 4;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t count = 8;
    std::uint64_t seed = 0;
  } data;

  /// Throws ConfigError with the offending line.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  void validate() const;
};

/// Model-space conditioning of a sample.
Conditioning to_conditioning(const TripletSample& s);
/// Throws ContractError for samples without a target.
TrainingExample to_example(const TripletSample& s);

/// Samples a target video for `s` with the checkpoint's model.
Video sample_video(const Checkpoint& ckpt, const TripletSample& s, const SamplerConfig& sampler);

struct BenchResult {
  std::size_t frames = 0, spatial = 0, mask_tokens = 0, ref_frames = 0;
  std::uint64_t dense_pairs = 0, ada_pairs = 0;
  double dense_ms = 0.0;  // medians over iterations
  double block_ms = 0.0;
  double ratio() const { return static_cast<double>(ada_pairs) / static_cast<double>(dense_pairs); }
};

/// Times dense-masked and blockwise attention on random q, k, v.
BenchResult bench_attention(std::size_t frames, std::size_t spatial, std::size_t mask_tokens,
                            std::size_t ref_frames, std::size_t iters, std::size_t heads = 4,
                            std::size_t head_dim = 32, std::uint64_t seed = 0);
void write_bench_csv(std::ostream& out, const std::vector<BenchResult>& rows);

/// Entry point for the `mozoo` executable. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mozoo
