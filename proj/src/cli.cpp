#include "mozoo/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "mozoo/ada_attention.hpp"
#include "mozoo/errors.hpp"
#include "mozoo/metrics.hpp"
#include "mozoo/random.hpp"

namespace fs = std::filesystem;

namespace mozoo {

// ---------------------------------------------------------------------------
// RunConfig

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &pos);
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

LrSchedule parse_schedule(const std::string& v) {
  if (v == "constant") return LrSchedule::constant;
  if (v == "cosine") return LrSchedule::cosine;
  throw ConfigError("'lr_schedule' expects constant or cosine, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::logic_error&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::pair<std::size_t, std::size_t> parse_size_pair(const std::string& v) {
  const auto x = v.find('x');
  if (x == std::string::npos) throw ConfigError("size must look like HxW, got '" + v + "'");
  return {parse_u64("size", v.substr(0, x)), parse_u64("size", v.substr(x + 1))};
}

}  // namespace

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig rc;
  std::istringstream in(text);
  std::string raw, section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "train" && section != "sample" && section != "data") {
        throw ConfigError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where + "key '" + key + "' outside a section");
    bool known = true;
    try {
      if (section == "model") {
        known = rc.model.set(key, value);
      } else if (section == "train") {
        if (key == "steps") rc.train.steps = parse_u64(key, value);
        else if (key == "lr") rc.train.lr = parse_real(key, value);
        else if (key == "batch") rc.train.batch = parse_u64(key, value);
        else if (key == "seed") rc.train.seed = parse_u64(key, value);
        else if (key == "grad_accum") rc.train.grad_accum = parse_u64(key, value);
        else if (key == "warmup_steps") rc.train.warmup_steps = parse_u64(key, value);
        else if (key == "lr_schedule") rc.train.lr_schedule = parse_schedule(value);
        else known = false;
      } else if (section == "sample") {
        if (key == "steps") rc.sample.steps = parse_u64(key, value);
        else if (key == "seed") rc.sample.seed = parse_u64(key, value);
        else if (key == "ref_modality") rc.sample.ref_modality = parse_modality(value);
        else known = false;
      } else {
        if (key == "frames") rc.data.frames = parse_u64(key, value);
        else if (key == "size") std::tie(rc.data.height, rc.data.width) = parse_size_pair(value);
        else if (key == "count") rc.data.count = parse_u64(key, value);
        else if (key == "seed") rc.data.seed = parse_u64(key, value);
        else known = false;
      }
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    if (!known) throw ConfigError(where + "unknown key '" + key + "' in [" + section + "]");
  }
  rc.validate();
  return rc;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::validate() const {
  model.validate();
  if (train.batch != 1) throw ConfigError("only batch = 1 is supported; use grad_accum for larger batches");
  if (train.grad_accum == 0) throw ConfigError("grad_accum must be >= 1");
  if (!(train.lr > 0.0)) throw ConfigError("lr must be positive");
  if (sample.steps == 0) throw ConfigError("sample steps must be >= 1");
  if (data.frames == 0 || data.height == 0 || data.width == 0) throw ConfigError("data geometry must be positive");
}

// ---------------------------------------------------------------------------
// Pipeline helpers

Conditioning to_conditioning(const TripletSample& s) {
  Conditioning c;
  c.mesh_video = video_to_tensor(s.mesh);
  c.first_frame_mask = mask_to_tensor(s.first_frame_mask());
  c.reference = video_to_tensor(s.reference);
  c.modality = s.modality;
  return c;
}

TrainingExample to_example(const TripletSample& s) {
  if (!s.target) throw ContractError("sample '" + s.id + "' has no target video");
  return {video_to_tensor(*s.target), to_conditioning(s)};
}

Video sample_video(const Checkpoint& ckpt, const TripletSample& s, const SamplerConfig& sampler) {
  const Conditioning cond = to_conditioning(s);
  const Shape shape = cond.mesh_video.shape();
  const VelocityFn velocity = [&](const Tensor& z, double t) {
    return predict_velocity(ckpt.config, ckpt.params, z, cond, t);
  };
  return tensor_to_video(euler_sample(velocity, sampler, shape));
}

// ---------------------------------------------------------------------------
// Attention benchmark

BenchResult bench_attention(std::size_t frames, std::size_t spatial, std::size_t mask_tokens, std::size_t ref_frames,
                            std::size_t iters, std::size_t heads, std::size_t head_dim, std::uint64_t seed) {
  if (iters == 0) throw ContractError("bench needs at least one iteration");
  const SegmentLayout layout = SegmentLayout::from_counts(frames, spatial, mask_tokens, ref_frames);
  layout.validate();
  BenchResult r{frames, spatial, mask_tokens, ref_frames};
  r.dense_pairs = count_dense_pairs(layout);
  r.ada_pairs = count_attended_pairs(layout);

  Rng rng = substream(seed, "bench");
  const Shape shape{layout.total(), heads, head_dim};
  const Tensor q = randn(shape, rng), k = randn(shape, rng), v = randn(shape, rng);
  const AttnMask mask = build_ada_mask(layout);
  const BlockMask blocks = build_ada_blocks(layout);

  auto median_ms = [&](auto&& fn) {
    std::vector<double> ms;
    for (std::size_t i = 0; i < iters; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor out = fn();
      ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      if (out.numel() == 0) throw ContractError("empty attention output");
    }
    std::sort(ms.begin(), ms.end());
    return ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
  };
  r.dense_ms = median_ms([&] { return dense_masked_attention(q, k, v, mask); });
  r.block_ms = median_ms([&] { return blockwise_attention(q, k, v, blocks); });
  return r;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchResult>& rows) {
  out << "F,S,M,R,dense_pairs,ada_pairs,ratio,dense_ms,block_ms\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%zu,%llu,%llu,%.6f,%.4f,%.4f\n", r.frames, r.spatial, r.mask_tokens,
                  r.ref_frames, static_cast<unsigned long long>(r.dense_pairs),
                  static_cast<unsigned long long>(r.ada_pairs), r.ratio(), r.dense_ms, r.block_ms);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::string sample_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%04zu", i);
  return buf;
}

Video read_predicted(const fs::path& dir) {
  std::vector<Video> frames;
  for (std::size_t f = 0;; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "tar_%03zu.ppm", f);
    const fs::path p = dir / name;
    if (!fs::exists(p)) break;
    frames.push_back(decode_pnm(read_file(p.string()), p.string()));
  }
  if (frames.empty()) throw ContractError("no predicted frames in " + dir.string());
  Video v(frames.size(), frames[0].height, frames[0].width, frames[0].channels);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (!frames[f].same_shape(frames[0])) throw DimensionError("predicted frames in " + dir.string() + " differ in size");
    std::copy(frames[f].data.begin(), frames[f].data.end(),
              v.data.begin() + static_cast<std::ptrdiff_t>(f * v.frame_size()));
  }
  return v;
}

void write_predicted(const fs::path& dir, const Video& v) {
  fs::create_directories(dir);
  for (std::size_t f = 0; f < v.frames; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "tar_%03zu.ppm", f);
    write_file((dir / name).string(), encode_pnm(v.frame(f)));
  }
}

// Loads either a dataset root (with a manifest) or a single sample directory.
std::vector<TripletSample> load_samples(const std::string& path) {
  if (fs::exists(fs::path(path) / "manifest.txt")) return read_dataset(path);
  return {read_sample_dir(path)};
}

void check_shapes(const ModelConfig& cfg, const TripletSample& s) {
  const Shape shape{s.mesh.frames, s.mesh.height, s.mesh.width, s.mesh.channels};
  const PatchSize& p = cfg.patch;
  if (s.mesh.frames % p.t || s.mesh.height % p.h || s.mesh.width % p.w || s.mesh.channels != cfg.channels) {
    throw DimensionError("sample '" + s.id + "' video " + shape_str(shape) + " is incompatible with model patch (" +
                         std::to_string(p.t) + "," + std::to_string(p.h) + "," + std::to_string(p.w) + ") and " +
                         std::to_string(cfg.channels) + " channels");
  }
}

struct DatagenArgs {
  std::string out, config;
  std::optional<std::size_t> num;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> frames;
  std::string size, ref_mode;
  bool force = false;
};

int cmd_datagen(const DatagenArgs& a, std::ostream& out) {
  RunConfig rc = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  if (a.num) rc.data.count = *a.num;
  if (a.frames) rc.data.frames = *a.frames;
  if (!a.size.empty()) std::tie(rc.data.height, rc.data.width) = parse_size_pair(a.size);
  if (!a.ref_mode.empty()) rc.sample.ref_modality = parse_modality(a.ref_mode);
  const std::uint64_t seed = a.seed.value_or(rc.data.seed);
  rc.validate();
  if (fs::exists(a.out) && !fs::is_empty(a.out) && !a.force) {
    throw ContractError("output directory " + a.out + " is not empty (use --force)");
  }
  if (a.force && fs::exists(a.out)) fs::remove_all(a.out);
  std::vector<TripletSample> samples;
  for (std::size_t i = 0; i < rc.data.count; ++i) {
    const SceneSpec spec =
        random_scene(mix_seed(seed, "sample", i), rc.data.frames, rc.data.height, rc.data.width, rc.sample.ref_modality);
    TripletSample s = generate_triplet(spec);
    s.id = sample_id(i);
    samples.push_back(std::move(s));
  }
  write_dataset(samples, a.out);
  out << "datagen: wrote " << samples.size() << " triplets (" << rc.data.frames << "x" << rc.data.height << "x"
      << rc.data.width << ", ref " << modality_name(rc.sample.ref_modality) << ") to " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data, config, out, resume, trace;
  int threads = 1;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  if (a.threads != 1) throw ContractError("only --threads 1 is supported");
  const RunConfig rc = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
  const std::vector<TripletSample> samples = read_dataset(a.data);
  std::vector<TrainingExample> examples;
  for (const auto& s : samples) {
    if (!s.target) continue;
    check_shapes(rc.model, s);
    examples.push_back(to_example(s));
  }
  if (examples.empty()) throw ContractError("dataset " + a.data + " holds no samples with a target");

  Checkpoint ckpt;
  if (!a.resume.empty()) {
    ckpt = load_checkpoint(a.resume);
    if (!(ckpt.config == rc.model)) throw ConfigError("checkpoint model config differs from " + a.config);
    if (ckpt.seed != rc.train.seed) throw ConfigError("checkpoint was trained with a different seed");
  } else {
    ckpt.config = rc.model;
    ckpt.params = init_parameters(rc.model, mix_seed(rc.train.seed, "init"));
    ckpt.seed = rc.train.seed;
  }
  TrainConfig tc;
  tc.steps = rc.train.steps > ckpt.step ? rc.train.steps - ckpt.step : 0;
  tc.adam.learning_rate = static_cast<float>(rc.train.lr);
  tc.seed = rc.train.seed;
  tc.grad_accum = rc.train.grad_accum;
  tc.warmup_steps = rc.train.warmup_steps;
  tc.decay_steps = rc.train.lr_schedule == LrSchedule::cosine ? rc.train.steps : 0;

  const std::string trace_path = a.trace.empty() ? a.out + ".loss.csv" : a.trace;
  std::ofstream trace(trace_path, std::ios::trunc);
  if (!trace) throw FormatError(FormatError::Kind::io, "cannot write " + trace_path);
  write_trace_header(trace);
  const auto rows = train_loop(ckpt, examples, tc, [&](const TraceRow& r) { write_trace_row(trace, r); });
  save_checkpoint(ckpt, a.out);
  out << "train: " << rows.size() << " steps (total " << ckpt.step << "), " << parameter_count(ckpt.params)
      << " parameters";
  if (!rows.empty()) out << ", final loss " << rows.back().loss;
  out << ", checkpoint " << a.out << "\n";
  return kExitOk;
}

struct SampleArgs {
  std::string ckpt, sample, out;
  std::size_t steps = 20;
  std::uint64_t seed = 0;
};

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.ckpt);
  const std::vector<TripletSample> samples = load_samples(a.sample);
  for (const auto& s : samples) check_shapes(ckpt.config, s);
  for (const auto& s : samples) {
    const Video v = sample_video(ckpt, s, SamplerConfig{a.steps, a.seed});
    write_predicted(fs::path(a.out) / s.id, v);
  }
  out << "sample: wrote " << samples.size() << " videos (" << a.steps << " steps) to " << a.out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string pred, gt, report;
  bool masked = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!fs::is_directory(a.pred)) throw ContractError("prediction directory not found: " + a.pred);
  if (!fs::is_directory(a.gt)) throw ContractError("ground-truth directory not found: " + a.gt);
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(a.pred)) {
    if (e.is_directory()) ids.push_back(e.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw ContractError("no predictions under " + a.pred);

  std::map<std::string, ManifestEntry> entries;
  const bool has_manifest = fs::exists(fs::path(a.gt) / "manifest.txt");
  if (has_manifest) {
    for (auto& e : read_manifest(a.gt).entries) entries.emplace(e.id, e);
  }
  MetricReport report;
  for (const auto& id : ids) {
    TripletSample gt;
    if (has_manifest) {
      const auto it = entries.find(id);
      if (it == entries.end()) throw ContractError("prediction '" + id + "' has no ground truth in " + a.gt);
      gt = read_sample(a.gt, it->second);
    } else {
      if (!fs::is_directory(fs::path(a.gt) / id)) {
        throw ContractError("prediction '" + id + "' has no ground truth in " + a.gt);
      }
      gt = read_sample_dir((fs::path(a.gt) / id).string());
    }
    if (!gt.target) throw ContractError("sample '" + id + "' has no ground-truth target to evaluate against");
    const Video pred = read_predicted(fs::path(a.pred) / id);
    if (!pred.same_shape(*gt.target)) {
      throw DimensionError("prediction '" + id + "' does not match the ground-truth shape");
    }
    report.rows.push_back(evaluate_pair(id, pred, *gt.target, a.masked ? &gt.masks : nullptr));
  }
  std::ofstream csv(a.report, std::ios::trunc);
  if (!csv) throw FormatError(FormatError::Kind::io, "cannot write " + a.report);
  report.write_csv(csv);
  const MetricRow m = report.mean();
  char buf[160];
  std::snprintf(buf, sizeof(buf), "eval: %zu samples, mean psnr %.3f dB, ssim %.4f, smoothness %.4f\n",
                report.rows.size(), m.psnr_db, m.ssim, m.smoothness);
  out << buf;
  return kExitOk;
}

struct BenchArgs {
  std::size_t frames = 2, spatial = 16, ref_frames = 2, mask_tokens = 16, iters = 5, heads = 4, head_dim = 32;
  std::uint64_t seed = 0;
  std::string csv;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  const BenchResult r =
      bench_attention(a.frames, a.spatial, a.mask_tokens, a.ref_frames, a.iters, a.heads, a.head_dim, a.seed);
  if (!a.csv.empty()) {
    std::ofstream csv(a.csv, std::ios::trunc);
    if (!csv) throw FormatError(FormatError::Kind::io, "cannot write " + a.csv);
    write_bench_csv(csv, {r});
  }
  write_bench_csv(out, {r});
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mozoo: conditioned video diffusion at desk scale"};
  app.require_subcommand(1);

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "Generate a procedural triplet dataset");
  datagen->add_option("--out", dg.out, "Output directory")->required();
  datagen->add_option("--num", dg.num, "Number of triplets");
  datagen->add_option("--seed", dg.seed, "Dataset seed");
  datagen->add_option("--frames", dg.frames, "Frames per clip");
  datagen->add_option("--size", dg.size, "Frame size HxW");
  datagen->add_option("--ref-mode", dg.ref_mode, "Reference modality")->check(CLI::IsMember({"video", "image"}));
  datagen->add_option("--config", dg.config, "Run config ([data] section)");
  datagen->add_flag("--force", dg.force, "Replace a non-empty output directory");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train the model with the rectified-flow loss");
  train->add_option("--data", tr.data, "Dataset directory")->required();
  train->add_option("--config", tr.config, "Run config file");
  train->add_option("--out", tr.out, "Checkpoint to write")->required();
  train->add_option("--resume", tr.resume, "Checkpoint to continue from");
  train->add_option("--trace", tr.trace, "Loss CSV (default: <out>.loss.csv)");
  train->add_option("--threads", tr.threads, "Worker threads (1 only)");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Sample target videos for conditioning inputs");
  sample->add_option("--ckpt", sa.ckpt, "Checkpoint")->required();
  sample->add_option("--sample", sa.sample, "Sample directory or dataset root")->required();
  sample->add_option("--steps", sa.steps, "Euler steps");
  sample->add_option("--seed", sa.seed, "Noise seed");
  sample->add_option("--out", sa.out, "Output directory")->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--pred", ev.pred, "Prediction directory")->required();
  eval->add_option("--gt", ev.gt, "Ground-truth dataset")->required();
  eval->add_option("--report", ev.report, "Report CSV")->required();
  eval->add_flag("--masked", ev.masked, "Score only pixels inside the subject masks");

  BenchArgs be;
  auto* bench = app.add_subcommand("bench-attn", "Time dense-masked against blockwise attention");
  bench->add_option("--frames", be.frames, "Target frames F");
  bench->add_option("--spatial", be.spatial, "Tokens per frame S");
  bench->add_option("--ref-frames", be.ref_frames, "Reference frames R");
  bench->add_option("--mask-tokens", be.mask_tokens, "Mask tokens M");
  bench->add_option("--iters", be.iters, "Timed iterations");
  bench->add_option("--heads", be.heads, "Attention heads");
  bench->add_option("--head-dim", be.head_dim, "Channels per head");
  bench->add_option("--seed", be.seed, "Seed for q, k, v");
  bench->add_option("--csv", be.csv, "CSV output path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*datagen) return cmd_datagen(dg, out);
    if (*train) return cmd_train(tr, out);
    if (*sample) return cmd_sample(sa, out);
    if (*eval) return cmd_eval(ev, out);
    if (*bench) return cmd_bench(be, out);
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << " (step " << e.step() << ")\n";
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mozoo
