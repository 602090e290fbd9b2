// Acceptance checks. Each run evaluates one criterion and prints a single
// "PASS criterion N: ..." or "FAIL criterion N: ..." line.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ada_oracle.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "mozoo/ada_attention.hpp"
#include "mozoo/cli.hpp"
#include "mozoo/errors.hpp"
#include "mozoo/metrics.hpp"
#include "mozoo/model.hpp"
#include "mozoo/ops.hpp"
#include "mozoo/random.hpp"
#include "mozoo/rectflow.hpp"
#include "mozoo/rope.hpp"
#include "mozoo/zoodata.hpp"

using namespace mozoo;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Options {
  std::string workdir;
  std::size_t overfit_steps = 3000;
  std::size_t efficacy_steps = 24000;
  std::size_t sample_steps = 20;
  double lr = 2e-3;
  std::size_t warmup_steps = 100;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

SegmentLayout random_layout(Rng& rng, std::size_t max_frames, std::size_t max_spatial, std::size_t max_total) {
  for (;;) {
    SegmentLayout l;
    l.frames = uniform_int(rng, 1, max_frames);
    l.grid_rows = uniform_int(rng, 1, 6);
    l.grid_cols = uniform_int(rng, 1, 6);
    l.mask_tokens = uniform_int(rng, 1, 36);
    l.ref_frames = uniform_int(rng, 1, max_frames);
    if (l.tokens_per_frame() <= max_spatial && l.total() <= max_total) return l;
  }
}

struct Qkv {
  Tensor q, k, v;
};

Qkv random_qkv(Rng& rng, std::size_t length, std::size_t heads, std::size_t head_dim) {
  return {randn({length, heads, head_dim}, rng), randn({length, heads, head_dim}, rng),
          randn({length, heads, head_dim}, rng)};
}

// ---------------------------------------------------------------------------

Outcome blockwise_matches_dense(const Options&) {
  const auto t0 = Clock::now();
  float worst = 0.0f, worst_oracle = 0.0f;
  for (std::uint64_t trial = 0; trial < 30; ++trial) {
    Rng rng = substream(101, "c1", trial);
    const SegmentLayout l = random_layout(rng, 4, 36, 256);
    const std::size_t heads = uniform_int(rng, 1, 4), dh = 4 * uniform_int(rng, 1, 4);
    const Qkv x = random_qkv(rng, l.total(), heads, dh);
    const Tensor dense = dense_masked_attention(x.q, x.k, x.v, build_ada_mask(l));
    const Tensor block = blockwise_attention(x.q, x.k, x.v, l);
    worst = std::max(worst, max_abs_diff(dense, block));
    worst_oracle = std::max(worst_oracle, max_abs_diff(block, testkit::oracle_attention(x.q, x.k, x.v, l)));
  }
  const double secs = seconds_since(t0);
  const bool pass = worst < 1e-5f && worst_oracle < 1e-5f && secs < 10.0;
  return {pass, "30 layouts, max|block-dense|=" + fmt("%.3g", worst) + ", max|block-oracle|=" +
                    fmt("%.3g", worst_oracle) + ", " + fmt("%.2f", secs) + " s"};
}

// Replaces the rows [begin, end) of every tensor with fresh draws.
Qkv perturb_rows(Qkv x, std::size_t begin, std::size_t end, Rng& rng) {
  for (Tensor* t : {&x.q, &x.k, &x.v}) {
    const std::size_t row = t->numel() / t->dim(0);
    const Tensor fresh = randn({(end - begin) * row}, rng);
    std::copy(fresh.ptr(), fresh.ptr() + fresh.numel(), t->ptr() + begin * row);
  }
  return x;
}

// Largest difference between two outputs over rows [begin, end).
float row_diff(const Tensor& a, const Tensor& b, std::size_t begin, std::size_t end) {
  const std::size_t row = a.numel() / a.dim(0);
  float d = 0.0f;
  for (std::size_t i = begin * row; i < end * row; ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

Outcome unidirectional_and_local(const Options&) {
  float cond_change = 0.0f, locality = 0.0f, own_frame = 1e30f;
  bool exact = true;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng = substream(202, "c2", trial);
    SegmentLayout l = random_layout(rng, 4, 36, 256);
    if (l.frames < 2) l.frames = 2;
    const std::size_t heads = uniform_int(rng, 1, 3), dh = 8;
    const Qkv x = random_qkv(rng, l.total(), heads, dh);
    const AttnMask mask = build_ada_mask(l);
    const auto both = [&](const Qkv& in) {
      return std::pair{blockwise_attention(in.q, in.k, in.v, l), dense_masked_attention(in.q, in.k, in.v, mask)};
    };
    const auto base = both(x);

    // Changing target tokens must leave every conditioning output untouched.
    const auto moved = both(perturb_rows(x, 0, l.target_len(), rng));
    const std::size_t cond_begin = l.offset(Segment::mesh), cond_end = l.total();
    const float d_block = row_diff(base.first, moved.first, cond_begin, cond_end);
    const float d_dense = row_diff(base.second, moved.second, cond_begin, cond_end);
    cond_change = std::max({cond_change, d_block, d_dense});
    exact = exact && d_block == 0.0f && d_dense == 0.0f;

    // Changing mesh frame j must leave target frames other than j untouched.
    const std::size_t s = l.tokens_per_frame(), j = uniform_int(rng, 0, l.frames - 1);
    const std::size_t mesh_j = l.offset(Segment::mesh) + j * s;
    const auto mesh_moved = both(perturb_rows(x, mesh_j, mesh_j + s, rng));
    for (std::size_t f = 0; f < l.frames; ++f) {
      const float db = row_diff(base.first, mesh_moved.first, f * s, (f + 1) * s);
      const float dd = row_diff(base.second, mesh_moved.second, f * s, (f + 1) * s);
      if (f == j) {
        own_frame = std::min(own_frame, std::max(db, dd));
      } else {
        locality = std::max({locality, db, dd});
      }
    }
  }
  const bool pass = exact && locality <= 1e-6f && own_frame > 0.0f;
  return {pass, "20 trials, conditioning change=" + fmt("%.3g", cond_change) + (exact ? " (exact)" : "") +
                    ", other-frame change=" + fmt("%.3g", locality) + ", own-frame change>=" +
                    fmt("%.3g", own_frame)};
}

Outcome pair_count_closed_form(const Options&) {
  std::size_t mismatches = 0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng rng = substream(303, "c3", trial);
    const SegmentLayout l = random_layout(rng, 4, 36, 1u << 20);
    std::uint64_t oracle = 0;
    for (std::size_t q = 0; q < l.total(); ++q) {
      for (std::size_t k = 0; k < l.total(); ++k) oracle += testkit::oracle_admits(l, q, k);
    }
    const std::uint64_t closed = count_attended_pairs(l);
    if (closed != build_ada_mask(l).popcount() || closed != oracle || closed != build_ada_blocks(l).popcount()) {
      ++mismatches;
    }
  }
  const SegmentLayout canon = SegmentLayout::from_counts(2, 16, 16, 2);
  const std::uint64_t ada = count_attended_pairs(canon), dense = count_dense_pairs(canon);
  const double ratio = static_cast<double>(ada) / static_cast<double>(dense);
  const bool pass = mismatches == 0 && ada == 5376 && dense == 12544 && std::abs(ratio - 0.428571) < 1e-6;
  return {pass, std::to_string(mismatches) + "/50 mismatches; canonical " + std::to_string(ada) + "/" +
                    std::to_string(dense) + " = " + fmt("%.6f", ratio)};
}

// Logits q_i . k_j per head after rotation.
std::vector<double> rotated_logits(const Tensor& q, const Tensor& k, const std::vector<RoleCoord>& coords,
                                   const RopeConfig& cfg) {
  const Tensor rq = rope_rotate(q, coords, cfg), rk = rope_rotate(k, coords, cfg);
  const std::size_t L = q.dim(0), H = q.dim(1), D = q.dim(2);
  std::vector<double> out;
  out.reserve(L * L * H);
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = 0; j < L; ++j) {
        double dot = 0;
        for (std::size_t d = 0; d < D; ++d) dot += double(rq[(i * H + h) * D + d]) * rk[(j * H + h) * D + d];
        out.push_back(dot);
      }
    }
  }
  return out;
}

Outcome rope_coordinates(const Options&) {
  std::vector<std::string> failures;

  // (a) Every token of an enumerated layout, for both reference modalities.
  std::size_t checked = 0;
  for (const RefModality m : {RefModality::video, RefModality::image}) {
    const SegmentLayout l{3, 2, 3, 8, m == RefModality::image ? std::size_t{1} : std::size_t{2}};
    const int delta = 3;
    const auto coords = assign_coords(l, m, delta);
    const std::size_t s = 6, lt = 18, lmsk = 8;
    for (std::size_t i = 0; i < l.total(); ++i) {
      RoleCoord want;
      if (i < lt) {
        want = {int(i / s), int(i % s / 3), int(i % 3)};
      } else if (i < 2 * lt) {
        const std::size_t u = i - lt;
        want = {int(u / s), int(u % s / 3), int(u % 3)};
      } else if (i < 2 * lt + lmsk) {
        const std::size_t u = i - 2 * lt;
        want = {0, int(u % s / 3), int(u % 3)};
      } else {
        const std::size_t u = i - 2 * lt - lmsk;
        want = {m == RefModality::image ? -1 : int(u / s) - delta, int(u % s / 3), int(u % 3)};
      }
      ++checked;
      if (coords[i] != want) failures.push_back("token " + std::to_string(i) + " (" + modality_name(m) + ")");
    }
  }

  // (b) Logits depend only on coordinate differences.
  double worst_shift = 0.0;
  {
    const SegmentLayout l{2, 2, 2, 4, 2};
    const RopeConfig cfg = RopeConfig::with_default_split(24, 2);
    Rng rng = substream(404, "c4");
    const Tensor q = randn({l.total(), 2, 24}, rng), k = randn({l.total(), 2, 24}, rng);
    const auto coords = assign_coords(l, RefModality::video, 2);
    const auto base = rotated_logits(q, k, coords, cfg);
    for (int trial = 0; trial < 20; ++trial) {
      std::uniform_int_distribution<int> shift(-50, 50);
      const RoleCoord d{shift(rng), shift(rng), shift(rng)};
      auto moved = coords;
      for (auto& c : moved) c = {c.t + d.t, c.h + d.h, c.w + d.w};
      const auto logits = rotated_logits(q, k, moved, cfg);
      for (std::size_t i = 0; i < logits.size(); ++i) {
        worst_shift = std::max(worst_shift, std::abs(logits[i] - base[i]));
      }
    }
  }
  if (worst_shift >= 1e-4) failures.push_back("shift invariance " + fmt("%.3g", worst_shift));

  // (c) With delta equal to the frame count, references precede all targets.
  for (std::size_t frames = 1; frames <= 6; ++frames) {
    const SegmentLayout l{frames, 2, 2, 3, frames};
    const auto coords = assign_coords(l, RefModality::video, static_cast<int>(frames));
    int max_ref = -1000, min_target = 1000;
    for (std::size_t i = 0; i < l.total(); ++i) {
      const Segment seg = l.segment_of(i);
      if (seg == Segment::reference) max_ref = std::max(max_ref, coords[i].t);
      if (seg == Segment::target) min_target = std::min(min_target, coords[i].t);
    }
    if (!(max_ref < min_target)) failures.push_back("temporal order at F=" + std::to_string(frames));
  }

  std::string detail = std::to_string(checked) + " coordinates checked, max shift error " + fmt("%.3g", worst_shift);
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

Outcome rectified_flow_identities(const Options&) {
  std::vector<std::string> failures;
  Rng rng = substream(505, "c5");
  const Shape shape{4, 8, 8, 3};
  const Tensor z0 = randn(shape, rng), eps = randn(shape, rng);

  if (!(interpolate(z0, eps, 0.0) == z0)) failures.push_back("z_0 != z0");
  if (!(interpolate(z0, eps, 1.0) == eps)) failures.push_back("z_1 != eps");

  // The exact velocity field of a single data point.
  const VelocityFn ideal = [&](const Tensor& z, double t) {
    Tensor v(z.shape());
    for (std::size_t i = 0; i < z.numel(); ++i) v[i] = static_cast<float>((double(z[i]) - z0[i]) / t);
    return v;
  };
  double worst_euler = 0.0;
  for (const std::size_t steps : {1, 4, 10}) {
    const Tensor out = euler_sample(ideal, SamplerConfig{steps, 17}, shape);
    worst_euler = std::max(worst_euler, double(max_abs_diff(out, z0)));
  }
  if (worst_euler >= 1e-6) failures.push_back("euler error " + fmt("%.3g", worst_euler));

  const Tensor u = target_velocity(z0, eps);
  const double zero_loss = fm_loss(u, z0, eps);
  if (zero_loss != 0.0) failures.push_back("fm_loss(eps-z0) = " + fmt("%.3g", zero_loss));
  double min_positive = 1e30;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = u;
    p[std::uniform_int_distribution<std::size_t>(0, p.numel() - 1)(rng)] += 1e-3f;
    min_positive = std::min(min_positive, fm_loss(p, z0, eps));
  }
  if (!(min_positive > 0.0)) failures.push_back("fm_loss zero away from eps-z0");

  std::string detail = "max Euler error " + fmt("%.3g", worst_euler) + ", min perturbed loss " + fmt("%.3g", min_positive);
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

Outcome model_gradients(const Options&) {
  const auto t0 = Clock::now();
  const ModelConfig cfg = testkit::tiny_config(16, 2, 2);
  const TrainingExample ex = to_example(testkit::scene_sample(61, 2, 16));
  const ParameterSet params = testkit::dense_parameters(cfg, 62, 0.2f);
  std::size_t length = 0;
  const auto r = testkit::grad_check(params, [&](Graph& g, const std::map<std::string, Var>& p) {
    Rng rng = substream(63, "probe");
    const Var out = forward(g, cfg, p, ex.target, ex.cond, 0.42);
    length = 2 * ex.target.numel() / cfg.patch_features() + 16 + 2 * 16;
    return ops::sum(ops::mul(out, g.leaf(randn(out.shape(), rng))));
  }, 5e-2);
  const double secs = seconds_since(t0);
  const bool pass = r.worst < 1e-3 && secs < 120.0 && length <= 120 && r.rel_err.size() == params.size();
  return {pass, std::to_string(r.rel_err.size()) + " tensors (" + std::to_string(parameter_count(params)) +
                    " values), L=" + std::to_string(length) + ", worst rel err " + fmt("%.3g", r.worst) + " (" +
                    r.worst_name + "), " + fmt("%.1f", secs) + " s"};
}

ModelConfig default_model() { return ModelConfig{}; }

// Warmup then cosine decay to zero over the run.
TrainConfig recipe(const Options& opt, std::size_t steps, std::uint64_t seed) {
  TrainConfig tc;
  tc.steps = steps;
  tc.seed = seed;
  tc.adam.learning_rate = static_cast<float>(opt.lr);
  tc.warmup_steps = opt.warmup_steps;
  tc.decay_steps = steps;
  return tc;
}

Video sample_for(const Checkpoint& ck, const TripletSample& s, std::size_t steps, std::uint64_t seed) {
  return sample_video(ck, s, SamplerConfig{steps, seed});
}

void write_trace(const std::string& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path);
  write_trace_header(out);
  for (const auto& r : rows) write_trace_row(out, r);
}

Outcome overfit_single(const Options& opt) {
  const auto t0 = Clock::now();
  const TripletSample sample = testkit::scene_sample(71, 4, 32);
  Checkpoint ck;
  ck.config = default_model();
  ck.params = init_parameters(ck.config, 72);
  ck.seed = 73;
  const TrainConfig tc = recipe(opt, opt.overfit_steps, ck.seed);
  const auto trace = train_loop(ck, {to_example(sample)}, tc);
  write_trace(opt.workdir + "/overfit.loss.csv", trace);
  const Video pred = sample_for(ck, sample, opt.sample_steps, 74);
  const double p = psnr(pred, *sample.target), s = ssim(pred, *sample.target);
  const bool pass = p > 25.0 && s > 0.85 && opt.overfit_steps <= 3000;
  return {pass, std::to_string(parameter_count(ck.params)) + " params, " + std::to_string(opt.overfit_steps) +
                    " steps, final loss " + fmt("%.4f", trace.back().loss) + ", PSNR " + fmt("%.2f", p) +
                    " dB, SSIM " + fmt("%.4f", s) + ", " + fmt("%.0f", seconds_since(t0)) + " s"};
}

Outcome conditioning_efficacy(const Options& opt) {
  const auto t0 = Clock::now();
  constexpr std::size_t kLooks = 8, kMotions = 9;
  const auto scene = [](std::size_t look, std::size_t motion) {
    return compose_scene(mix_seed(81, "look", look), mix_seed(81, "motion", motion), 4, 32, 32, RefModality::video);
  };
  std::vector<TrainingExample> train;
  std::vector<TripletSample> held_out;
  for (std::size_t a = 0; a < kLooks; ++a) {
    for (std::size_t m = 0; m < kMotions; ++m) {
      TripletSample s = generate_triplet(scene(a, m));
      if (a == m) {
        held_out.push_back(std::move(s));
      } else {
        train.push_back(to_example(s));
      }
    }
  }

  Checkpoint ck;
  ck.config = default_model();
  ck.params = init_parameters(ck.config, 82);
  ck.seed = 83;
  const TrainConfig tc = recipe(opt, opt.efficacy_steps, ck.seed);
  const auto trace = train_loop(ck, train, tc);
  write_trace(opt.workdir + "/efficacy.loss.csv", trace);
  save_checkpoint(ck, opt.workdir + "/efficacy.ckpt");

  MetricReport model_report, copy_report;
  double chi_sum = 0.0, chi_min = 1e30;
  for (std::size_t i = 0; i < held_out.size(); ++i) {
    const TripletSample& s = held_out[i];
    const Video pred = sample_for(ck, s, opt.sample_steps, 84 + i);
    model_report.rows.push_back(evaluate_pair(s.id.empty() ? "h" + std::to_string(i) : s.id, pred, *s.target));
    copy_report.rows.push_back(evaluate_pair("h" + std::to_string(i), s.mesh, *s.target));

    // Same mesh and masks, reference of another subject.
    const TripletSample other = held_out[(i + 1) % held_out.size()];
    const CrossSpeciesPair swapped = generate_cross_species(s.spec, other.spec);
    const Video swapped_pred = sample_for(ck, swapped.sample, opt.sample_steps, 84 + i);
    const double chi = chi_squared(palette_histogram(pred, s.masks), palette_histogram(swapped_pred, s.masks));
    chi_sum += chi;
    chi_min = std::min(chi_min, chi);
  }
  {
    std::ofstream out(opt.workdir + "/efficacy.model.csv");
    model_report.write_csv(out);
    std::ofstream base(opt.workdir + "/efficacy.copy_mesh.csv");
    copy_report.write_csv(base);
  }
  const double model_psnr = model_report.mean().psnr_db, copy_psnr = copy_report.mean().psnr_db;
  const double chi_mean = chi_sum / static_cast<double>(held_out.size());
  const double secs = seconds_since(t0);
  const bool pass = model_psnr > copy_psnr && chi_mean > 0.1 && secs <= 7200.0;
  return {pass, std::to_string(train.size()) + " train / " + std::to_string(held_out.size()) + " held out, " +
                    std::to_string(opt.efficacy_steps) + " steps, PSNR " + fmt("%.2f", model_psnr) +
                    " dB vs copy-mesh " + fmt("%.2f", copy_psnr) + " dB, swap chi2 mean " + fmt("%.3f", chi_mean) +
                    " (min " + fmt("%.3f", chi_min) + "), " + fmt("%.0f", secs) + " s"};
}

std::map<std::string, std::vector<std::uint8_t>> tree_bytes(const std::string& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path().string());
  }
  return out;
}

Outcome determinism(const Options& opt) {
  std::vector<std::string> failures;

  const auto dataset = [](std::uint64_t seed) {
    std::vector<TripletSample> out;
    for (std::size_t i = 0; i < 6; ++i) {
      TripletSample s = generate_triplet(random_scene(mix_seed(seed, "sample", i), 4, 32, 32,
                                                      i % 2 ? RefModality::image : RefModality::video));
      s.id = "s" + std::to_string(i);
      out.push_back(std::move(s));
    }
    return out;
  };
  const std::string a = opt.workdir + "/det_a", b = opt.workdir + "/det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  write_dataset(dataset(91), a);
  write_dataset(dataset(91), b);
  if (tree_bytes(a) != tree_bytes(b)) failures.push_back("datasets differ");
  if (read_dataset(a) != dataset(91)) failures.push_back("dataset read-back differs");

  const auto run = [&]() {
    Checkpoint ck;
    ck.config = testkit::tiny_config(32, 4, 2);
    ck.params = init_parameters(ck.config, 92);
    ck.seed = 93;
    TrainConfig tc;
    tc.steps = 40;
    tc.seed = ck.seed;
    std::vector<TrainingExample> data;
    for (const auto& s : read_dataset(a)) data.push_back(to_example(s));
    auto trace = train_loop(ck, data, tc);
    return std::pair{std::move(ck), std::move(trace)};
  };
  const auto [ck1, trace1] = run();
  const auto [ck2, trace2] = run();
  bool same_trace = trace1.size() == trace2.size();
  for (std::size_t i = 0; same_trace && i < trace1.size(); ++i) {
    same_trace = trace1[i].step == trace2[i].step && trace1[i].t == trace2[i].t && trace1[i].loss == trace2[i].loss;
  }
  if (!same_trace) failures.push_back("loss traces differ");
  const auto bytes = encode_checkpoint(ck1);
  if (bytes != encode_checkpoint(ck2)) failures.push_back("checkpoints differ");
  save_checkpoint(ck1, opt.workdir + "/det.ckpt");
  if (encode_checkpoint(load_checkpoint(opt.workdir + "/det.ckpt")) != bytes) failures.push_back("checkpoint round-trip");

  const TripletSample probe = read_dataset(a).front();
  const Video s1 = sample_for(ck1, probe, 8, 94), s2 = sample_for(ck2, probe, 8, 94);
  if (!(s1 == s2) || encode_pnm(s1.frame(0)) != encode_pnm(s2.frame(0))) failures.push_back("samples differ");

  std::size_t pixmaps = 0;
  for (const auto& [name, data] : tree_bytes(a)) {
    if (name.size() < 4 || (name.substr(name.size() - 4) != ".ppm" && name.substr(name.size() - 4) != ".pgm")) continue;
    ++pixmaps;
    if (encode_pnm(decode_pnm(data)) != data) failures.push_back("pixmap round-trip " + name);
  }

  const Video& truth = *probe.target;
  const double p = psnr(truth, truth), s = ssim(truth, truth);
  if (p != kPsnrIdentical || s != 1.0) failures.push_back("identity metrics " + fmt("%.4f", p) + "/" + fmt("%.4f", s));

  std::string detail = "dataset, trace (" + std::to_string(trace1.size()) + " steps), checkpoint, sample and " +
                       std::to_string(pixmaps) + " pixmaps compared; PSNR " + fmt("%.0f", p) + ", SSIM " +
                       fmt("%.3f", s);
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

Outcome blockwise_speed(const Options& opt) {
  struct Case {
    std::size_t frames, spatial, mask, ref;
  };
  const std::vector<Case> cases{{4, 64, 64, 4}, {8, 64, 64, 4}, {8, 64, 64, 8}, {16, 64, 64, 4}};
  std::vector<BenchResult> rows;
  bool pass = true;
  std::string detail;
  for (const Case& c : cases) {
    const BenchResult r = bench_attention(c.frames, c.spatial, c.mask, c.ref, 5);
    const SegmentLayout l = SegmentLayout::from_counts(c.frames, c.spatial, c.mask, c.ref);
    rows.push_back(r);
    if (l.total() >= 1024) pass = pass && r.block_ms <= r.dense_ms;
    detail += (detail.empty() ? "" : ", ") + std::string("L=") + std::to_string(l.total()) + " block/dense " +
              fmt("%.3f", r.block_ms / r.dense_ms);
  }
  std::ofstream out(opt.workdir + "/bench_attn.csv");
  write_bench_csv(out, rows);
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mozoo acceptance checks"};
  int criterion = 0;
  Options opt;
  opt.workdir = (fs::temp_directory_path() / "mozoo_acceptance").string();
  app.add_option("--criterion", criterion, "criterion number (1-10)")->required()->check(CLI::Range(1, 10));
  app.add_option("--workdir", opt.workdir, "directory for artifacts");
  app.add_option("--overfit-steps", opt.overfit_steps, "training steps for criterion 7");
  app.add_option("--efficacy-steps", opt.efficacy_steps, "training steps for criterion 8");
  app.add_option("--sample-steps", opt.sample_steps, "Euler steps when sampling");
  app.add_option("--lr", opt.lr, "peak learning rate for criteria 7 and 8");
  app.add_option("--warmup-steps", opt.warmup_steps, "warmup length for criteria 7 and 8");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(opt.workdir);

  using Check = Outcome (*)(const Options&);
  const Check checks[] = {blockwise_matches_dense, unidirectional_and_local, pair_count_closed_form,
                          rope_coordinates,        rectified_flow_identities, model_gradients,
                          overfit_single,          conditioning_efficacy,    determinism,
                          blockwise_speed};
  Outcome r;
  try {
    r = checks[criterion - 1](opt);
  } catch (const std::exception& e) {
    r = {false, std::string("error: ") + e.what()};
  }
  std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << criterion << ": " << r.detail << std::endl;
  return r.pass ? 0 : 1;
}
