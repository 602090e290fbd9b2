#include "mozoo/zoodata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <tuple>

#include "mozoo/errors.hpp"
#include "mozoo/random.hpp"

namespace mozoo {

namespace {

// All silhouettes fit inside |u| <= kExtent * radius_x, |v| <= kExtent * radius_y.
constexpr double kExtent = 1.1;
constexpr int kBackgroundLimit = 64;

std::uint64_t hash3(std::int64_t a, std::int64_t b, std::uint64_t seed) {
  std::uint64_t x = seed ^ (static_cast<std::uint64_t>(a) * 0x9e3779b97f4a7c15ULL) ^
                    (static_cast<std::uint64_t>(b) * 0xc2b2ae3d27d4eb4fULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

int floor_div(double a, double b) { return static_cast<int>(std::floor(a / b)); }
int pos_mod(int a, int m) { return ((a % m) + m) % m; }

Rgb blend(const Rgb& a, const Rgb& b, double w) {
  auto ch = [w](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround(x + (static_cast<double>(y) - x) * w));
  };
  return {ch(a.r, b.r), ch(a.g, b.g), ch(a.b, b.b)};
}

int color_distance(const Rgb& a, const Rgb& b) {
  return std::abs(a.r - b.r) + std::abs(a.g - b.g) + std::abs(a.b - b.b);
}

// Margin (pixels) any generated subject needs from the frame border.
double motion_margin(std::size_t extent) { return std::ceil(kExtent * 0.24 * static_cast<double>(extent)); }

}  // namespace

Video Video::frame(std::size_t f) const {
  if (f >= frames) throw ContractError("frame " + std::to_string(f) + " of " + std::to_string(frames));
  Video out(1, height, width, channels);
  std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(f * frame_size()), frame_size(), out.data.begin());
  return out;
}

Tensor video_to_tensor(const Video& v) {
  Tensor t({v.frames, v.height, v.width, v.channels});
  for (std::size_t i = 0; i < v.data.size(); ++i) t[i] = static_cast<float>(v.data[i] / 127.5 - 1.0);
  return t;
}

Tensor mask_to_tensor(const Video& v) {
  Tensor t({v.frames, v.height, v.width, v.channels});
  for (std::size_t i = 0; i < v.data.size(); ++i) t[i] = v.data[i] ? 1.0f : 0.0f;
  return t;
}

Video tensor_to_video(const Tensor& t) {
  if (t.rank() != 4) throw DimensionError("tensor_to_video expects [frames, H, W, C], got " + shape_str(t.shape()));
  Video v(t.dim(0), t.dim(1), t.dim(2), t.dim(3));
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const double px = std::clamp((static_cast<double>(t[i]) + 1.0) * 127.5, 0.0, 255.0);
    v.data[i] = static_cast<std::uint8_t>(std::nearbyint(px));  // default rounding mode: half to even
  }
  return v;
}

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::ellipse:
      return "ellipse";
    case ShapeKind::blob:
      return "blob";
    case ShapeKind::quadruped:
      return "quadruped";
  }
  return "?";
}

const char* texture_name(TextureKind t) {
  switch (t) {
    case TextureKind::stripes:
      return "stripes";
    case TextureKind::spots:
      return "spots";
    case TextureKind::checker:
      return "checker";
    case TextureKind::noise:
      return "noise";
  }
  return "?";
}

std::pair<int, int> Trajectory::center(std::size_t frame) const {
  const double f = static_cast<double>(frame);
  const double bob = bob_amplitude * std::sin(2.0 * std::numbers::pi * f / bob_period + bob_phase);
  return {static_cast<int>(std::lround(x0 + vx * f)), static_cast<int>(std::lround(y0 + vy * f + bob))};
}

Rgb Background::at_row(std::size_t y, std::size_t height) const {
  const double w = height > 1 ? static_cast<double>(y) / static_cast<double>(height - 1) : 0.0;
  return blend(top, bottom, w);
}

bool inside_silhouette(const Appearance& a, double u, double v) {
  const double x = u / a.radius_x;
  const double y = v / a.radius_y;
  switch (a.shape) {
    case ShapeKind::ellipse:
      return x * x + y * y <= 1.0;
    case ShapeKind::blob: {
      const double phase = static_cast<double>(a.shape_seed % 628) / 100.0;
      const double r = 0.85 * (1.0 + 0.2 * std::sin(3.0 * std::atan2(y, x) + phase));
      return std::sqrt(x * x + y * y) <= r;
    }
    case ShapeKind::quadruped: {
      const bool body = (x / 0.75) * (x / 0.75) + (y / 0.45) * (y / 0.45) <= 1.0;
      const bool head = ((x - 0.75) / 0.3) * ((x - 0.75) / 0.3) + ((y + 0.35) / 0.3) * ((y + 0.35) / 0.3) <= 1.0;
      const bool legs = y >= 0.0 && y <= 1.0 &&
                        ((x >= -0.6 && x <= -0.4) || (x >= -0.3 && x <= -0.15) || (x >= 0.2 && x <= 0.35) ||
                         (x >= 0.45 && x <= 0.6));
      const bool tail = x >= -0.95 && x <= -0.7 && std::fabs(y + 0.2) <= 0.1;
      return body || head || legs || tail;
    }
  }
  return false;
}

int texture_index(const Appearance& a, int u, int v) {
  const double s = a.texture_scale;
  switch (a.texture) {
    case TextureKind::stripes: {
      const double proj = u * std::cos(a.texture_angle) + v * std::sin(a.texture_angle);
      return pos_mod(floor_div(proj, s), 3);
    }
    case TextureKind::checker:
      return pos_mod(floor_div(u, s) + floor_div(v, s), 3);
    case TextureKind::spots: {
      const double cell = 2.0 * s;
      const int ci = floor_div(u, cell), cj = floor_div(v, cell);
      const std::uint64_t h = hash3(ci, cj, a.texture_seed);
      const double jx = (static_cast<double>(h & 0xff) / 255.0 - 0.5) * 0.4 * cell;
      const double jy = (static_cast<double>((h >> 8) & 0xff) / 255.0 - 0.5) * 0.4 * cell;
      const double dx = u - ((ci + 0.5) * cell + jx);
      const double dy = v - ((cj + 0.5) * cell + jy);
      if (std::sqrt(dx * dx + dy * dy) < 0.45 * cell) return 1 + static_cast<int>((h >> 16) & 1);
      return 0;
    }
    case TextureKind::noise:
      return static_cast<int>(hash3(floor_div(u, s), floor_div(v, s), a.texture_seed) % 3);
  }
  return 0;
}

void SceneSpec::validate() const {
  if (frames == 0 || height == 0 || width == 0) throw SpecError("scene dimensions must be positive");
  if (ref_frames == 0) throw SpecError("reference needs at least one frame");
  if (ref_modality == RefModality::image && ref_frames != 1) {
    throw SpecError("image reference must have exactly one frame");
  }
  const Appearance& a = appearance;
  if (!(a.radius_x > 0 && a.radius_y > 0)) throw SpecError("subject radii must be positive");
  if (!(a.texture_scale > 0)) throw SpecError("texture scale must be positive");
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (a.palette[i] == a.palette[j]) throw SpecError("palette colors must be distinct");
    }
  }
  for (std::size_t y = 0; y < height; ++y) {
    const Rgb bg = background.at_row(y, height);
    if (bg == kMeshGray) throw SpecError("background row " + std::to_string(y) + " equals the mesh gray");
    for (const auto& c : a.palette) {
      if (c == bg) throw SpecError("palette color equals background row " + std::to_string(y));
    }
  }
  const double ex = kExtent * a.radius_x, ey = kExtent * a.radius_y;
  auto check = [&](const Trajectory& path, std::size_t count, const char* which) {
    for (std::size_t f = 0; f < count; ++f) {
      const auto [cx, cy] = path.center(f);
      if (cx - ex < 0 || cx + ex > static_cast<double>(width - 1) || cy - ey < 0 ||
          cy + ey > static_cast<double>(height - 1)) {
        throw SpecError(std::string(which) + " subject leaves the frame at frame " + std::to_string(f) +
                        " (center " + std::to_string(cx) + "," + std::to_string(cy) + ")");
      }
    }
  };
  check(trajectory, frames, "target");
  check(ref_trajectory, ref_frames, "reference");
}

namespace {

void put(std::ostringstream& os, const char* key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << key << " = " << buf << "\n";
}
void put(std::ostringstream& os, const char* key, std::uint64_t v) { os << key << " = " << v << "\n"; }
void put(std::ostringstream& os, const char* key, const std::string& v) { os << key << " = " << v << "\n"; }
void put(std::ostringstream& os, const char* key, const Rgb& c) {
  os << key << " = " << int(c.r) << " " << int(c.g) << " " << int(c.b) << "\n";
}
void put_path(std::ostringstream& os, const std::string& prefix, const Trajectory& t) {
  put(os, (prefix + ".x0").c_str(), t.x0);
  put(os, (prefix + ".y0").c_str(), t.y0);
  put(os, (prefix + ".vx").c_str(), t.vx);
  put(os, (prefix + ".vy").c_str(), t.vy);
  put(os, (prefix + ".bob_amplitude").c_str(), t.bob_amplitude);
  put(os, (prefix + ".bob_period").c_str(), t.bob_period);
  put(os, (prefix + ".bob_phase").c_str(), t.bob_phase);
}

Rgb parse_rgb(const std::string& v) {
  std::istringstream in(v);
  int r = -1, g = -1, b = -1;
  in >> r >> g >> b;
  if (!in || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 || b > 255) throw SpecError("bad color '" + v + "'");
  return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
}

}  // namespace

std::string SceneSpec::to_text() const {
  std::ostringstream os;
  put(os, "seed", seed);
  put(os, "frames", std::uint64_t{frames});
  put(os, "height", std::uint64_t{height});
  put(os, "width", std::uint64_t{width});
  put(os, "shape", std::string(shape_name(appearance.shape)));
  put(os, "radius_x", appearance.radius_x);
  put(os, "radius_y", appearance.radius_y);
  put(os, "shape_seed", appearance.shape_seed);
  put(os, "texture", std::string(texture_name(appearance.texture)));
  put(os, "palette0", appearance.palette[0]);
  put(os, "palette1", appearance.palette[1]);
  put(os, "palette2", appearance.palette[2]);
  put(os, "texture_scale", appearance.texture_scale);
  put(os, "texture_angle", appearance.texture_angle);
  put(os, "texture_seed", appearance.texture_seed);
  put_path(os, "path", trajectory);
  put_path(os, "ref_path", ref_trajectory);
  put(os, "background_top", background.top);
  put(os, "background_bottom", background.bottom);
  put(os, "ref_modality", std::string(modality_name(ref_modality)));
  put(os, "ref_frames", std::uint64_t{ref_frames});
  return os.str();
}

SceneSpec SceneSpec::from_text(const std::string& text) {
  SceneSpec s;
  std::istringstream in(text);
  std::string line;
  auto path_field = [](Trajectory& t, const std::string& f, double v) {
    if (f == "x0") t.x0 = v;
    else if (f == "y0") t.y0 = v;
    else if (f == "vx") t.vx = v;
    else if (f == "vy") t.vy = v;
    else if (f == "bob_amplitude") t.bob_amplitude = v;
    else if (f == "bob_period") t.bob_period = v;
    else if (f == "bob_phase") t.bob_phase = v;
    else return false;
    return true;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw SpecError("malformed scene line '" + line + "'");
    const std::string k = line.substr(0, eq), v = line.substr(eq + 3);
    try {
      if (k == "seed") s.seed = std::stoull(v);
      else if (k == "frames") s.frames = std::stoull(v);
      else if (k == "height") s.height = std::stoull(v);
      else if (k == "width") s.width = std::stoull(v);
      else if (k == "shape") {
        if (v == "ellipse") s.appearance.shape = ShapeKind::ellipse;
        else if (v == "blob") s.appearance.shape = ShapeKind::blob;
        else if (v == "quadruped") s.appearance.shape = ShapeKind::quadruped;
        else throw SpecError("unknown shape '" + v + "'");
      } else if (k == "radius_x") s.appearance.radius_x = std::stod(v);
      else if (k == "radius_y") s.appearance.radius_y = std::stod(v);
      else if (k == "shape_seed") s.appearance.shape_seed = std::stoull(v);
      else if (k == "texture") {
        if (v == "stripes") s.appearance.texture = TextureKind::stripes;
        else if (v == "spots") s.appearance.texture = TextureKind::spots;
        else if (v == "checker") s.appearance.texture = TextureKind::checker;
        else if (v == "noise") s.appearance.texture = TextureKind::noise;
        else throw SpecError("unknown texture '" + v + "'");
      } else if (k == "palette0") s.appearance.palette[0] = parse_rgb(v);
      else if (k == "palette1") s.appearance.palette[1] = parse_rgb(v);
      else if (k == "palette2") s.appearance.palette[2] = parse_rgb(v);
      else if (k == "texture_scale") s.appearance.texture_scale = std::stod(v);
      else if (k == "texture_angle") s.appearance.texture_angle = std::stod(v);
      else if (k == "texture_seed") s.appearance.texture_seed = std::stoull(v);
      else if (k.rfind("path.", 0) == 0 && path_field(s.trajectory, k.substr(5), std::stod(v))) {
      } else if (k.rfind("ref_path.", 0) == 0 && path_field(s.ref_trajectory, k.substr(9), std::stod(v))) {
      } else if (k == "background_top") s.background.top = parse_rgb(v);
      else if (k == "background_bottom") s.background.bottom = parse_rgb(v);
      else if (k == "ref_modality") s.ref_modality = parse_modality(v);
      else if (k == "ref_frames") s.ref_frames = std::stoull(v);
      else throw SpecError("unknown scene key '" + k + "'");
    } catch (const std::logic_error&) {
      throw SpecError("bad value for scene key '" + k + "': '" + v + "'");
    } catch (const ConfigError& e) {
      throw SpecError(e.what());
    }
  }
  return s;
}

Background random_background(std::uint64_t seed) {
  Rng rng = substream(seed, "background");
  std::uniform_int_distribution<int> ch(0, kBackgroundLimit - 1);
  auto color = [&] {
    return Rgb{static_cast<std::uint8_t>(ch(rng)), static_cast<std::uint8_t>(ch(rng)),
               static_cast<std::uint8_t>(ch(rng))};
  };
  Background bg;
  bg.top = color();
  bg.bottom = color();
  return bg;
}

Appearance random_appearance(std::uint64_t seed, std::size_t height, std::size_t width) {
  Rng rng = substream(seed, "appearance");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Appearance a;
  a.shape = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
  a.radius_x = (0.16 + 0.08 * unit(rng)) * static_cast<double>(width);
  a.radius_y = (0.14 + 0.06 * unit(rng)) * static_cast<double>(height);
  a.shape_seed = rng();
  a.texture = static_cast<TextureKind>(std::uniform_int_distribution<int>(0, 3)(rng));
  std::uniform_int_distribution<int> ch(0, 255);
  for (int i = 0; i < 3; ++i) {
    while (true) {
      Rgb c{static_cast<std::uint8_t>(ch(rng)), static_cast<std::uint8_t>(ch(rng)),
            static_cast<std::uint8_t>(ch(rng))};
      if (std::max({c.r, c.g, c.b}) < kBackgroundLimit) continue;
      if (c == kMeshGray) continue;
      bool distinct = true;
      for (int j = 0; j < i; ++j) distinct = distinct && color_distance(c, a.palette[j]) >= 120;
      if (!distinct) continue;
      a.palette[i] = c;
      break;
    }
  }
  a.texture_scale = 1.5 + 2.0 * unit(rng);
  a.texture_angle = std::numbers::pi * unit(rng);
  a.texture_seed = rng();
  return a;
}

std::pair<Trajectory, Trajectory> random_motion(std::uint64_t seed, std::size_t frames, std::size_t height,
                                                std::size_t width) {
  const double mx = motion_margin(width), my = motion_margin(height);
  const double bob_max = 1.0;
  if (2 * mx > static_cast<double>(width - 1) || 2 * (my + bob_max) > static_cast<double>(height - 1)) {
    throw SpecError("frame " + std::to_string(height) + "x" + std::to_string(width) + " too small for a subject");
  }
  auto draw = [&](Rng& rng) {
    std::uniform_real_distribution<double> xs(mx, static_cast<double>(width - 1) - mx);
    std::uniform_real_distribution<double> ys(my + bob_max, static_cast<double>(height - 1) - my - bob_max);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Trajectory t;
    t.x0 = xs(rng);
    t.y0 = ys(rng);
    const double x1 = xs(rng), y1 = ys(rng);
    const double span = frames > 1 ? static_cast<double>(frames - 1) : 1.0;
    t.vx = (x1 - t.x0) / span;
    t.vy = (y1 - t.y0) / span;
    // Keep the rounded bob within the margin.
    t.bob_amplitude = 0.49 * bob_max * unit(rng);
    t.bob_period = 4.0 + 6.0 * unit(rng);
    t.bob_phase = 2.0 * std::numbers::pi * unit(rng);
    return t;
  };
  Rng rng = substream(seed, "motion");
  Trajectory target = draw(rng);
  Rng ref_rng = substream(seed, "ref_motion");
  Trajectory ref = draw(ref_rng);
  auto same_path = [&](const Trajectory& a, const Trajectory& b) {
    for (std::size_t f = 0; f < frames; ++f) {
      if (a.center(f) != b.center(f)) return false;
    }
    return true;
  };
  while (same_path(target, ref)) ref = draw(ref_rng);
  return {target, ref};
}

SceneSpec compose_scene(std::uint64_t appearance_seed, std::uint64_t motion_seed, std::size_t frames,
                        std::size_t height, std::size_t width, RefModality modality) {
  SceneSpec s;
  s.seed = mix_seed(appearance_seed, "scene", motion_seed);
  s.frames = frames;
  s.height = height;
  s.width = width;
  s.appearance = random_appearance(appearance_seed, height, width);
  std::tie(s.trajectory, s.ref_trajectory) = random_motion(motion_seed, frames, height, width);
  s.background = random_background(motion_seed);
  s.ref_modality = modality;
  s.ref_frames = modality == RefModality::image ? 1 : frames;
  s.validate();
  return s;
}

SceneSpec random_scene(std::uint64_t seed, std::size_t frames, std::size_t height, std::size_t width,
                       RefModality modality) {
  SceneSpec s = compose_scene(mix_seed(seed, "appearance_seed"), mix_seed(seed, "motion_seed"), frames, height,
                              width, modality);
  s.seed = seed;
  return s;
}

Video render_pass(const SceneSpec& spec, const Appearance& a, const Trajectory& path, std::size_t frames,
                  bool textured) {
  Video v(frames, spec.height, spec.width, 3);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto [cx, cy] = path.center(f);
    for (std::size_t y = 0; y < spec.height; ++y) {
      const Rgb bg = spec.background.at_row(y, spec.height);
      for (std::size_t x = 0; x < spec.width; ++x) {
        const int u = static_cast<int>(x) - cx, w = static_cast<int>(y) - cy;
        Rgb c = bg;
        if (inside_silhouette(a, u, w)) c = textured ? a.palette[texture_index(a, u, w)] : kMeshGray;
        v.at(f, y, x, 0) = c.r;
        v.at(f, y, x, 1) = c.g;
        v.at(f, y, x, 2) = c.b;
      }
    }
  }
  return v;
}

Video render_masks(const SceneSpec& spec, const Appearance& a, const Trajectory& path, std::size_t frames) {
  Video m(frames, spec.height, spec.width, 1);
  for (std::size_t f = 0; f < frames; ++f) {
    const auto [cx, cy] = path.center(f);
    for (std::size_t y = 0; y < spec.height; ++y) {
      for (std::size_t x = 0; x < spec.width; ++x) {
        m.at(f, y, x) = inside_silhouette(a, static_cast<int>(x) - cx, static_cast<int>(y) - cy) ? 1 : 0;
      }
    }
  }
  return m;
}

namespace {

Video render_reference(const SceneSpec& s) {
  const std::size_t n = s.ref_modality == RefModality::image ? 1 : s.ref_frames;
  return render_pass(s, s.appearance, s.ref_trajectory, n, true);
}

}  // namespace

TripletSample generate_triplet(const SceneSpec& spec) {
  spec.validate();
  TripletSample t;
  t.spec = spec;
  t.modality = spec.ref_modality;
  t.target = render_pass(spec, spec.appearance, spec.trajectory, spec.frames, true);
  t.mesh = render_pass(spec, spec.appearance, spec.trajectory, spec.frames, false);
  t.masks = render_masks(spec, spec.appearance, spec.trajectory, spec.frames);
  t.reference = render_reference(spec);
  return t;
}

CrossSpeciesPair generate_cross_species(const SceneSpec& motion, const SceneSpec& texture) {
  motion.validate();
  texture.validate();
  if (motion.height != texture.height || motion.width != texture.width) {
    throw SpecError("cross-species specs must share the frame size");
  }
  CrossSpeciesPair out;
  const Appearance& ma = motion.appearance;
  const Appearance& ta = texture.appearance;
  if (ma.shape == ta.shape && ma.texture == ta.texture && ma.palette == ta.palette) {
    out.warnings.push_back("motion and texture specs share shape and texture; the pair degenerates to in-species");
  }
  TripletSample& s = out.sample;
  s.spec = motion;
  s.texture_source = texture;
  s.modality = texture.ref_modality;
  s.mesh = render_pass(motion, ma, motion.trajectory, motion.frames, false);
  s.masks = render_masks(motion, ma, motion.trajectory, motion.frames);
  s.reference = render_reference(texture);
  return out;
}

}  // namespace mozoo
