#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mozoo/rope.hpp"
#include "mozoo/tensor.hpp"

namespace mozoo {

/// Byte video [frames, height, width, channels], row-major.
struct Video {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> data;

  Video() = default;
  Video(std::size_t f, std::size_t h, std::size_t w, std::size_t c, std::uint8_t fill = 0)
      : frames(f), height(h), width(w), channels(c), data(f * h * w * c, fill) {}

  std::size_t frame_size() const { return height * width * channels; }
  std::uint8_t& at(std::size_t f, std::size_t y, std::size_t x, std::size_t c = 0) {
    return data[((f * height + y) * width + x) * channels + c];
  }
  std::uint8_t at(std::size_t f, std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data[((f * height + y) * width + x) * channels + c];
  }
  /// A single-frame video holding frame `f`.
  Video frame(std::size_t f) const;
  bool same_shape(const Video& o) const {
    return frames == o.frames && height == o.height && width == o.width && channels == o.channels;
  }
  bool operator==(const Video&) const = default;
};

/// Bytes to [-1, 1] floats (x / 127.5 - 1), shaped [frames, H, W, C].
Tensor video_to_tensor(const Video& v);
/// Binary 0/1 bytes to a {0, 1} tensor.
Tensor mask_to_tensor(const Video& v);
/// [-1, 1] floats back to bytes; values are clamped and rounded half to even.
Video tensor_to_video(const Tensor& t);

enum class ShapeKind { ellipse, blob, quadruped };
enum class TextureKind { stripes, spots, checker, noise };

const char* shape_name(ShapeKind s);
const char* texture_name(TextureKind t);

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Straight path with an optional vertical sinusoidal bob. Positions are
/// rounded to whole pixels so that the subject translates rigidly.
struct Trajectory {
  double x0 = 0, y0 = 0;
  double vx = 0, vy = 0;
  double bob_amplitude = 0;
  double bob_period = 8;
  double bob_phase = 0;

  std::pair<int, int> center(std::size_t frame) const;
  bool operator==(const Trajectory&) const = default;
};

struct Background {
  Rgb top, bottom;
  Rgb at_row(std::size_t y, std::size_t height) const;
  bool operator==(const Background&) const = default;
};

/// Identity of a subject: silhouette plus texture. Shared by a target clip
/// and its reference clip.
struct Appearance {
  ShapeKind shape = ShapeKind::ellipse;
  double radius_x = 6;
  double radius_y = 5;
  std::uint64_t shape_seed = 0;
  TextureKind texture = TextureKind::stripes;
  std::array<Rgb, 3> palette{};
  double texture_scale = 2;
  double texture_angle = 0;
  std::uint64_t texture_seed = 0;
  bool operator==(const Appearance&) const = default;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t frames = 4;
  std::size_t height = 32;
  std::size_t width = 32;
  Appearance appearance;
  Trajectory trajectory;
  Trajectory ref_trajectory;
  Background background;
  RefModality ref_modality = RefModality::video;
  std::size_t ref_frames = 4;

  /// Throws SpecError when the subject leaves the frame, colors collide with
  /// the background, or the palette repeats a color.
  void validate() const;
  std::string to_text() const;
  static SceneSpec from_text(const std::string& text);
  bool operator==(const SceneSpec&) const = default;
};

/// Flat gray used for the untextured pass.
inline constexpr Rgb kMeshGray{128, 128, 128};

/// Silhouette test in subject-local pixel offsets.
bool inside_silhouette(const Appearance& a, double u, double v);
/// Palette index of the texture at subject-local integer offset (u, v).
int texture_index(const Appearance& a, int u, int v);

/// Palette colors always have a channel >= 64 while background channels stay
/// below 64, so subject and background never share a color.
Appearance random_appearance(std::uint64_t seed, std::size_t height, std::size_t width);
Background random_background(std::uint64_t seed);
/// Target and reference trajectories from one seed; the reference path
/// differs from the target path in at least one frame.
std::pair<Trajectory, Trajectory> random_motion(std::uint64_t seed, std::size_t frames, std::size_t height,
                                                std::size_t width);
/// Scene whose appearance and motion come from separate seeds.
SceneSpec compose_scene(std::uint64_t appearance_seed, std::uint64_t motion_seed, std::size_t frames,
                        std::size_t height, std::size_t width, RefModality modality);
SceneSpec random_scene(std::uint64_t seed, std::size_t frames, std::size_t height, std::size_t width,
                       RefModality modality);

/// Aligned training unit. Cross-species evaluation pairs carry no target.
struct TripletSample {
  std::string id;
  SceneSpec spec;
  std::optional<SceneSpec> texture_source;
  std::optional<Video> target;
  Video mesh;
  Video masks;  // per-frame binary masks, values {0, 1}
  Video reference;
  RefModality modality = RefModality::video;

  Video first_frame_mask() const { return masks.frame(0); }
  bool is_cross_species() const { return texture_source.has_value(); }
  bool operator==(const TripletSample&) const = default;
};

/// Renders the textured pass, the flat-gray pass over the identical
/// silhouette, per-frame masks and a reference clip of the same subject
/// following the reference trajectory.
TripletSample generate_triplet(const SceneSpec& spec);

struct CrossSpeciesPair {
  TripletSample sample;
  std::vector<std::string> warnings;
};

/// Mesh and masks follow `motion`; the reference shows the subject of
/// `texture`. There is no ground-truth target.
CrossSpeciesPair generate_cross_species(const SceneSpec& motion, const SceneSpec& texture);

/// Renders a single pass of a subject along a trajectory.
Video render_pass(const SceneSpec& spec, const Appearance& a, const Trajectory& path, std::size_t frames,
                  bool textured);
Video render_masks(const SceneSpec& spec, const Appearance& a, const Trajectory& path, std::size_t frames);

// ---------------------------------------------------------------------------
// Pixmaps and dataset directories.

std::vector<std::uint8_t> encode_pnm(const Video& frame);
/// Parses a P6 (RGB) or P5 (gray) pixmap with maxval 255.
Video decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& what = "pixmap");

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);

struct ManifestFile {
  std::string path;  // relative to the dataset root
  std::size_t bytes = 0;
  std::uint32_t crc32 = 0;
  bool operator==(const ManifestFile&) const = default;
};

struct ManifestEntry {
  std::string id;
  std::string kind;  // "triplet" or "cross"
  std::size_t frames = 0, height = 0, width = 0;
  RefModality modality = RefModality::video;
  std::size_t ref_frames = 0;
  std::vector<ManifestFile> files;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  int version = 1;
  std::vector<ManifestEntry> entries;

  std::vector<std::string> ids() const;
  std::string to_text() const;
  static DatasetManifest from_text(const std::string& text);
  bool operator==(const DatasetManifest&) const = default;
};

/// Writes every sample under `dir/<id>/` and `dir/manifest.txt`.
DatasetManifest write_dataset(const std::vector<TripletSample>& samples, const std::string& dir);
/// Writes one sample directory; returns its manifest entry.
ManifestEntry write_sample(const TripletSample& sample, const std::string& root);
DatasetManifest read_manifest(const std::string& dir);
/// Loads and validates (size, checksum, header) every file listed.
std::vector<TripletSample> read_dataset(const std::string& dir);
TripletSample read_sample(const std::string& dir, const ManifestEntry& entry);
/// Loads a lone sample directory (as written by write_sample) without a
/// manifest, inferring its file set from spec.txt.
TripletSample read_sample_dir(const std::string& sample_dir);

/// Seeded disjoint partition; throws ContractError if either side is empty.
std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(const DatasetManifest& manifest,
                                                                            double train_fraction,
                                                                            std::uint64_t seed);

}  // namespace mozoo
