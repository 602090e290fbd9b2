#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "mozoo/errors.hpp"
#include "mozoo/random.hpp"
#include "mozoo/zoodata.hpp"

namespace fs = std::filesystem;

namespace mozoo {
namespace {

constexpr const char* kManifestName = "manifest.txt";
constexpr const char* kManifestMagic = "mozoo-dataset";
constexpr const char* kSpecName = "spec.txt";

std::uint32_t checksum(const std::vector<std::uint8_t>& bytes) {
  return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

std::string frame_name(const char* stem, std::size_t f, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03zu.%s", stem, f, ext);
  return buf;
}

Video masks_to_bytes(const Video& m) {
  Video out = m;
  for (auto& b : out.data) b = b ? 255 : 0;
  return out;
}

std::string spec_text(const TripletSample& s) {
  std::string text = "[scene]\n" + s.spec.to_text();
  if (s.texture_source) text += "[texture_source]\n" + s.texture_source->to_text();
  return text;
}

std::pair<SceneSpec, std::optional<SceneSpec>> parse_spec_text(const std::string& text) {
  std::string scene, texture;
  std::string* current = nullptr;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line == "[scene]") {
      current = &scene;
    } else if (line == "[texture_source]") {
      current = &texture;
    } else if (!line.empty()) {
      if (!current) throw FormatError(FormatError::Kind::malformed_header, "spec.txt: key outside a section");
      *current += line + "\n";
    }
  }
  if (scene.empty()) throw FormatError(FormatError::Kind::malformed_header, "spec.txt: missing [scene] section");
  try {
    std::optional<SceneSpec> tex;
    if (!texture.empty()) tex = SceneSpec::from_text(texture);
    return {SceneSpec::from_text(scene), tex};
  } catch (const SpecError& e) {
    throw FormatError(FormatError::Kind::malformed_header, std::string("spec.txt: ") + e.what());
  }
}

// Stacks single-frame pixmaps into one video.
Video stack_frames(const std::vector<Video>& frames) {
  Video v(frames.size(), frames[0].height, frames[0].width, frames[0].channels);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (!frames[f].same_shape(frames[0])) {
      throw FormatError(FormatError::Kind::manifest_mismatch, "frames of one clip differ in size");
    }
    std::copy(frames[f].data.begin(), frames[f].data.end(),
              v.data.begin() + static_cast<std::ptrdiff_t>(f * v.frame_size()));
  }
  return v;
}

struct FileSet {
  std::vector<std::string> target, mesh, mask, ref;
};

FileSet file_set(std::size_t frames, bool has_target, RefModality modality, std::size_t ref_frames) {
  FileSet fs;
  for (std::size_t f = 0; f < frames; ++f) {
    if (has_target) fs.target.push_back(frame_name("tar", f, "ppm"));
    fs.mesh.push_back(frame_name("mesh", f, "ppm"));
    fs.mask.push_back(frame_name("mask", f, "pgm"));
  }
  if (modality == RefModality::image) {
    fs.ref.push_back("ref.ppm");
  } else {
    for (std::size_t f = 0; f < ref_frames; ++f) fs.ref.push_back(frame_name("ref", f, "ppm"));
  }
  return fs;
}

void expect_shape(const Video& v, std::size_t frames, std::size_t h, std::size_t w, std::size_t c,
                  const std::string& what) {
  if (v.frames != frames || v.height != h || v.width != w || v.channels != c) {
    throw FormatError(FormatError::Kind::manifest_mismatch,
                      what + ": got " + std::to_string(v.frames) + "x" + std::to_string(v.height) + "x" +
                          std::to_string(v.width) + "x" + std::to_string(v.channels) + ", expected " +
                          std::to_string(frames) + "x" + std::to_string(h) + "x" + std::to_string(w) + "x" +
                          std::to_string(c));
  }
}

TripletSample assemble(const std::string& id, const SceneSpec& spec, const std::optional<SceneSpec>& texture,
                       const std::function<std::vector<std::uint8_t>(const std::string&)>& load) {
  TripletSample s;
  s.id = id;
  s.spec = spec;
  s.texture_source = texture;
  const SceneSpec& ref_spec = texture ? *texture : spec;
  s.modality = ref_spec.ref_modality;
  const FileSet files = file_set(spec.frames, !texture, s.modality, ref_spec.ref_frames);
  auto clip = [&](const std::vector<std::string>& names) {
    std::vector<Video> frames;
    for (const auto& n : names) frames.push_back(decode_pnm(load(n), id + "/" + n));
    return stack_frames(frames);
  };
  if (!files.target.empty()) {
    s.target = clip(files.target);
    expect_shape(*s.target, spec.frames, spec.height, spec.width, 3, id + " target");
  }
  s.mesh = clip(files.mesh);
  expect_shape(s.mesh, spec.frames, spec.height, spec.width, 3, id + " mesh");
  s.masks = clip(files.mask);
  expect_shape(s.masks, spec.frames, spec.height, spec.width, 1, id + " masks");
  for (auto& b : s.masks.data) {
    if (b != 0 && b != 255) throw FormatError(FormatError::Kind::malformed_header, id + ": mask value not in {0,255}");
    b = b ? 1 : 0;
  }
  s.reference = clip(files.ref);
  expect_shape(s.reference, files.ref.size(), ref_spec.height, ref_spec.width, 3, id + " reference");
  return s;
}

}  // namespace

std::vector<std::uint8_t> encode_pnm(const Video& frame) {
  if (frame.frames != 1 || (frame.channels != 1 && frame.channels != 3)) {
    throw ContractError("encode_pnm expects one frame with 1 or 3 channels");
  }
  const std::string header = std::string(frame.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(frame.width) +
                             " " + std::to_string(frame.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), frame.data.begin(), frame.data.end());
  return out;
}

Video decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  std::size_t pos = 0;
  auto bad = [&](const std::string& msg) { return FormatError(FormatError::Kind::malformed_header, what + ": " + msg); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos]) && pos - start < 9) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw bad("expected a number in the header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '6' && bytes[1] != '5')) throw bad("not a P5/P6 pixmap");
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  pos = 2;
  const std::size_t width = number();
  const std::size_t height = number();
  const std::size_t maxval = number();
  if (width == 0 || height == 0) throw bad("zero image size");
  if (maxval != 255) throw bad("maxval must be 255, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw bad("missing whitespace after maxval");
  ++pos;
  Video v(1, height, width, channels);
  const std::size_t need = v.data.size();
  if (bytes.size() - pos < need) {
    throw FormatError(FormatError::Kind::truncated_payload,
                      what + ": payload has " + std::to_string(bytes.size() - pos) + " of " + std::to_string(need) +
                          " bytes");
  }
  if (bytes.size() - pos > need) throw bad("trailing bytes after payload");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), need, v.data.begin());
  return v;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::io, "short write to " + path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> DatasetManifest::ids() const {
  std::vector<std::string> out;
  for (const auto& e : entries) out.push_back(e.id);
  return out;
}

std::string DatasetManifest::to_text() const {
  std::ostringstream os;
  os << kManifestMagic << " " << version << "\n";
  for (const auto& e : entries) {
    os << "sample " << e.id << " " << e.kind << " " << e.frames << " " << e.height << " " << e.width << " "
       << modality_name(e.modality) << " " << e.ref_frames << "\n";
    for (const auto& f : e.files) {
      char crc[16];
      std::snprintf(crc, sizeof(crc), "%08x", f.crc32);
      os << "file " << f.path << " " << f.bytes << " " << crc << "\n";
    }
  }
  return os.str();
}

DatasetManifest DatasetManifest::from_text(const std::string& text) {
  auto bad = [](const std::string& msg) { return FormatError(FormatError::Kind::malformed_header, "manifest: " + msg); };
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw bad("empty");
  DatasetManifest m;
  {
    std::istringstream head(line);
    std::string magic;
    if (!(head >> magic >> m.version) || magic != kManifestMagic) throw bad("bad header line '" + line + "'");
    if (m.version != 1) throw bad("unsupported version " + std::to_string(m.version));
  }
  std::set<std::string> seen;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "sample") {
      ManifestEntry e;
      std::string modality;
      if (!(ls >> e.id >> e.kind >> e.frames >> e.height >> e.width >> modality >> e.ref_frames)) {
        throw bad("line " + std::to_string(lineno) + ": malformed sample line");
      }
      if (e.kind != "triplet" && e.kind != "cross") throw bad("unknown sample kind '" + e.kind + "'");
      try {
        e.modality = parse_modality(modality);
      } catch (const ConfigError&) {
        throw bad("unknown modality '" + modality + "'");
      }
      if (!seen.insert(e.id).second) throw bad("duplicate id '" + e.id + "'");
      m.entries.push_back(std::move(e));
    } else if (tag == "file") {
      if (m.entries.empty()) throw bad("line " + std::to_string(lineno) + ": file before any sample");
      ManifestFile f;
      std::string crc;
      if (!(ls >> f.path >> f.bytes >> crc) || crc.size() != 8) {
        throw bad("line " + std::to_string(lineno) + ": malformed file line");
      }
      try {
        f.crc32 = static_cast<std::uint32_t>(std::stoul(crc, nullptr, 16));
      } catch (const std::logic_error&) {
        throw bad("line " + std::to_string(lineno) + ": bad checksum '" + crc + "'");
      }
      m.entries.back().files.push_back(std::move(f));
    } else {
      throw bad("line " + std::to_string(lineno) + ": unknown tag '" + tag + "'");
    }
  }
  return m;
}

ManifestEntry write_sample(const TripletSample& sample, const std::string& root) {
  if (sample.id.empty() || sample.id.find_first_of("/ \t\n") != std::string::npos) {
    throw ContractError("invalid sample id '" + sample.id + "'");
  }
  const fs::path dir = fs::path(root) / sample.id;
  fs::create_directories(dir);
  ManifestEntry e;
  e.id = sample.id;
  e.kind = sample.is_cross_species() ? "cross" : "triplet";
  e.frames = sample.mesh.frames;
  e.height = sample.mesh.height;
  e.width = sample.mesh.width;
  e.modality = sample.modality;
  e.ref_frames = sample.reference.frames;

  auto emit = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
    write_file((dir / name).string(), bytes);
    e.files.push_back({sample.id + "/" + name, bytes.size(), checksum(bytes)});
  };
  const FileSet files = file_set(e.frames, sample.target.has_value(), e.modality, e.ref_frames);
  const Video masks = masks_to_bytes(sample.masks);
  for (std::size_t f = 0; f < e.frames; ++f) {
    if (sample.target) emit(files.target[f], encode_pnm(sample.target->frame(f)));
    emit(files.mesh[f], encode_pnm(sample.mesh.frame(f)));
    emit(files.mask[f], encode_pnm(masks.frame(f)));
  }
  for (std::size_t f = 0; f < files.ref.size(); ++f) emit(files.ref[f], encode_pnm(sample.reference.frame(f)));
  const std::string text = spec_text(sample);
  emit(kSpecName, std::vector<std::uint8_t>(text.begin(), text.end()));
  return e;
}

DatasetManifest write_dataset(const std::vector<TripletSample>& samples, const std::string& dir) {
  fs::create_directories(dir);
  DatasetManifest m;
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) throw ContractError("duplicate sample id '" + s.id + "'");
    m.entries.push_back(write_sample(s, dir));
  }
  const std::string text = m.to_text();
  write_file((fs::path(dir) / kManifestName).string(), std::vector<std::uint8_t>(text.begin(), text.end()));
  return m;
}

DatasetManifest read_manifest(const std::string& dir) {
  const auto bytes = read_file((fs::path(dir) / kManifestName).string());
  return DatasetManifest::from_text(std::string(bytes.begin(), bytes.end()));
}

TripletSample read_sample(const std::string& dir, const ManifestEntry& entry) {
  std::map<std::string, const ManifestFile*> listed;
  for (const auto& f : entry.files) listed[f.path] = &f;
  auto load = [&](const std::string& name) {
    const std::string rel = entry.id + "/" + name;
    const auto it = listed.find(rel);
    if (it == listed.end()) {
      throw FormatError(FormatError::Kind::manifest_mismatch, "manifest does not list " + rel);
    }
    const fs::path path = fs::path(dir) / rel;
    if (!fs::exists(path)) throw FormatError(FormatError::Kind::manifest_mismatch, "missing file " + rel);
    auto bytes = read_file(path.string());
    if (bytes.size() != it->second->bytes) {
      throw FormatError(FormatError::Kind::manifest_mismatch, rel + ": " + std::to_string(bytes.size()) +
                                                                  " bytes, manifest says " +
                                                                  std::to_string(it->second->bytes));
    }
    if (checksum(bytes) != it->second->crc32) {
      throw FormatError(FormatError::Kind::checksum_mismatch, rel + ": checksum mismatch");
    }
    return bytes;
  };
  const auto spec_bytes = load(kSpecName);
  const auto [spec, texture] = parse_spec_text(std::string(spec_bytes.begin(), spec_bytes.end()));
  if ((entry.kind == "cross") != texture.has_value()) {
    throw FormatError(FormatError::Kind::manifest_mismatch, entry.id + ": kind disagrees with spec.txt");
  }
  TripletSample s = assemble(entry.id, spec, texture, load);
  if (s.mesh.frames != entry.frames || s.mesh.height != entry.height || s.mesh.width != entry.width ||
      s.modality != entry.modality || s.reference.frames != entry.ref_frames) {
    throw FormatError(FormatError::Kind::manifest_mismatch, entry.id + ": sample geometry disagrees with manifest");
  }
  return s;
}

std::vector<TripletSample> read_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw FormatError(FormatError::Kind::io, "dataset directory not found: " + dir);
  const DatasetManifest m = read_manifest(dir);
  std::vector<TripletSample> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(read_sample(dir, e));
  return out;
}

TripletSample read_sample_dir(const std::string& sample_dir) {
  const fs::path dir(sample_dir);
  if (!fs::is_directory(dir)) throw FormatError(FormatError::Kind::io, "sample directory not found: " + sample_dir);
  const auto spec_bytes = read_file((dir / kSpecName).string());
  const auto [spec, texture] = parse_spec_text(std::string(spec_bytes.begin(), spec_bytes.end()));
  auto load = [&](const std::string& name) {
    const fs::path path = dir / name;
    if (!fs::exists(path)) throw FormatError(FormatError::Kind::manifest_mismatch, "missing file " + path.string());
    return read_file(path.string());
  };
  std::string id = dir.filename().string();
  if (id.empty()) id = dir.parent_path().filename().string();
  return assemble(id, spec, texture, load);
}

std::pair<std::vector<std::string>, std::vector<std::string>> split_dataset(const DatasetManifest& manifest,
                                                                            double train_fraction,
                                                                            std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ContractError("train fraction must lie in (0, 1)");
  std::vector<std::string> ids = manifest.ids();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  if (n_train == 0 || n_train >= ids.size()) {
    throw ContractError("fraction " + std::to_string(train_fraction) + " of " + std::to_string(ids.size()) +
                        " samples leaves an empty split");
  }
  Rng rng = substream(seed, "split");
  std::shuffle(ids.begin(), ids.end(), rng);
  std::vector<std::string> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::string> held(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(train.begin(), train.end());
  std::sort(held.begin(), held.end());
  return {train, held};
}

}  // namespace mozoo
