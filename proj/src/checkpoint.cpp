#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mozoo/errors.hpp"
#include "mozoo/model.hpp"

// Binary layout (all integers little-endian):
//   "MZOO" | u32 version | u32 tensor count
//   per tensor: u32 name length | name | u32 rank | u64 dims... | f32 payload
//   u32 text length | text (model config and training counters, key = value)

namespace mozoo {
namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr char kMagic[4] = {'M', 'Z', 'O', 'O'};
const std::string kFirstMoment = "optim.m:";
const std::string kSecondMoment = "optim.v:";

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float f) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u64(d);
    for (float v : t.data()) f32(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) {
      throw FormatError(FormatError::Kind::truncated_payload,
                        "checkpoint truncated at byte " + std::to_string(pos_));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float f = 0;
    std::memcpy(&f, &bits, 4);
    return f;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor> tensor() {
    std::string name = str();
    const std::uint32_t rank = u32();
    if (rank > 8) throw FormatError(FormatError::Kind::malformed_header, "tensor '" + name + "' has rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      d = u64();
      if (d == 0) throw FormatError(FormatError::Kind::malformed_header, "tensor '" + name + "' has a zero dimension");
      count *= d;
    }
    need(count * 4);
    std::vector<float> data(count);
    for (auto& v : data) v = f32();
    return {std::move(name), Tensor(std::move(shape), std::move(data))};
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::string float_text(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kFormatVersion);
  const std::size_t count =
      ckpt.params.size() + ckpt.optim.first_moment.size() + ckpt.optim.second_moment.size();
  w.u32(static_cast<std::uint32_t>(count));
  for (const auto& [name, t] : ckpt.params) w.tensor(name, t);
  for (const auto& [name, t] : ckpt.optim.first_moment) w.tensor(kFirstMoment + name, t);
  for (const auto& [name, t] : ckpt.optim.second_moment) w.tensor(kSecondMoment + name, t);

  std::string text = ckpt.config.to_text();
  text += "step = " + std::to_string(ckpt.step) + "\n";
  text += "seed = " + std::to_string(ckpt.seed) + "\n";
  text += "optim_step = " + std::to_string(ckpt.optim.step) + "\n";
  text += "learning_rate = " + float_text(ckpt.optim.config.learning_rate) + "\n";
  text += "beta1 = " + float_text(ckpt.optim.config.beta1) + "\n";
  text += "beta2 = " + float_text(ckpt.optim.config.beta2) + "\n";
  text += "adam_eps = " + float_text(ckpt.optim.config.eps) + "\n";
  w.str(text);
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::malformed_header, "not a checkpoint (missing MZOO magic)");
  }
  Reader r(bytes);
  r.u32();  // magic
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw FormatError(FormatError::Kind::malformed_header, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto [name, t] = r.tensor();
    std::map<std::string, Tensor>* dest = &ckpt.params;
    std::string key = name;
    if (name.rfind(kFirstMoment, 0) == 0) {
      dest = &ckpt.optim.first_moment;
      key = name.substr(kFirstMoment.size());
    } else if (name.rfind(kSecondMoment, 0) == 0) {
      dest = &ckpt.optim.second_moment;
      key = name.substr(kSecondMoment.size());
    }
    if (!dest->emplace(key, std::move(t)).second) {
      throw FormatError(FormatError::Kind::malformed_header, "duplicate tensor '" + name + "'");
    }
  }
  const std::string text = r.str();
  if (!r.done()) throw FormatError(FormatError::Kind::malformed_header, "trailing bytes after checkpoint config");

  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw FormatError(FormatError::Kind::malformed_header, "bad config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    try {
      if (ckpt.config.set(key, value)) continue;
      if (key == "step") ckpt.step = std::stoull(value);
      else if (key == "seed") ckpt.seed = std::stoull(value);
      else if (key == "optim_step") ckpt.optim.step = std::stoull(value);
      else if (key == "learning_rate") ckpt.optim.config.learning_rate = std::stof(value);
      else if (key == "beta1") ckpt.optim.config.beta1 = std::stof(value);
      else if (key == "beta2") ckpt.optim.config.beta2 = std::stof(value);
      else if (key == "adam_eps") ckpt.optim.config.eps = std::stof(value);
      else throw FormatError(FormatError::Kind::malformed_header, "unknown checkpoint key '" + key + "'");
    } catch (const std::logic_error&) {
      throw FormatError(FormatError::Kind::malformed_header, "bad value for '" + key + "': " + value);
    }
  }
  ckpt.config.validate();
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::io, "cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::io, "short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::io, "cannot open checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace mozoo
