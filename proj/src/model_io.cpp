#include "catn/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace catn {

namespace {

constexpr char kMagic[4] = {'C', 'A', 'T', 'N'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void index(Index v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void doubles(const double* p, Index n) {
    index(n);
    for (Index i = 0; i < n; ++i) f64(p[i]);
  }
  void vector(const Vector& v) { doubles(v.data(), v.size()); }
  void string(const std::string& s) {
    u64(s.size());
    out_.insert(out_.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { need(1); return data_[pos_++]; }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  Index index() {
    const std::uint64_t v = u64();
    if (v > (std::uint64_t{1} << 40)) throw ModelFormatError("model file: implausible count " + std::to_string(v));
    return static_cast<Index>(v);
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Vector vector() {
    const Index n = index();
    need(static_cast<std::size_t>(n) * 8);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = f64();
    return v;
  }
  std::vector<double> doubles() {
    const Vector v = vector();
    return {v.data(), v.data() + v.size()};
  }
  std::string string() {
    const Index n = index();
    need(static_cast<std::size_t>(n));
    std::string s(reinterpret_cast<const char*>(data_ + pos_), static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }
  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (size_ - pos_ < n) throw ModelFormatError("model file: payload truncated");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_layer(Writer& w, const Layer& l) {
  w.u8(static_cast<std::uint8_t>(l.kind));
  w.u8(static_cast<std::uint8_t>(l.role));
  w.u8(l.regularized ? 1 : 0);
  w.index(l.stride);
  w.index(l.pad_h);
  w.index(l.pad_w);
  for (int a = 0; a < 4; ++a) w.index(l.weights.dim(a));
  for (double v : l.weights.data()) w.f64(v);
  w.vector(l.bias);
  w.vector(l.gamma);
  w.vector(l.beta);
  w.vector(l.running_mean);
  w.vector(l.running_var);
}

Layer read_layer(Reader& r, std::size_t index) {
  Layer l;
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(LayerKind::flatten)) {
    throw ModelFormatError("model file: layer " + std::to_string(index) + " has unknown kind tag " +
                           std::to_string(kind));
  }
  l.kind = static_cast<LayerKind>(kind);
  const std::uint8_t role = r.u8();
  if (role > static_cast<std::uint8_t>(FactorRole::mixing)) {
    throw ModelFormatError("model file: layer " + std::to_string(index) + " has unknown role tag");
  }
  l.role = static_cast<FactorRole>(role);
  l.regularized = r.u8() != 0;
  l.stride = r.index();
  l.pad_h = r.index();
  l.pad_w = r.index();
  Index d[4];
  for (Index& x : d) x = r.index();
  if (d[0] * d[1] * d[2] * d[3] > (Index{1} << 36)) throw ModelFormatError("model file: weight tensor too large");
  l.weights = Tensor4(d[0], d[1], d[2], d[3]);
  for (double& v : l.weights.data()) v = r.f64();
  l.bias = r.vector();
  l.gamma = r.vector();
  l.beta = r.vector();
  l.running_mean = r.vector();
  l.running_var = r.vector();
  return l;
}

}  // namespace

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> serialize_model(const ModelFile& model) {
  Writer p;
  const Network& net = model.net;
  p.index(net.input_shape.channels);
  p.index(net.input_shape.height);
  p.index(net.input_shape.width);
  p.u64(net.layers.size());
  for (const Layer& l : net.layers) write_layer(p, l);
  p.string(model.meta.config_text);
  p.u64(model.meta.epoch);
  p.u64(model.meta.seed);
  const auto& nm = model.meta.normalization;
  p.doubles(nm.mean.data(), static_cast<Index>(nm.mean.size()));
  p.doubles(nm.stddev.data(), static_cast<Index>(nm.stddev.size()));
  const std::vector<std::uint8_t> payload = p.take();

  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kModelFormatVersion);
  w.u64(payload.size());
  std::vector<std::uint8_t> out = w.take();
  out.insert(out.end(), payload.begin(), payload.end());
  Writer tail;
  tail.u64(fnv1a64(payload.data(), payload.size()));
  const std::vector<std::uint8_t> sum = tail.take();
  out.insert(out.end(), sum.begin(), sum.end());
  return out;
}

ModelFile deserialize_model(const std::vector<std::uint8_t>& bytes) {
  Reader head(bytes.data(), bytes.size());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ModelFormatError("model file: bad magic (not a CATN model)");
  }
  head.u32();  // magic
  const std::uint32_t version = head.u32();
  if (version != kModelFormatVersion) {
    throw ModelFormatError("model file: format version " + std::to_string(version) +
                           " is not supported (expected " + std::to_string(kModelFormatVersion) + ")");
  }
  const std::uint64_t length = head.u64();
  if (bytes.size() < 24 || length != bytes.size() - 24) {
    throw ModelFormatError("model file: length field " + std::to_string(length) +
                           " does not match file size " + std::to_string(bytes.size()));
  }
  const std::uint8_t* payload = bytes.data() + 16;
  Reader sum_reader(payload + length, 8);
  const std::uint64_t stored = sum_reader.u64();
  const std::uint64_t actual = fnv1a64(payload, static_cast<std::size_t>(length));
  if (stored != actual) {
    throw ModelFormatError("model file: checksum mismatch (file is corrupt)");
  }

  Reader r(payload, static_cast<std::size_t>(length));
  ModelFile model;
  model.net.input_shape.channels = r.index();
  model.net.input_shape.height = r.index();
  model.net.input_shape.width = r.index();
  const Index count = r.index();
  for (Index i = 0; i < count; ++i) model.net.layers.push_back(read_layer(r, static_cast<std::size_t>(i)));
  model.meta.config_text = r.string();
  model.meta.epoch = r.u64();
  model.meta.seed = r.u64();
  model.meta.normalization.mean = r.doubles();
  model.meta.normalization.stddev = r.doubles();
  if (!r.done()) throw ModelFormatError("model file: trailing bytes in payload");
  try {
    model.net.validate();
  } catch (const std::exception& e) {
    throw ModelFormatError(std::string("model file: inconsistent network: ") + e.what());
  }
  return model;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_model(model);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open model file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace catn
