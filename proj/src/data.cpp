#include "catn/data.hpp"

#include "catn/nn.hpp"
#include "catn/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace catn {

namespace {

using Code = DataError::Code;

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(Code::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t at,
                        const std::filesystem::path& path) {
  if (at + 4 > bytes.size()) {
    throw DataError(Code::truncated, path.string() + ": truncated header");
  }
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

int infer_class_count(const std::vector<int>& labels) {
  int top = -1;
  for (int l : labels) top = std::max(top, l);
  return top + 1;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

void Dataset::validate() const {
  if (size() < 1) throw DataError(Code::empty, "dataset: no samples");
  if (static_cast<Index>(labels.size()) != size()) {
    throw DataError(Code::count_mismatch, "dataset: label count differs from image count");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw DataError(Code::parse, "dataset: label " + std::to_string(labels[i]) +
                                       " at sample " + std::to_string(i) + " out of range");
    }
  }
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto img = read_bytes(images_path);
  const auto lab = read_bytes(labels_path);

  const std::uint32_t img_magic = read_be32(img, 0, images_path);
  if (img_magic != 0x00000803 && img_magic != 0x00000804) {
    std::ostringstream msg;
    msg << images_path.string() << ": bad image magic 0x" << std::hex << img_magic;
    throw DataError(Code::bad_magic, msg.str());
  }
  const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
  if (lab_magic != 0x00000801) {
    std::ostringstream msg;
    msg << labels_path.string() << ": bad label magic 0x" << std::hex << lab_magic;
    throw DataError(Code::bad_magic, msg.str());
  }

  const bool with_channels = img_magic == 0x00000804;
  std::size_t at = 4;
  const Index n = read_be32(img, at, images_path);
  at += 4;
  Index channels = 1;
  if (with_channels) {
    channels = read_be32(img, at, images_path);
    at += 4;
  }
  const Index height = read_be32(img, at, images_path);
  const Index width = read_be32(img, at + 4, images_path);
  at += 8;
  const Index n_labels = read_be32(lab, 4, labels_path);
  if (n != n_labels) {
    throw DataError(Code::count_mismatch, "idx: " + std::to_string(n) + " images but " +
                                              std::to_string(n_labels) + " labels");
  }
  const std::size_t pixel_count = static_cast<std::size_t>(n * channels * height * width);
  if (img.size() < at + pixel_count) {
    throw DataError(Code::truncated, images_path.string() + ": truncated pixel data");
  }
  if (lab.size() < 8 + static_cast<std::size_t>(n)) {
    throw DataError(Code::truncated, labels_path.string() + ": truncated label data");
  }

  Dataset data;
  data.images = Tensor4(n, channels, height, width);
  for (std::size_t i = 0; i < pixel_count; ++i) {
    data.images.raw()[i] = static_cast<double>(img[at + i]) / 255.0;
  }
  data.labels.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < data.labels.size(); ++i) data.labels[i] = lab[8 + i];
  data.class_count = infer_class_count(data.labels);
  data.validate();
  return data;
}

void save_idx(const Dataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path) {
  std::vector<char> pixels(static_cast<std::size_t>(data.images.size()));
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = data.images.raw()[i];
    const double scaled = v * 255.0;
    const double level = std::round(scaled);
    if (!(level >= 0.0 && level <= 255.0) || level / 255.0 != v) {
      throw std::invalid_argument("save_idx: pixel " + std::to_string(i) +
                                  " is not a multiple of 1/255 in [0, 1]");
    }
    pixels[i] = static_cast<char>(static_cast<unsigned char>(level));
  }
  {
    std::ofstream out(images_path, std::ios::binary);
    if (!out) throw DataError(Code::io, "cannot write " + images_path.string());
    write_be32(out, 0x00000804);
    for (int axis = 0; axis < 4; ++axis) write_be32(out, static_cast<std::uint32_t>(data.images.dim(axis)));
    out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
  }
  std::ofstream out(labels_path, std::ios::binary);
  if (!out) throw DataError(Code::io, "cannot write " + labels_path.string());
  write_be32(out, 0x00000801);
  write_be32(out, static_cast<std::uint32_t>(data.labels.size()));
  for (int l : data.labels) out.put(static_cast<char>(l));
}

Dataset load_csv(const std::filesystem::path& path, const CsvLayout& layout) {
  if (layout.channels < 1 || layout.height < 1 || layout.width < 1 || !(layout.scale > 0.0)) {
    throw std::invalid_argument("load_csv: invalid layout");
  }
  std::ifstream in(path);
  if (!in) throw DataError(Code::io, "cannot open " + path.string());
  const Index per_row = layout.channels * layout.height * layout.width;
  std::vector<double> values;
  std::vector<int> labels;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::vector<double> cells;
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      const std::string_view cell = trim(rest.substr(0, comma));
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw DataError(Code::parse, path.string() + ": row " + std::to_string(row) + ", column " +
                                         std::to_string(cells.size() + 1) + ": non-numeric cell '" +
                                         std::string(cell) + "'");
      }
      cells.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (static_cast<Index>(cells.size()) != per_row + 1) {
      throw DataError(Code::parse, path.string() + ": row " + std::to_string(row) + " has " +
                                       std::to_string(cells.size()) + " cells, expected " +
                                       std::to_string(per_row + 1));
    }
    const double label = cells[0];
    if (label < 0.0 || label != std::floor(label)) {
      throw DataError(Code::parse, path.string() + ": row " + std::to_string(row) +
                                       ": label must be a nonnegative integer");
    }
    labels.push_back(static_cast<int>(label));
    for (Index i = 1; i <= per_row; ++i) values.push_back(cells[static_cast<std::size_t>(i)] / layout.scale);
  }
  if (labels.empty()) throw DataError(Code::empty, path.string() + ": no data rows");

  Dataset data;
  data.images = Tensor4(static_cast<Index>(labels.size()), layout.channels, layout.height, layout.width);
  std::copy(values.begin(), values.end(), data.images.raw());
  data.labels = std::move(labels);
  data.class_count = layout.class_count > 0 ? layout.class_count : infer_class_count(data.labels);
  data.validate();
  return data;
}

Normalization fit_normalization(const Dataset& data) {
  const Index n = data.images.dim(0);
  const Index channels = data.images.dim(1);
  const Index pixels = data.images.dim(2) * data.images.dim(3);
  Normalization norm;
  const double count = static_cast<double>(n * pixels);
  for (Index c = 0; c < channels; ++c) {
    double sum = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double* src = data.images.raw() + data.images.offset(i, c, 0, 0);
      for (Index p = 0; p < pixels; ++p) sum += src[p];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double* src = data.images.raw() + data.images.offset(i, c, 0, 0);
      for (Index p = 0; p < pixels; ++p) sq += (src[p] - mean) * (src[p] - mean);
    }
    const double sd = std::sqrt(sq / count);
    norm.mean.push_back(mean);
    norm.stddev.push_back(sd > 0.0 ? sd : 1.0);
  }
  return norm;
}

void apply_normalization(Dataset& data, const Normalization& norm) {
  if (norm.empty()) return;
  const Index channels = data.images.dim(1);
  if (static_cast<Index>(norm.mean.size()) != channels) {
    throw std::invalid_argument("apply_normalization: channel count mismatch");
  }
  const Index pixels = data.images.dim(2) * data.images.dim(3);
  for (Index i = 0; i < data.images.dim(0); ++i) {
    for (Index c = 0; c < channels; ++c) {
      double* dst = data.images.raw() + data.images.offset(i, c, 0, 0);
      const double m = norm.mean[static_cast<std::size_t>(c)];
      const double s = norm.stddev[static_cast<std::size_t>(c)];
      for (Index p = 0; p < pixels; ++p) dst[p] = (dst[p] - m) / s;
    }
  }
  data.normalization = norm;
}

Network make_teacher_network(std::uint64_t seed, const Shape3& input_shape,
                             const TeacherSpec& spec, int class_count) {
  if (spec.filters.size() != spec.planted_ranks.size() || spec.filters.empty()) {
    throw std::invalid_argument("synthesize_teacher: need one planted rank per conv layer");
  }
  if (class_count < 2) throw std::invalid_argument("synthesize_teacher: need at least 2 classes");
  Rng rng(derive_seed(seed, 1));
  Network net;
  net.input_shape = input_shape;
  Shape3 shape = input_shape;
  for (std::size_t l = 0; l < spec.filters.size(); ++l) {
    Layer conv = make_conv2d(shape.channels, spec.filters[l], spec.kernel, 1, spec.padding);
    const Index units = conv.out_units();
    const Index size = conv.unit_size();
    const Index rank = spec.planted_ranks[l];
    if (rank < 1 || rank > std::min(units, size)) {
      throw std::invalid_argument("synthesize_teacher: planted rank " + std::to_string(rank) +
                                  " infeasible for a " + std::to_string(units) + "x" +
                                  std::to_string(size) + " layer");
    }
    Matrix left(units, rank);
    Matrix right(rank, size);
    for (Index i = 0; i < left.size(); ++i) left.data()[i] = rng.normal();
    for (Index i = 0; i < right.size(); ++i) right.data()[i] = rng.normal();
    const Matrix theta = left * right * std::sqrt(2.0 / static_cast<double>(rank * size));
    assign_kernel_from_matrix(conv, theta);
    shape = output_shape(conv, shape, net.layers.size());
    net.layers.push_back(std::move(conv));
    net.layers.push_back(make_relu());
  }
  net.layers.push_back(make_flatten());
  Layer head = make_dense(shape.size(), class_count);
  const double head_scale = std::sqrt(1.0 / static_cast<double>(shape.size()));
  for (double& w : head.weights.data()) w = head_scale * rng.normal();
  net.layers.push_back(std::move(head));

  // Center each class logit over a calibration sample so that classes are
  // roughly balanced.
  const Dataset calibration = label_with_teacher(net, derive_seed(seed, 2), 2048);
  const Matrix logits = infer(net, calibration.images);
  net.layers.back().bias = -logits.colwise().mean().transpose();
  net.validate();
  return net;
}

Dataset label_with_teacher(const Network& teacher, std::uint64_t seed, Index n_samples) {
  if (n_samples < 1) throw std::invalid_argument("synthesize_teacher: need at least one sample");
  Rng rng(seed);
  const Shape3 s = teacher.input_shape;
  Dataset data;
  data.images = Tensor4(n_samples, s.channels, s.height, s.width);
  for (double& v : data.images.data()) v = static_cast<double>(rng.below(256)) / 255.0;
  data.class_count = static_cast<int>(teacher.class_count());
  data.labels = predict(teacher, data.images);
  return data;
}

Teacher synthesize_teacher(std::uint64_t seed, Index n_samples, const Shape3& input_shape,
                           const TeacherSpec& spec, int class_count) {
  Teacher t;
  t.net = make_teacher_network(seed, input_shape, spec, class_count);
  t.data = label_with_teacher(t.net, derive_seed(seed, 3), n_samples);
  return t;
}

Dataset take(const Dataset& data, const std::vector<std::size_t>& indices) {
  const Shape3 s = data.sample_shape();
  Dataset out;
  out.class_count = data.class_count;
  out.normalization = data.normalization;
  out.images = Tensor4(static_cast<Index>(indices.size()), s.channels, s.height, s.width);
  const Index per = s.size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double* src = data.images.raw() + static_cast<Index>(indices[i]) * per;
    std::copy(src, src + per, out.images.raw() + static_cast<Index>(i) * per);
    out.labels.push_back(data.labels[indices[i]]);
  }
  return out;
}

std::vector<Batch> batches(const Dataset& data, Index batch_size, std::uint64_t epoch_seed,
                           bool horizontal_flip) {
  if (batch_size < 1) throw std::invalid_argument("batches: batch_size must be at least 1");
  Rng rng(epoch_seed);
  const auto order = rng.permutation(static_cast<std::size_t>(data.size()));
  std::vector<Batch> out;
  const Shape3 s = data.sample_shape();
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
    Dataset part = take(data, idx);
    if (horizontal_flip) {
      for (Index n = 0; n < part.size(); ++n) {
        if (rng.uniform() >= 0.5) continue;
        for (Index c = 0; c < s.channels; ++c) {
          for (Index h = 0; h < s.height; ++h) {
            double* row = part.images.raw() + part.images.offset(n, c, h, 0);
            std::reverse(row, row + s.width);
          }
        }
      }
    }
    out.push_back(Batch{std::move(part.images), std::move(part.labels), std::move(idx)});
  }
  return out;
}

double accuracy(const Network& net, const Dataset& data) {
  constexpr Index chunk = 512;
  Index correct = 0;
  std::vector<std::size_t> idx;
  for (Index start = 0; start < data.size(); start += chunk) {
    idx.clear();
    for (Index i = start; i < std::min(data.size(), start + chunk); ++i) {
      idx.push_back(static_cast<std::size_t>(i));
    }
    const Dataset part = take(data, idx);
    const auto pred = predict(net, part.images);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == part.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace catn
