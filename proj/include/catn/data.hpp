#pragma once

#include "catn/network.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace catn {

class DataError : public std::runtime_error {
 public:
  enum class Code { io, bad_magic, truncated, count_mismatch, parse, empty };
  DataError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

/// Per-channel standardization replayed identically at eval time.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool empty() const { return mean.empty(); }
  bool operator==(const Normalization&) const = default;
};

struct Dataset {
  Tensor4 images;  // (N, C, H, W)
  std::vector<int> labels;
  int class_count = 0;
  Normalization normalization;  // applied to images, if any

  Index size() const { return images.dim(0); }
  Shape3 sample_shape() const { return images.sample_shape(); }
  void validate() const;
};

/// Reads an IDX image file (unsigned bytes; magic 0x00000803 for N,H,W or
/// 0x00000804 for N,C,H,W) and an IDX label file (magic 0x00000801).
/// Pixels are scaled to [0, 1]; class_count is max label + 1.
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);

/// Writes both IDX files. Every pixel must be an exact multiple of 1/255
/// in [0, 1] so that load_idx reproduces it bit-exactly.
void save_idx(const Dataset& data, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

/// Row layout for CSV data: a label then C*H*W pixel values in C, H, W order.
struct CsvLayout {
  Index channels = 1;
  Index height = 0;
  Index width = 0;
  double scale = 255.0;  // pixel divisor; 1.0 passes values through
  int class_count = 0;   // 0 infers max label + 1
};

Dataset load_csv(const std::filesystem::path& path, const CsvLayout& layout);

Normalization fit_normalization(const Dataset& data);
void apply_normalization(Dataset& data, const Normalization& norm);

/// Random teacher whose conv parameter matrices have planted ranks.
struct TeacherSpec {
  std::vector<Index> filters;        // per conv layer
  std::vector<Index> planted_ranks;  // per conv layer
  Index kernel = 3;
  Index padding = 0;
};

struct Teacher {
  Dataset data;
  Network net;
};

/// Builds conv->relu blocks with planted ranks, a flatten and a dense head
/// whose bias centers the class logits, then labels n_samples random
/// images (pixels uniform on k/255) by teacher argmax.
Teacher synthesize_teacher(std::uint64_t seed, Index n_samples, const Shape3& input_shape,
                           const TeacherSpec& spec, int class_count);

Network make_teacher_network(std::uint64_t seed, const Shape3& input_shape,
                             const TeacherSpec& spec, int class_count);
Dataset label_with_teacher(const Network& teacher, std::uint64_t seed, Index n_samples);

struct Batch {
  Tensor4 images;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

/// Seeded permutation split into batches; the last partial batch is kept.
std::vector<Batch> batches(const Dataset& data, Index batch_size, std::uint64_t epoch_seed,
                           bool horizontal_flip = false);

Dataset take(const Dataset& data, const std::vector<std::size_t>& indices);
/// Top-1 accuracy in eval mode.
double accuracy(const Network& net, const Dataset& data);

}  // namespace catn
