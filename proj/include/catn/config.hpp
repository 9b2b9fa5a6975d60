#pragma once

#include "catn/data.hpp"
#include "catn/network.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace catn {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& what)
      : std::runtime_error(line > 0 ? "config line " + std::to_string(line) + ": " + what
                                    : "config: " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// One architecture block, i.e. one [layer] section.
struct LayerSpec {
  enum class Type { conv2d, decomposed, dense };
  Type type = Type::conv2d;
  Index filters = 0;           // K (dense: units; 0 on the last dense = class count)
  Index vertical_filters = 0;  // L for decomposed blocks (0: same as filters)
  Index kernel = 3;
  Index stride = 1;
  std::string padding = "same";  // same | valid | <count>
  std::optional<bool> batchnorm;    // default: on for conv blocks
  std::optional<bool> relu;         // default: on for conv blocks
  std::optional<bool> regularized;  // default: on except the classifier head

  bool operator==(const LayerSpec&) const = default;
};

struct DataSpec {
  std::string source = "synthetic";  // synthetic | idx | csv
  std::string train_images, train_labels, test_images, test_labels;
  std::string train_csv, test_csv;
  CsvLayout csv;
  // synthetic teacher
  Index train_samples = 4000;
  Index test_samples = 1000;
  Shape3 input_shape{3, 8, 8};
  int classes = 4;
  std::uint64_t seed = 7;
  TeacherSpec teacher{{16, 16}, {2, 2}, 3, 0};
  bool normalize = true;
  bool flip = false;

  bool operator==(const DataSpec& o) const;
};

struct TrainConfig {
  std::vector<LayerSpec> layers;
  double tau = 0.0;
  double lambda_first = 0.0;
  double lambda_rest = 0.0;
  Index first_group_size = 2;  // blocks receiving lambda_first
  double alpha = 0.2;
  double lr = 0.1;
  double lr_decay = 0.1;
  Index lr_decay_period = 20;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  Index epochs = 30;
  Index batch_size = 32;
  std::uint64_t seed = 1;
  std::optional<Index> reload_epoch;
  Index prox_every = 1;  // epochs between proximal steps
  double energy = 1.0;
  double zero_unit_tol = 1e-6;
  DataSpec data;

  void validate() const;
  bool operator==(const TrainConfig& o) const;
};

/// Parses the key = value format; relative paths resolve against base_dir.
TrainConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = {});
TrainConfig load_config(const std::filesystem::path& path);
/// Canonical text form; parse_config(to_text(c)) == c.
std::string to_text(const TrainConfig& cfg);

Index resolve_padding(const LayerSpec& spec, std::size_t line = 0);

struct BuiltNetwork {
  Network net;
  std::vector<std::size_t> block_of_layer;  // architecture block per layer
};

/// Expands the blocks into layers (conv -> BN -> ReLU per convolution) and
/// applies He-uniform initialization from cfg.seed.
BuiltNetwork build_network(const TrainConfig& cfg, const Shape3& input_shape, int class_count);

}  // namespace catn
