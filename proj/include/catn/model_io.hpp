#pragma once

#include "catn/data.hpp"
#include "catn/network.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace catn {

inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training provenance stored next to the weights.
struct ModelMetadata {
  std::string config_text;  // canonical config echo; empty if unknown
  std::uint64_t epoch = 0;  // epochs completed
  std::uint64_t seed = 0;
  Normalization normalization;  // input standardization to replay at eval

  bool operator==(const ModelMetadata&) const = default;
};

struct ModelFile {
  Network net;
  ModelMetadata meta;

  bool operator==(const ModelFile&) const = default;
};

/// Layout: "CATN", u32 version, u64 payload length, payload, u64 FNV-1a of
/// the payload. All integers and f64 values are little-endian.
std::vector<std::uint8_t> serialize_model(const ModelFile& model);
ModelFile deserialize_model(const std::vector<std::uint8_t>& bytes);

/// Writes to a temporary sibling and renames it over path.
void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

/// Atomic text write shared by the model, report and metrics writers.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

}  // namespace catn
