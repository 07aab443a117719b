#pragma once

// Model files: magic, version, JSON header, float32 little-endian payload.
// The byte layout is documented in docs/model_format.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adda/model.hpp"

namespace adda::model {

inline constexpr char kModelMagic[8] = {'A', '2', 'C', 'N', 'N', 'M', 'D', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFile {
  FeatureExtractor extractor;
  std::optional<int> untie_count;
  std::map<std::string, std::string> metadata;  // training provenance
  std::optional<Discriminator> discriminator;
};

std::vector<std::uint8_t> encode_model(const ModelFile& model);
ModelFile decode_model(std::span<const std::uint8_t> bytes);

void save_model(const std::filesystem::path& path, const ModelFile& model);
ModelFile load_model(const std::filesystem::path& path);

// Rounds every parameter to the nearest float, i.e. what a save/load
// round trip produces.
FeatureExtractor quantized(const FeatureExtractor& extractor);

}  // namespace adda::model
