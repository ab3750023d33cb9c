#pragma once

#include "hetfuse/dataset.hpp"
#include "hetfuse/nn.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace hetfuse {

// File layout:
//   8 bytes   magic "HFMODEL\n"
//   u32 LE    format version
//   u64 LE    header length H
//   H bytes   JSON header: fingerprint, layer shapes/activations, batch-norm
//             momentum/epsilon, caller extension object
//   f64 LE    per layer: weight (row-major), bias, then gamma, beta,
//             running_mean, running_var when the layer has batch norm
inline constexpr std::uint32_t kModelFormatVersion = 1;

// FNV-1a over channel names and modality tags, as 16 hex digits.
std::string schema_fingerprint(const ChannelSchema& schema);

struct ModelFile {
  DenseNet net;
  std::string fingerprint;
  nlohmann::json extension = nlohmann::json::object();
};

std::string encode_model(const ModelFile& model);
ModelFile decode_model(const std::string& bytes);

void save_model(const std::filesystem::path& path, const ModelFile& model);
// Rejects the file with FingerprintMismatch when `expected` is given and
// differs from the stored fingerprint.
ModelFile load_model(const std::filesystem::path& path, const std::optional<std::string>& expected = std::nullopt);

}  // namespace hetfuse
