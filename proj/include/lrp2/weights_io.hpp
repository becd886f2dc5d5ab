#pragma once

// LRPW container: "LRPW" | u32 version | u32 header length | JSON header |
// float32 payloads in manifest order. All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrp2/engine.hpp"
#include "lrp2/vocab.hpp"

namespace lrp2 {

inline constexpr std::uint32_t kLrpwVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<float> data;
};

struct TensorFile {
  nlohmann::json header;  // everything except the "tensors" manifest
  std::vector<NamedTensor> tensors;
};

// `header` must not contain a "tensors" key; the manifest is generated.
void write_tensor_file(const std::filesystem::path& path, const nlohmann::json& header,
                       const std::vector<NamedTensor>& tensors);
TensorFile read_tensor_file(const std::filesystem::path& path);

struct WeightFile {
  Model model;
  std::optional<Vocabulary> vocab;
  nlohmann::json meta;  // null when absent
};

void save_weights(const std::filesystem::path& path, const Model& model,
                  const Vocabulary* vocab = nullptr, const nlohmann::json& meta = nullptr);
WeightFile read_weight_file(const std::filesystem::path& path);
Model load_weights(const std::filesystem::path& path);

}  // namespace lrp2
