#include "lrp2/weights_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "lrp2/errors.hpp"

namespace lrp2 {

namespace {

constexpr char kMagic[4] = {'L', 'R', 'P', 'W'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + static_cast<std::size_t>(i)]))
         << (8 * i);
  }
  return v;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const nlohmann::json& header,
                       const std::vector<NamedTensor>& tensors) {
  nlohmann::json full = header.is_null() ? nlohmann::json::object() : header;
  if (full.contains("tensors")) throw FormatError("header must not carry its own tensor manifest");
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& t : tensors) {
    if (t.data.size() != numel(t.shape)) {
      throw IntegrityError("tensor " + t.name + " data does not match its shape");
    }
    manifest.push_back({{"name", t.name}, {"shape", t.shape}});
  }
  full["tensors"] = std::move(manifest);
  const std::string header_text = full.dump();

  std::string out(kMagic, 4);
  put_u32(out, kLrpwVersion);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  for (const auto& t : tensors) {
    for (float x : t.data) put_u32(out, std::bit_cast<std::uint32_t>(x));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InputError("cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw InputError("failed writing " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic (not an LRPW file)");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kLrpwVersion) {
    throw FormatError(path.string() + ": unsupported LRPW version " + std::to_string(version));
  }
  const std::uint32_t header_len = get_u32(bytes, 8);
  if (12 + static_cast<std::size_t>(header_len) > bytes.size()) {
    throw FormatError(path.string() + ": truncated header");
  }
  TensorFile file;
  try {
    file.header = nlohmann::json::parse(bytes.substr(12, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed header JSON: " + e.what());
  }
  if (!file.header.is_object() || !file.header.contains("tensors") ||
      !file.header["tensors"].is_array()) {
    throw FormatError(path.string() + ": header lacks a tensor manifest");
  }

  std::size_t offset = 12 + header_len;
  for (const auto& entry : file.header["tensors"]) {
    NamedTensor t;
    try {
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": malformed manifest entry: " + e.what());
    }
    const std::size_t count = numel(t.shape);
    if (offset + 4 * count > bytes.size()) {
      throw IntegrityError(path.string() + ": payload shorter than manifest (tensor " + t.name + ")");
    }
    t.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      t.data[i] = std::bit_cast<float>(get_u32(bytes, offset + 4 * i));
      if (!std::isfinite(t.data[i])) {
        throw IntegrityError(path.string() + ": non-finite value in tensor " + t.name);
      }
    }
    offset += 4 * count;
    file.tensors.push_back(std::move(t));
  }
  if (offset != bytes.size()) {
    throw IntegrityError(path.string() + ": " + std::to_string(bytes.size() - offset) +
                         " trailing bytes after the last tensor");
  }
  file.header.erase("tensors");
  return file;
}

void save_weights(const std::filesystem::path& path, const Model& model, const Vocabulary* vocab,
                  const nlohmann::json& meta) {
  nlohmann::json header;
  header["config"] = model.config().to_json();
  if (vocab) header["vocab"] = vocab->words();
  if (!meta.is_null()) header["meta"] = meta;
  const auto specs = tensor_manifest(model.config());
  const auto slots = tensor_slots(model.params());
  std::vector<NamedTensor> tensors;
  tensors.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    tensors.push_back({specs[i].name, specs[i].shape, *slots[i]});
  }
  write_tensor_file(path, header, tensors);
}

WeightFile read_weight_file(const std::filesystem::path& path) {
  TensorFile file = read_tensor_file(path);
  if (!file.header.contains("config")) throw FormatError(path.string() + ": header lacks model config");
  const ModelConfig config = ModelConfig::from_json(file.header["config"]);
  config.validate();

  const auto specs = tensor_manifest(config);
  if (file.tensors.size() != specs.size()) {
    throw IntegrityError(path.string() + ": header declares " + std::to_string(config.num_layers) +
                         " layers (" + std::to_string(specs.size()) + " tensors) but file holds " +
                         std::to_string(file.tensors.size()) + " tensors");
  }
  Params<float> params = zero_params<float>(config);
  auto slots = tensor_slots(params);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (file.tensors[i].name != specs[i].name || file.tensors[i].shape != specs[i].shape) {
      throw IntegrityError(path.string() + ": tensor #" + std::to_string(i) + " is '" +
                           file.tensors[i].name + "', expected '" + specs[i].name +
                           "' with the configured shape");
    }
    *slots[i] = std::move(file.tensors[i].data);
  }

  WeightFile out{Model(config, std::move(params)), std::nullopt, nullptr};
  if (file.header.contains("vocab")) {
    out.vocab = Vocabulary(file.header["vocab"].get<std::vector<std::string>>());
    if (out.vocab->size() != static_cast<std::size_t>(config.vocab_size)) {
      throw IntegrityError(path.string() + ": vocabulary size disagrees with config");
    }
  }
  if (file.header.contains("meta")) out.meta = file.header["meta"];
  return out;
}

Model load_weights(const std::filesystem::path& path) { return read_weight_file(path).model; }

}  // namespace lrp2
