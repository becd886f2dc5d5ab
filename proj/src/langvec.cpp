#include "lrp2/langvec.hpp"

#include <fstream>

#include "lrp2/errors.hpp"
#include "lrp2/util.hpp"
#include "lrp2/weights_io.hpp"

namespace lrp2 {

std::vector<std::size_t> content_positions(std::span<const TokenId> input, const ModelConfig& config) {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < input.size(); ++p) {
    if (input[p] != config.pad_token_id && input[p] != config.bos_token_id) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<double> sentence_vector(const BasicTrace<T>& trace, int layer,
                                    std::span<const std::size_t> positions) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= trace.hidden.size()) {
    throw InputError("layer " + std::to_string(layer) + " outside the trace");
  }
  if (positions.empty()) throw InputError("sentence vector needs at least one pooled position");
  const auto& h = trace.hidden[static_cast<std::size_t>(layer)];
  std::vector<double> mean(h.cols(), 0.0);
  for (auto p : positions) {
    if (p >= h.rows()) throw InputError("pooled position " + std::to_string(p) + " outside sequence");
    for (std::size_t c = 0; c < h.cols(); ++c) mean[c] += static_cast<double>(h(p, c));
  }
  for (auto& x : mean) x /= static_cast<double>(positions.size());
  return mean;
}

template std::vector<double> sentence_vector(const BasicTrace<float>&, int, std::span<const std::size_t>);
template std::vector<double> sentence_vector(const BasicTrace<double>&, int, std::span<const std::size_t>);

LanguageVectorSet language_vectors(const Model& model, const std::vector<std::vector<TokenId>>& inputs,
                                   const std::string& lang, int jobs) {
  if (inputs.empty()) throw InputError("language " + lang + ": no sentences for vector extraction");
  const auto& cfg = model.config();
  const auto layers = static_cast<std::size_t>(cfg.num_layers);
  const auto n = static_cast<std::size_t>(cfg.hidden_dim);

  // per_sentence[s][layer-1] holds the pooled vector.
  std::vector<std::vector<std::vector<double>>> per_sentence(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t s) {
    const auto positions = content_positions(inputs[s], cfg);
    if (positions.empty()) {
      throw InputError("language " + lang + ": sentence #" + std::to_string(s) + " has no content tokens");
    }
    const auto trace = forward(model, inputs[s]);
    auto& out = per_sentence[s];
    for (std::size_t l = 1; l <= layers; ++l) {
      out.push_back(sentence_vector(trace, static_cast<int>(l), positions));
    }
  });

  LanguageVectorSet set{lang, Matrix<float>(layers, n), static_cast<int>(inputs.size())};
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t c = 0; c < n; ++c) {
      double sum = 0.0;
      for (const auto& s : per_sentence) sum += s[l][c];
      set.vectors(l, c) = static_cast<float>(sum / static_cast<double>(inputs.size()));
    }
  }
  return set;
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".json");
  return p;
}

}  // namespace

void save_language_vectors(const std::filesystem::path& path, const LanguageVectorSet& set,
                           const nlohmann::json& meta) {
  nlohmann::json header{{"kind", "language_vectors"}, {"lang", set.lang},
                        {"num_sentences", set.num_sentences}};
  nlohmann::json sidecar{{"lang", set.lang}, {"num_sentences", set.num_sentences}};
  if (!meta.is_null()) {
    header["meta"] = meta;
    sidecar["meta"] = meta;
  }
  write_tensor_file(path, header,
                    {{"langvec/" + set.lang, {set.vectors.rows(), set.vectors.cols()}, set.vectors.data()}});
  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) throw InputError("cannot write " + sidecar_path(path).string());
  side << sidecar.dump() << "\n";
}

LanguageVectorSet load_language_vectors(const std::filesystem::path& path) {
  TensorFile file = read_tensor_file(path);
  if (file.header.value("kind", "") != "language_vectors" || file.tensors.size() != 1) {
    throw FormatError(path.string() + ": not a language-vector file");
  }
  LanguageVectorSet set;
  set.lang = file.header.at("lang").get<std::string>();
  set.num_sentences = file.header.at("num_sentences").get<int>();
  auto& t = file.tensors.front();
  if (t.name != "langvec/" + set.lang || t.shape.size() != 2) {
    throw IntegrityError(path.string() + ": tensor name/shape does not match language " + set.lang);
  }
  if (set.num_sentences < 1) throw IntegrityError(path.string() + ": num_sentences must be >= 1");
  set.vectors = Matrix<float>(t.shape[0], t.shape[1]);
  set.vectors.data() = std::move(t.data);
  return set;
}

}  // namespace lrp2
