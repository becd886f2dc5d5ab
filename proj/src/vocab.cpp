#include "lrp2/vocab.hpp"

#include "lrp2/errors.hpp"

namespace lrp2 {

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kMaskToken));
  add(std::string(kBosToken));
}

Vocabulary::Vocabulary(std::vector<std::string> words) {
  if (words.size() < 3 || words[0] != kPadToken || words[1] != kMaskToken || words[2] != kBosToken) {
    throw FormatError("vocabulary must start with [PAD] [MASK] [BOS]");
  }
  for (auto& w : words) {
    if (index_.contains(w)) throw FormatError("duplicate vocabulary entry '" + w + "'");
    add(w);
  }
}

TokenId Vocabulary::add(const std::string& word) {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(words_.size());
  words_.push_back(word);
  index_.emplace(word, id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  if (auto it = index_.find(std::string(word)); it != index_.end()) return it->second;
  return std::nullopt;
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& w : split_words(text)) {
    auto id = find(w);
    if (!id) throw InputError("unknown word '" + w + "'");
    ids.push_back(*id);
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += word(ids[i]);
  }
  return out;
}

}  // namespace lrp2
