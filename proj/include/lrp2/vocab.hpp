#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lrp2/engine.hpp"

namespace lrp2 {

inline constexpr std::string_view kPadToken = "[PAD]";
inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kBosToken = "[BOS]";

// Whitespace tokenizer over a closed word list. Ids 0..2 are always the
// special tokens [PAD], [MASK], [BOS].
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> words);

  // Returns the id of `word`, adding it when absent.
  TokenId add(const std::string& word);
  std::optional<TokenId> find(std::string_view word) const;

  const std::string& word(TokenId id) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  // Splits on ASCII whitespace; throws InputError on unknown words.
  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  TokenId pad_id() const { return 0; }
  TokenId mask_id() const { return 1; }
  TokenId bos_id() const { return 2; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

std::vector<std::string> split_words(std::string_view text);

}  // namespace lrp2
