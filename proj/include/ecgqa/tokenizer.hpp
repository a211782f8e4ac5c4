#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ecgqa {

using TokenId = std::int64_t;

/// Splits text into normalized word pieces: lowercase, whitespace-separated,
/// with each of , . ? ! ; : ( ) as its own piece. A chunk written as "<tag>"
/// stays whole.
std::vector<std::string> split_words(std::string_view text);

/// Joins word pieces back into text; punctuation attaches to the left.
std::string join_words(const std::vector<std::string>& words);

/// join_words(split_words(text)).
std::string normalize_text(std::string_view text);

/// Closed word-level vocabulary. Ids are dense: 0 = <pad>, 1 = <unk>,
/// 2 = <eos>, then the remaining tokens in file order.
class Tokenizer {
 public:
  explicit Tokenizer(std::vector<std::string> vocab);

  /// Vocabulary of the special tokens plus every distinct piece in `corpus`, sorted.
  static Tokenizer from_corpus(const std::vector<std::string>& corpus);
  static Tokenizer load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(const std::vector<TokenId>& ids) const;

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }

  TokenId pad() const { return 0; }
  TokenId unk() const { return 1; }
  TokenId eos() const { return 2; }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace ecgqa
