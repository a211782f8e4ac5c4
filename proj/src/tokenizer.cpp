#include "ecgqa/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "ecgqa/binary_io.hpp"
#include "ecgqa/errors.hpp"

namespace ecgqa {

namespace {

constexpr std::string_view kPunctuation = ",.?!;:()";
constexpr std::string_view kSpecials[] = {"<pad>", "<unk>", "<eos>"};

bool is_punct(char c) { return kPunctuation.find(c) != std::string_view::npos; }

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    std::string chunk(text.substr(i, j - i));
    i = j;
    std::transform(chunk.begin(), chunk.end(), chunk.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (chunk.size() > 2 && chunk.front() == '<' && chunk.back() == '>') {
      out.push_back(std::move(chunk));
      continue;
    }
    std::string word;
    for (char c : chunk) {
      if (is_punct(c)) {
        if (!word.empty()) out.push_back(std::move(word));
        word.clear();
        out.emplace_back(1, c);
      } else {
        word.push_back(c);
      }
    }
    if (!word.empty()) out.push_back(std::move(word));
  }
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    const bool attach = w.size() == 1 && is_punct(w[0]) && w[0] != '(';
    if (!out.empty() && !attach && out.back() != '(') out.push_back(' ');
    out += w;
  }
  return out;
}

std::string normalize_text(std::string_view text) { return join_words(split_words(text)); }

Tokenizer::Tokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  for (std::size_t i = 0; i < std::size(kSpecials); ++i) {
    if (vocab_.size() <= i || vocab_[i] != kSpecials[i]) {
      throw InvalidArgument("vocabulary must start with <pad>, <unk>, <eos>");
    }
  }
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (vocab_[i].empty()) throw InvalidArgument("empty token in vocabulary");
    if (!ids_.emplace(vocab_[i], static_cast<TokenId>(i)).second) {
      throw InvalidArgument("duplicate token \"" + vocab_[i] + "\" in vocabulary");
    }
  }
}

Tokenizer Tokenizer::from_corpus(const std::vector<std::string>& corpus) {
  std::set<std::string> words;
  for (const auto& text : corpus) {
    for (auto& w : split_words(text)) words.insert(std::move(w));
  }
  std::vector<std::string> vocab(std::begin(kSpecials), std::end(kSpecials));
  for (const auto& w : words) {
    if (std::find(std::begin(kSpecials), std::end(kSpecials), w) == std::end(kSpecials)) vocab.push_back(w);
  }
  return Tokenizer(std::move(vocab));
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<std::string> vocab;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) vocab.push_back(std::move(line));
    start = end + 1;
  }
  return Tokenizer(std::move(vocab));
}

void Tokenizer::save(const std::filesystem::path& path) const {
  std::string text;
  for (const auto& t : vocab_) text += t + "\n";
  write_file(path, text);
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& w : split_words(text)) out.push_back(id(w));
  return out;
}

std::string Tokenizer::decode(const std::vector<TokenId>& ids) const {
  std::vector<std::string> words;
  for (TokenId i : ids) {
    if (i == pad() || i == eos()) continue;
    words.push_back(token(i));
  }
  return join_words(words);
}

TokenId Tokenizer::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? unk() : it->second;
}

const std::string& Tokenizer::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
    throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary");
  }
  return vocab_[static_cast<std::size_t>(id)];
}

}  // namespace ecgqa
