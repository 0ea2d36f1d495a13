#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "moclip/errors.hpp"

namespace moclip {

/// Word-level vocabulary. Ids 0..3 are reserved; words follow in lexicographic order.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kBos = 2;
  static constexpr std::size_t kEos = 3;

  Vocabulary() : tokens_{"<pad>", "<unk>", "<bos>", "<eos>"} { reindex(); }

  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 4 || tokens_[0] != "<pad>" || tokens_[1] != "<unk>" || tokens_[2] != "<bos>" ||
        tokens_[3] != "<eos>") {
      throw FormatError("vocabulary must start with the four reserved tokens");
    }
    reindex();
  }

  static std::vector<std::string> split_words(const std::string& caption) {
    std::string lowered = caption;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::istringstream in(lowered);
    std::vector<std::string> words;
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::size_t id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
  }

  /// BOS + word ids + EOS. Longer inputs are cut to `context` tokens with EOS kept last.
  std::vector<std::size_t> encode(const std::string& caption, std::size_t context) const {
    if (context < 2) throw ConfigError("context length must be at least 2");
    std::vector<std::size_t> ids{kBos};
    for (const auto& w : split_words(caption)) ids.push_back(id(w));
    ids.push_back(kEos);
    if (ids.size() > context) {
      ids.resize(context);
      ids.back() = kEos;
    }
    return ids;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = i;
  }

  std::vector<std::string> tokens_;
  std::map<std::string, std::size_t> index_;
};

inline Vocabulary build_vocab(const std::vector<std::string>& captions) {
  std::set<std::string> words;
  for (const auto& c : captions) {
    for (auto& w : Vocabulary::split_words(c)) words.insert(std::move(w));
  }
  if (words.empty()) throw ConfigError("build_vocab: empty corpus");
  std::vector<std::string> tokens{"<pad>", "<unk>", "<bos>", "<eos>"};
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocabulary(std::move(tokens));
}

}  // namespace moclip
