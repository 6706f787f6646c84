#include "cpl/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace cpl {

namespace {

const char* kSpecials[3] = {"[PAD]", "[UNK]", "[MASK]"};

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char lower_byte(unsigned char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c);
}

std::uint64_t fnv1a64_str(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  // separator byte so ["ab","c"] and ["a","bc"] hash differently
  h ^= 0xff;
  h *= 1099511628211ULL;
  return h;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary({kSpecials[0], kSpecials[1], kSpecials[2]}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 3 || tokens_[0] != kSpecials[0] || tokens_[1] != kSpecials[1] ||
      tokens_[2] != kSpecials[2]) {
    throw std::invalid_argument("vocabulary must start with [PAD], [UNK], [MASK]");
  }
  lookup_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!lookup_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate token in vocabulary: " + tokens_[i]);
    }
  }
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = lookup_.find(std::string(token));
  return it == lookup_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return lookup_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens_) h = fnv1a64_str(h, t);
  return h;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string run;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      run.push_back(lower_byte(c));
      continue;
    }
    if (!run.empty()) {
      out.push_back(std::move(run));
      run.clear();
    }
    if (!is_space_byte(c)) out.push_back(std::string(1, static_cast<char>(c)));
  }
  if (!run.empty()) out.push_back(std::move(run));
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus_texts, std::size_t min_freq) {
  if (corpus_texts.empty()) throw std::invalid_argument("empty corpus");
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& text : corpus_texts) {
    for (auto& w : split_words(text)) ++freq[w];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  kept.reserve(freq.size());
  for (auto& [word, count] : freq) {
    if (count >= min_freq) kept.emplace_back(word, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens = {kSpecials[0], kSpecials[1], kSpecials[2]};
  tokens.reserve(kept.size() + 3);
  for (auto& [word, count] : kept) tokens.push_back(word);
  return Vocabulary(std::move(tokens));
}

TokenSeq tokenize(const Vocabulary& vocab, std::string_view text) {
  TokenSeq out;
  for (const auto& w : split_words(text)) out.push_back(vocab.id_of(w));
  return out;
}

std::string detokenize(const Vocabulary& vocab, const TokenSeq& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += vocab.token(seq[i]);
  }
  return out;
}

}  // namespace cpl
