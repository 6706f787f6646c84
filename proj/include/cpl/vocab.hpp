#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cpl {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// Token inventory with three reserved ids at fixed positions. Regular tokens
/// follow, ordered by descending corpus frequency and then lexicographically.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kMask = 2;

  /// Specials only.
  Vocabulary();

  /// From a full token list. The first three entries must be the special
  /// tokens; remaining strings must be unique.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }

  /// kUnk for unknown strings.
  TokenId id_of(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Order-sensitive hash of all token strings; used to reject mixing
  /// artifacts produced under different vocabularies.
  std::uint64_t fingerprint() const;

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> lookup_;
};

/// Deterministic word splitter: ASCII letters and digits are lowercased and
/// grouped into runs, whitespace separates, and any other byte becomes a
/// single-character token. No locale involvement.
std::vector<std::string> split_words(std::string_view text);

/// Tokens with frequency >= min_freq across corpus_texts, plus specials.
/// Throws std::invalid_argument("empty corpus") when corpus_texts is empty.
Vocabulary build_vocab(const std::vector<std::string>& corpus_texts, std::size_t min_freq);

/// split_words, then map through the vocabulary (unknown -> kUnk). An empty
/// result is allowed; encode-side operations reject empty sequences instead.
TokenSeq tokenize(const Vocabulary& vocab, std::string_view text);

std::string detokenize(const Vocabulary& vocab, const TokenSeq& seq);

}  // namespace cpl
