#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lumos::instruct {

/// Lower-cases and splits into pieces: words are maximal runs of letters,
/// digits, apostrophes, hyphens and non-ASCII bytes; every other
/// non-whitespace character is a one-character punctuation piece.
std::vector<std::string> split_pieces(std::string_view text);
/// Pieces joined by single spaces, with punctuation attached to the piece before it.
std::string join_pieces(const std::vector<std::string>& pieces);
/// join_pieces(split_pieces(text)).
std::string normalize(std::string_view text);

/// Word-level vocabulary over a fixed lexicon with byte fallback.
///
/// Ids: BOS, EOS, 256 byte tokens, then lexicon words in order. A piece outside
/// the lexicon is spelled out as bytes; a space byte separates it from a
/// directly preceding spelled-out piece.
class Tokenizer {
 public:
  static constexpr std::int32_t kBos = 0;
  static constexpr std::int32_t kEos = 1;
  static constexpr std::int32_t kByteBase = 2;
  static constexpr std::int32_t kWordBase = kByteBase + 256;
  static constexpr std::size_t kMaxLen = 77;

  /// Template lexicon vocabulary.
  Tokenizer();
  explicit Tokenizer(std::vector<std::string> lexicon);

  /// BOS, up to kMaxLen - 2 content tokens, EOS.
  std::vector<std::int32_t> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const std::int32_t> ids) const;
  std::size_t vocab_size() const { return static_cast<std::size_t>(kWordBase) + words_.size(); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

}  // namespace lumos::instruct
