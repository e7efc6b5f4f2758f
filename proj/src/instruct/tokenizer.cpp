#include "lumos/instruct/tokenizer.hpp"

#include <cctype>
#include <stdexcept>

#include "lumos/instruct/instruction.hpp"

namespace lumos::instruct {
namespace {

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c == '\'' || c == '-' || c >= 0x80;
}

bool is_punct_piece(const std::string& p) {
  return p.size() == 1 && !is_word_byte(static_cast<unsigned char>(p[0]));
}

}  // namespace

std::vector<std::string> split_pieces(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      word += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
      continue;
    }
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
    if (!std::isspace(c)) out.emplace_back(1, ch);
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}

std::string join_pieces(const std::vector<std::string>& pieces) {
  std::string out;
  for (const std::string& p : pieces) {
    if (!out.empty() && !is_punct_piece(p)) out += ' ';
    out += p;
  }
  return out;
}

std::string normalize(std::string_view text) { return join_pieces(split_pieces(text)); }

Tokenizer::Tokenizer() : Tokenizer(template_lexicon()) {}

Tokenizer::Tokenizer(std::vector<std::string> lexicon) : words_(std::move(lexicon)) {
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!ids_.emplace(words_[i], kWordBase + static_cast<std::int32_t>(i)).second) {
      throw std::invalid_argument("duplicate lexicon word '" + words_[i] + "'");
    }
  }
}

std::vector<std::int32_t> Tokenizer::tokenize(std::string_view text) const {
  std::vector<std::int32_t> out{kBos};
  const std::size_t limit = kMaxLen - 1;
  bool prev_spelled = false;
  for (const std::string& piece : split_pieces(text)) {
    if (out.size() >= limit) break;
    const auto it = ids_.find(piece);
    if (it != ids_.end()) {
      out.push_back(it->second);
      prev_spelled = false;
      continue;
    }
    if (prev_spelled && !is_punct_piece(piece)) out.push_back(kByteBase + ' ');
    for (char ch : piece) {
      if (out.size() >= limit) break;
      out.push_back(kByteBase + static_cast<unsigned char>(ch));
    }
    prev_spelled = true;
  }
  out.resize(std::min(out.size(), limit));
  out.push_back(kEos);
  return out;
}

std::string Tokenizer::detokenize(std::span<const std::int32_t> ids) const {
  std::vector<std::string> pieces;
  std::string bytes;
  auto flush = [&] {
    for (std::string& p : split_pieces(bytes)) pieces.push_back(std::move(p));
    bytes.clear();
  };
  for (std::int32_t id : ids) {
    if (id == kBos || id == kEos) continue;
    if (id >= kByteBase && id < kWordBase) {
      bytes += static_cast<char>(id - kByteBase);
      continue;
    }
    const auto w = static_cast<std::size_t>(id - kWordBase);
    if (id < kWordBase || w >= words_.size()) throw std::out_of_range("token id " + std::to_string(id));
    flush();
    pieces.push_back(words_[w]);
  }
  flush();
  return join_pieces(pieces);
}

}  // namespace lumos::instruct
