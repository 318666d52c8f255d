#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleap/types.hpp"

namespace styleap {

/// Reserved vocabulary entries. None of these strings is ever produced by
/// tokenizing raw text; see Tokenizer::encode.
struct SpecialTokens {
  std::string pad = "<pad>";
  std::string unk = "<unk>";
  std::string bos = "<s>";
  std::string eos = "</s>";
  std::string separator = "[s]";
  std::map<std::string, std::string> style_tags;  // style_id -> tag token

  static std::string default_tag(const std::string& style_id) { return "<2" + style_id + ">"; }

  bool operator==(const SpecialTokens&) const = default;
};

/// Prefixed to whole-word occurrences of special-token strings in raw text.
/// U+E000 (private use area).
inline constexpr std::string_view kEscape = "\xEE\x80\x80";

/// Marks a word-internal piece, WordPiece style.
inline constexpr std::string_view kContinuation = "##";

struct TokenizerOptions {
  std::size_t max_vocab = 2000;
  std::size_t min_frequency = 2;
  std::vector<std::string> tag_styles;  // one tag token is reserved per entry
};

/// Greedy longest-match word/subword tokenizer.
///
/// The vocabulary holds the reserved specials, the escape piece, one tag per
/// style, every observed character in word-initial and continuation form, and
/// the most frequent whole words (count >= min_frequency) up to max_vocab.
/// Known words map to one id; unknown words are segmented left to right by the
/// longest matching piece, and an unmatched code point becomes <unk>.
class Tokenizer {
 public:
  static Tokenizer train(std::span<const StyledCorpus> corpora, const TokenizerOptions& options);

  /// Tokenizes untrusted text: special-token literals are escaped first.
  std::vector<TokenId> encode(std::string_view raw) const;

  /// Tokenizes text produced by this library, where a whole word equal to a
  /// special-token string denotes that special id.
  std::vector<TokenId> encode_trusted(std::string_view text) const;

  Sentence tokenize(std::string_view raw) const;

  /// Inverse of encode for in-vocabulary text. <pad>, <s>, </s> are dropped.
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t vocab_size() const noexcept { return pieces_.size(); }
  const std::string& piece(TokenId id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view piece) const;

  TokenId pad_id() const noexcept { return 0; }
  TokenId unk_id() const noexcept { return 1; }
  TokenId bos_id() const noexcept { return 2; }
  TokenId eos_id() const noexcept { return 3; }
  TokenId separator_id() const noexcept { return 4; }
  TokenId escape_id() const noexcept { return first_regular_; }
  /// Throws Error(NotFound) for an unregistered style.
  TokenId tag_id(const std::string& style_id) const;
  bool is_special(TokenId id) const noexcept { return id >= 0 && id < first_regular_; }
  std::vector<TokenId> tag_ids() const;

  const SpecialTokens& specials() const noexcept { return specials_; }
  const TokenizerOptions& options() const noexcept { return options_; }

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);

  bool operator==(const Tokenizer& other) const { return pieces_ == other.pieces_ && specials_ == other.specials_; }

 private:
  void index();
  void encode_word(std::string_view word, std::vector<TokenId>& out) const;

  SpecialTokens specials_;
  TokenizerOptions options_;
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> regular_;  // non-special pieces only
  std::unordered_map<std::string, TokenId> special_lookup_;
  TokenId first_regular_ = 0;
  std::size_t max_piece_bytes_ = 1;
};

/// Prefixes every whole-word special-token literal with kEscape.
std::string escape_specials(std::string_view raw, const SpecialTokens& specials);

}  // namespace styleap
