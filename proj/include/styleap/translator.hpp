#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "styleap/model.hpp"
#include "styleap/tokenizer.hpp"
#include "styleap/types.hpp"

namespace styleap {

struct DecodeOptions {
  int beam = 4;
  /// Maximum emitted tokens (EOS excluded). 0 selects 2 * |source| + 10,
  /// always capped by the model's positional table.
  int max_len = 0;
};

/// One decoded sequence with its model scores.
struct Hypothesis {
  std::vector<TokenId> tokens;  // EOS excluded
  double log_prob = 0.0;        // sum over emitted tokens and EOS when finished
  bool finished = false;        // ended with EOS rather than the length cap

  double normalized() const { return log_prob / static_cast<double>(tokens.size() + (finished ? 1 : 0)); }
};

/// Transformer plus the vocabulary it was trained with.
class TranslationModel {
 public:
  TranslationModel(Tokenizer tokenizer, const ModelConfig& config, std::uint64_t seed);

  const Tokenizer& tokenizer() const noexcept { return tokenizer_; }
  const ModelConfig& config() const noexcept { return network_.config(); }
  Transformer<float>& network() noexcept { return network_; }
  const Transformer<float>& network() const noexcept { return network_; }

  /// Beam search with length-normalized scores (log p / length). beam = 1 is
  /// greedy argmax decoding. Specials other than the separator and EOS are never
  /// emitted, and the separator at most once.
  Hypothesis decode(std::span<const TokenId> source, const DecodeOptions& options = {}) const;

  /// Text in, text out. The output text keeps any separator as "[s]".
  Sentence translate(const Sentence& source, const DecodeOptions& options = {}) const;

  /// Greedy decode plus the teacher-forced attention of the decoded output.
  std::pair<Sentence, AttentionTrace> translate_with_attention(const Sentence& source, int max_len = 0) const;

  /// Sum of log p(target_i | ...) including the final EOS.
  double score(std::span<const TokenId> source, std::span<const TokenId> target) const;

  void save(const std::string& path) const;
  static TranslationModel load(const std::string& path);
  std::string serialize() const;
  static TranslationModel deserialize(std::string_view bytes);

 private:
  std::vector<TokenId> source_ids(const Sentence& s) const;
  int resolve_max_len(std::size_t source_len, int requested) const;

  Tokenizer tokenizer_;
  Transformer<float> network_;
  std::vector<char> banned_;  // per vocabulary id
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace styleap
