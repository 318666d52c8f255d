#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace styleap {

enum class BleuTokenization { None, Builtin };

BleuTokenization parse_bleu_tokenization(const std::string& name);

struct BleuOptions {
  BleuTokenization tokenization = BleuTokenization::Builtin;
  bool smooth = false;          // add-epsilon on zero-match orders
  double smooth_epsilon = 0.1;
};

struct BleuScore {
  double score = 0.0;                    // [0, 100]
  std::array<double, 4> precisions{};    // clipped n-gram precisions in [0, 1]
  std::array<std::size_t, 4> matches{};  // clipped counts
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

/// Word tokens used for n-gram counting. None: whitespace split. Builtin:
/// whitespace split with each ASCII punctuation character as its own token.
std::vector<std::string> bleu_tokenize(std::string_view text, BleuTokenization mode);

/// Corpus-level BLEU with one reference per hypothesis: clipped n-gram
/// precisions up to 4, geometric mean, brevity penalty exp(1 - r/c) when c < r.
/// Throws Error(Config) on a length mismatch or an empty corpus.
BleuScore corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                      const BleuOptions& options = {});

}  // namespace styleap
