#include "styleap/bleu.hpp"

#include <cctype>
#include <cmath>
#include <map>

#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

BleuTokenization parse_bleu_tokenization(const std::string& name) {
  if (name == "none") return BleuTokenization::None;
  if (name == "builtin") return BleuTokenization::Builtin;
  throw Error(ErrorKind::Config, "unknown BLEU tokenization '" + name + "' (expected none or builtin)");
}

std::vector<std::string> bleu_tokenize(std::string_view text, BleuTokenization mode) {
  if (mode == BleuTokenization::None) return split_whitespace(text);
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      flush();
      out.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& words, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

BleuScore corpus_bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                      const BleuOptions& options) {
  if (hypotheses.size() != references.size()) {
    throw Error(ErrorKind::Config, "BLEU: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                                       std::to_string(references.size()) + " references");
  }
  if (hypotheses.empty()) throw Error(ErrorKind::Config, "BLEU: empty corpus");

  BleuScore s;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto hyp = bleu_tokenize(hypotheses[i], options.tokenization);
    const auto ref = bleu_tokenize(references[i], options.tokenization);
    s.hyp_len += hyp.size();
    s.ref_len += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const NgramCounts h = count_ngrams(hyp, n);
      const NgramCounts r = count_ngrams(ref, n);
      for (const auto& [gram, count] : h) {
        s.totals[n - 1] += count;
        if (auto it = r.find(gram); it != r.end()) s.matches[n - 1] += std::min(count, it->second);
      }
    }
  }

  bool any_zero = false;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double p = s.totals[n] ? static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]) : 0.0;
    s.precisions[n] = p;
    if (p == 0.0 && options.smooth && s.totals[n] > 0) p = options.smooth_epsilon / static_cast<double>(s.totals[n]);
    if (p == 0.0) {
      any_zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  if (s.hyp_len == 0) {
    s.brevity_penalty = 0.0;
  } else if (s.hyp_len >= s.ref_len) {
    s.brevity_penalty = 1.0;
  } else {
    s.brevity_penalty = std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len));
  }
  s.score = any_zero ? 0.0 : 100.0 * s.brevity_penalty * std::exp(log_sum / 4.0);
  return s;
}

}  // namespace styleap
