#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace styleap {

/// Sentence-level style judgment.
class StyleClassifier {
 public:
  virtual ~StyleClassifier() = default;
  /// The detected style, or nullopt for unclassified.
  virtual std::optional<std::string> classify(std::string_view hypothesis) const = 0;
  virtual bool covers(const std::string& style_id) const = 0;
};

/// Style S iff the hypothesis has at least one word from lexicon(S) and none
/// from any other lexicon.
class LexiconClassifier final : public StyleClassifier {
 public:
  LexiconClassifier() = default;
  explicit LexiconClassifier(std::map<std::string, std::set<std::string>> lexicons);

  std::optional<std::string> classify(std::string_view hypothesis) const override;
  bool covers(const std::string& style_id) const override { return lexicons_.count(style_id) != 0; }

  const std::map<std::string, std::set<std::string>>& lexicons() const noexcept { return lexicons_; }
  /// Marker words of each style present in the text.
  std::map<std::string, std::size_t> marker_counts(std::string_view hypothesis) const;
  bool is_marker(const std::string& word, const std::string& style_id) const;

  /// {"A": ["w1", ...], "B": [...]}
  nlohmann::json to_json() const;
  static LexiconClassifier from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static LexiconClassifier load(const std::string& path);

 private:
  std::map<std::string, std::set<std::string>> lexicons_;
};

/// 100 * |classified as style_id| / n. Throws Error(Config) on empty input or an
/// uncovered style.
double transfer_ratio(std::span<const std::string> hypotheses, const std::string& style_id,
                      const StyleClassifier& classifier);

}  // namespace styleap
