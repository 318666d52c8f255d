#include "styleap/classifier.hpp"

#include "styleap/bleu.hpp"
#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

LexiconClassifier::LexiconClassifier(std::map<std::string, std::set<std::string>> lexicons)
    : lexicons_(std::move(lexicons)) {}

std::map<std::string, std::size_t> LexiconClassifier::marker_counts(std::string_view hypothesis) const {
  std::map<std::string, std::size_t> counts;
  // Punctuation is split off so "word." still counts as a marker.
  for (const auto& w : bleu_tokenize(hypothesis, BleuTokenization::Builtin)) {
    for (const auto& [style, lex] : lexicons_) {
      if (lex.count(w)) ++counts[style];
    }
  }
  return counts;
}

bool LexiconClassifier::is_marker(const std::string& word, const std::string& style_id) const {
  const auto it = lexicons_.find(style_id);
  return it != lexicons_.end() && it->second.count(word) != 0;
}

std::optional<std::string> LexiconClassifier::classify(std::string_view hypothesis) const {
  const auto counts = marker_counts(hypothesis);
  if (counts.size() != 1) return std::nullopt;
  return counts.begin()->first;
}

nlohmann::json LexiconClassifier::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [style, lex] : lexicons_) j[style] = std::vector<std::string>(lex.begin(), lex.end());
  return j;
}

LexiconClassifier LexiconClassifier::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::Format, "lexicon file: expected an object of style -> word list");
  std::map<std::string, std::set<std::string>> lex;
  for (const auto& [style, words] : j.items()) {
    if (!words.is_array()) throw Error(ErrorKind::Format, "lexicon file: style '" + style + "' is not a list");
    for (const auto& w : words) lex[style].insert(w.get<std::string>());
  }
  return LexiconClassifier(std::move(lex));
}

void LexiconClassifier::save(const std::string& path) const { write_file(path, to_json().dump(1) + "\n"); }

LexiconClassifier LexiconClassifier::load(const std::string& path) {
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, path + ": " + e.what());
  }
}

double transfer_ratio(std::span<const std::string> hypotheses, const std::string& style_id,
                      const StyleClassifier& classifier) {
  if (hypotheses.empty()) throw Error(ErrorKind::Config, "transfer ratio of an empty hypothesis set");
  if (!classifier.covers(style_id)) throw Error(ErrorKind::Config, "classifier does not cover style '" + style_id + "'");
  std::size_t hit = 0;
  for (const auto& h : hypotheses) {
    if (classifier.classify(h) == style_id) ++hit;
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(hypotheses.size());
}

}  // namespace styleap
