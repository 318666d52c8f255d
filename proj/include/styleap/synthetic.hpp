#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleap/report.hpp"
#include "styleap/types.hpp"

namespace styleap {

/// Style rule: stylable word number i is rendered as w + suffixes[i % n].
/// Several suffixes make the styled form word-specific, the way real style is
/// lexical, while the shared letters still mark the style as a whole.
struct StyleTransform {
  std::string style_id;
  std::vector<std::string> suffixes;

  const std::string& suffix_for(std::size_t word_index) const { return suffixes[word_index % suffixes.size()]; }
};

/// A two-language toy task. Target words are invented CVC strings; stylable
/// words are six letters and take a per-style, per-word suffix in styled
/// sentences.
/// Source words are target words with the last vowel rotated, so the word
/// mapping is one-to-one and monotonic.
struct SyntheticTaskSpec {
  std::size_t content_words = 150;
  std::size_t stylable_words = 40;
  std::size_t min_length = 4;
  std::size_t max_length = 8;
  std::size_t min_stylable = 1;
  std::size_t max_stylable = 2;
  std::size_t parallel_size = 5000;  // includes mono_size styled pairs per style
  std::size_t mono_size = 1000;      // stylized sentences per style
  std::size_t test_size = 500;
  std::vector<StyleTransform> styles{{"A", {"eth", "ath", "oth"}}, {"B", {"ay", "oy", "ey"}}};
  std::uint64_t seed = 1;

  /// Throws Error(Config) for an inconsistent spec.
  void validate() const;
  nlohmann::json to_json() const;
  static SyntheticTaskSpec from_json(const nlohmann::json& j);
};

struct SyntheticTask {
  /// Neutral pairs (no label) and styled pairs (label = style id), shuffled.
  std::vector<ParallelPair> parallel;
  /// Target sides of each style's labelled pairs, in parallel-corpus order.
  std::vector<StyledCorpus> mono;
  MultiwayTestSet test;
  std::map<std::string, std::set<std::string>> lexicons;

  /// Neutral target sentences of the parallel corpus (unlabelled pairs).
  StyledCorpus neutral_targets() const;
};

SyntheticTask generate_synthetic(const SyntheticTaskSpec& spec);

struct SyntheticFiles {
  std::string parallel = "parallel.tsv";
  std::map<std::string, std::string> mono;  // style -> file name (mono_<style>.txt)
  std::string test = "test.jsonl";
  std::string lexicon = "lexicon.json";
  std::string manifest = "manifest.json";
};

/// Writes the task under dir and returns the file names used.
SyntheticFiles write_synthetic(const SyntheticTask& task, const SyntheticTaskSpec& spec, const std::string& dir);

}  // namespace styleap
