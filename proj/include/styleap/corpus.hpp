#pragma once

#include <span>
#include <string>
#include <vector>

#include "styleap/tokenizer.hpp"
#include "styleap/types.hpp"

namespace styleap {

/// Parallel corpus TSV: `source<TAB>target[<TAB>style_label]`, one pair per
/// line, UTF-8, no header. All malformed lines are reported in one error.
std::vector<ParallelPair> load_parallel_tsv(const std::string& path);
void save_parallel_tsv(const std::string& path, std::span<const ParallelPair> pairs);

/// Monolingual corpus: one sentence per line.
StyledCorpus load_monolingual(const std::string& path, const std::string& style_id,
                              const std::string& language);
void save_monolingual(const std::string& path, const StyledCorpus& corpus);

/// Manifest entry `{style_id, language, path}`; relative paths resolve
/// against the manifest's directory.
struct CorpusManifestEntry {
  std::string style_id;
  std::string language;
  std::string path;
};
std::vector<CorpusManifestEntry> load_manifest(const std::string& path);
void save_manifest(const std::string& path, std::span<const CorpusManifestEntry> entries);
std::vector<StyledCorpus> load_manifest_corpora(const std::string& path);

void tokenize_pairs(std::span<ParallelPair> pairs, const Tokenizer& tokenizer);
void tokenize_corpus(StyledCorpus& corpus, const Tokenizer& tokenizer);

/// Keeps pairs whose source and target both have at most max_len tokens
/// (subword tokens). Order preserved. Pairs must already be tokenized.
std::vector<ParallelPair> length_filter(std::span<const ParallelPair> pairs, std::size_t max_len);

/// Views the source or target side of a parallel corpus as a corpus.
StyledCorpus source_side(std::span<const ParallelPair> pairs, const std::string& language = "src");
StyledCorpus target_side(std::span<const ParallelPair> pairs, const std::string& language = "trg");

}  // namespace styleap
