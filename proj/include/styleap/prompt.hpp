#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleap/datastore.hpp"
#include "styleap/embedder.hpp"
#include "styleap/tokenizer.hpp"
#include "styleap/types.hpp"

namespace styleap {

enum class PromptStrategy { RetrievedTarget, RetrievedSource, Random, Fixed, Unsupervised };

const char* to_string(PromptStrategy s) noexcept;
PromptStrategy parse_strategy(const std::string& name);

struct PromptedPair {
  Sentence prompt;
  Sentence source;
  Sentence target;
  Sentence augmented_source;  // prompt [s] source
  Sentence augmented_target;  // prompt [s] target
  PromptStrategy strategy = PromptStrategy::RetrievedTarget;
};

struct PromptOptions {
  PromptStrategy strategy = PromptStrategy::RetrievedTarget;
  std::optional<std::string> fixed_prompt;
  /// Exclude store entries equal to the pair's own target (training only).
  bool exclude_self = true;
};

/// Text form of prompt ⊕ [s] ⊕ payload. Special-token literals inside prompt or
/// payload are escaped, so the result encodes (via Tokenizer::encode_trusted)
/// to encode(prompt), [s], encode(payload).
std::string augment_text(std::string_view prompt, std::string_view payload, const SpecialTokens& specials);

/// Undoes the escaping applied by augment_text / escape_specials.
std::string unescape_specials(std::string_view text, const SpecialTokens& specials);

/// Token form of prompt ⊕ [s] ⊕ payload.
std::vector<TokenId> augment_ids(std::span<const TokenId> prompt, TokenId separator, std::span<const TokenId> payload);

struct SeparatorSplit {
  std::vector<TokenId> prompt;
  std::vector<TokenId> payload;  // everything when found is false
  bool found = false;
};

/// Splits at the first separator id.
SeparatorSplit split_at_separator(std::span<const TokenId> ids, TokenId separator);

/// Splits augmented text at the first whole-word separator and unescapes both parts.
std::pair<std::string, std::string> split_augmented_text(std::string_view text, const SpecialTokens& specials);

/// Prompted version of one training pair. retrieved_target queries the store
/// with the target; retrieved_source with the source; unsupervised is
/// retrieved_target over a pooled store; random draws uniformly with rng; fixed
/// uses options.fixed_prompt. Throws Error(Config) when exclusion leaves no
/// candidate or a required input (rng, fixed prompt) is missing.
PromptedPair build_training_pair(const ParallelPair& pair, const Datastore& store, const EmbeddingProvider& provider,
                                 const PromptOptions& options, const SpecialTokens& specials,
                                 std::mt19937_64* rng = nullptr);

struct MixConfig {
  double prompted_fraction = 0.5;
  std::uint64_t seed = 1;
};

/// Which store prompts a training pair: by style label, else the default store.
struct PromptStores {
  const Datastore* default_store = nullptr;
  std::map<std::string, const Datastore*> by_style;

  const Datastore& for_pair(const ParallelPair& pair) const;
};

struct BuiltDataset {
  /// Training examples in input order, in the trusted text form accepted by
  /// Tokenizer::encode_trusted; style labels are carried through.
  std::vector<ParallelPair> examples;
  std::vector<char> prompted;            // parallel to examples
  std::vector<std::string> prompts;      // parallel to examples; empty when plain
  std::size_t selected = 0;              // round(prompted_fraction * n)
  std::size_t dropped_over_length = 0;   // selected but kept plain (augmented side > max_len)

  nlohmann::json sidecar(const PromptOptions& options, const MixConfig& mix, std::uint32_t store_checksum) const;
};

/// Prompts a seeded subset of round(fraction * n) pairs. Pairs whose augmented
/// side exceeds max_len tokens are kept in plain form.
BuiltDataset build_dataset(std::span<const ParallelPair> pairs, const PromptStores& stores,
                           const EmbeddingProvider& provider, const PromptOptions& options, const MixConfig& mix,
                           const Tokenizer& tokenizer, std::size_t max_len);

/// Tag-tuning data: the source of every pair whose label is in tag_styles is
/// prefixed with that style's tag token; other pairs pass through plain.
std::vector<ParallelPair> tag_dataset(std::span<const ParallelPair> pairs, const Tokenizer& tokenizer,
                                      const std::vector<std::string>& tag_styles);

/// Inference prompt for a draft. retrieved_target and unsupervised query with
/// the draft, retrieved_source with the source, random draws with rng, fixed
/// returns options.fixed_prompt verbatim.
Sentence select_prompt_inference(const Sentence& draft, const Sentence& source, const Datastore& style_store,
                                 const EmbeddingProvider& provider, const PromptOptions& options,
                                 std::mt19937_64* rng = nullptr);

/// One store over the concatenation of the corpora, style labels dropped.
Datastore unsupervised_pool(std::span<const StyledCorpus> corpora, const EmbeddingProvider& provider,
                            Metric metric = Metric::Cosine, const std::string& pool_id = "pool");

}  // namespace styleap
