#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleap/datastore.hpp"
#include "styleap/embedder.hpp"
#include "styleap/prompt.hpp"
#include "styleap/translator.hpp"

namespace styleap {

struct StyledRequest {
  Sentence source;
  std::string style_id;
  PromptStrategy strategy = PromptStrategy::RetrievedTarget;
  std::uint64_t seed = 0;  // drives the random strategy
  std::optional<std::string> fixed_prompt;
};

struct StyledResult {
  Sentence hypothesis;
  Sentence prompt_used;
  Sentence draft;
  bool fallback_used = false;
  std::vector<TokenId> raw_output;  // full second-pass output
};

/// style_id -> datastore.
class StoreRegistry {
 public:
  void add(std::shared_ptr<const Datastore> store);
  void add(const std::string& style_id, std::shared_ptr<const Datastore> store);
  /// Throws Error(NotFound) naming the style.
  const Datastore& at(const std::string& style_id) const;
  bool contains(const std::string& style_id) const { return stores_.count(style_id) != 0; }
  std::vector<std::string> styles() const;

 private:
  std::map<std::string, std::shared_ptr<const Datastore>> stores_;
};

/// Two-pass styled inference over one jointly trained model.
class StylePipeline {
 public:
  StylePipeline(const TranslationModel& model, const StoreRegistry& stores, const EmbeddingProvider& provider,
                DecodeOptions decode = {});

  /// Pass 1 translates the source; the draft queries the style store; pass 2
  /// translates prompt [s] source and keeps the text after the first [s]. With no
  /// [s] in the output the whole output is returned and fallback_used is set.
  StyledResult translate_styled(const StyledRequest& request) const;

  /// Element-wise translate_styled; request i uses seed derive_seed(run_seed, i).
  /// Failures are collected and reported together with their indices.
  std::vector<StyledResult> batch_translate_styled(std::span<const StyledRequest> requests,
                                                   std::uint64_t run_seed) const;

  /// Single-pass translation without prompt (also counted).
  Sentence translate_plain(const Sentence& source) const;

  /// Number of model decode calls so far.
  std::size_t invocations() const noexcept { return invocations_.load(); }

  const DecodeOptions& decode_options() const noexcept { return decode_; }

 private:
  Hypothesis run(std::span<const TokenId> input) const;
  std::vector<TokenId> ids(const Sentence& s) const;

  const TranslationModel& model_;
  const StoreRegistry& stores_;
  const EmbeddingProvider& provider_;
  DecodeOptions decode_;
  mutable std::atomic<std::size_t> invocations_{0};
};

/// translate(tag(style_id) ⊕ source). Throws Error(NotFound) for an unknown tag.
Sentence translate_tagged(const TranslationModel& tag_model, const Sentence& source, const std::string& style_id,
                          const DecodeOptions& decode = {});

/// One JSON-lines record: {source, draft, prompt, hypothesis, style_id, fallback}.
nlohmann::json result_json(const StyledRequest& request, const StyledResult& result);

}  // namespace styleap
