#include "styleap/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

const char* to_string(PromptStrategy s) noexcept {
  switch (s) {
    case PromptStrategy::RetrievedTarget: return "retrieved_target";
    case PromptStrategy::RetrievedSource: return "retrieved_source";
    case PromptStrategy::Random: return "random";
    case PromptStrategy::Fixed: return "fixed";
    case PromptStrategy::Unsupervised: return "unsupervised";
  }
  return "?";
}

PromptStrategy parse_strategy(const std::string& name) {
  for (auto s : {PromptStrategy::RetrievedTarget, PromptStrategy::RetrievedSource, PromptStrategy::Random,
                 PromptStrategy::Fixed, PromptStrategy::Unsupervised}) {
    if (name == to_string(s)) return s;
  }
  throw Error(ErrorKind::Config, "unknown strategy '" + name +
                                     "' (expected retrieved_target, retrieved_source, random, fixed or unsupervised)");
}

std::string augment_text(std::string_view prompt, std::string_view payload, const SpecialTokens& specials) {
  std::string out = escape_specials(prompt, specials);
  if (!out.empty()) out += ' ';
  out += specials.separator;
  const std::string rest = escape_specials(payload, specials);
  if (!rest.empty()) out += ' ' + rest;
  return out;
}

std::string unescape_specials(std::string_view text, const SpecialTokens& specials) {
  auto words = split_whitespace(text);
  for (auto& w : words) {
    if (w.starts_with(kEscape)) {
      const std::string rest = w.substr(kEscape.size());
      if (escape_specials(rest, specials) == w) w = rest;
    }
  }
  return join(words, " ");
}

std::vector<TokenId> augment_ids(std::span<const TokenId> prompt, TokenId separator, std::span<const TokenId> payload) {
  std::vector<TokenId> out(prompt.begin(), prompt.end());
  out.push_back(separator);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

SeparatorSplit split_at_separator(std::span<const TokenId> ids, TokenId separator) {
  SeparatorSplit s;
  const auto it = std::find(ids.begin(), ids.end(), separator);
  if (it == ids.end()) {
    s.payload.assign(ids.begin(), ids.end());
    return s;
  }
  s.found = true;
  s.prompt.assign(ids.begin(), it);
  s.payload.assign(it + 1, ids.end());
  return s;
}

std::pair<std::string, std::string> split_augmented_text(std::string_view text, const SpecialTokens& specials) {
  const auto words = split_whitespace(text);
  const auto it = std::find(words.begin(), words.end(), specials.separator);
  if (it == words.end()) return {"", unescape_specials(text, specials)};
  const std::vector<std::string> head(words.begin(), it), tail(it + 1, words.end());
  return {unescape_specials(join(head, " "), specials), unescape_specials(join(tail, " "), specials)};
}

namespace {

std::unordered_set<std::size_t> exclusion(const Datastore& store, const std::string& own_target, bool enabled) {
  std::unordered_set<std::size_t> ex;
  if (!enabled) return ex;
  for (auto id : store.ids_with_value(own_target)) ex.insert(id);
  return ex;
}

std::string nearest(const Datastore& store, const EmbeddingProvider& provider, std::string_view query,
                    const std::unordered_set<std::size_t>& exclude) {
  const QueryResult r = store.query(provider.embed_text(query), 1, exclude);
  if (r.hits.empty()) {
    throw Error(ErrorKind::Config, "store '" + store.style_id() + "' has no candidate left after excluding the query");
  }
  return r.hits.front().value;
}

std::string random_entry(const Datastore& store, std::mt19937_64* rng, const std::unordered_set<std::size_t>& exclude) {
  if (!rng) throw Error(ErrorKind::Config, "random strategy requires a seeded generator");
  if (exclude.size() >= store.size()) {
    throw Error(ErrorKind::Config, "store '" + store.style_id() + "' has no candidate left after exclusion");
  }
  std::uniform_int_distribution<std::size_t> pick(0, store.size() - exclude.size() - 1);
  std::size_t k = pick(*rng);
  for (std::size_t id = 0; id < store.size(); ++id) {
    if (exclude.count(id)) continue;
    if (k-- == 0) return store.value(id);
  }
  return store.value(store.size() - 1);
}

}  // namespace

PromptedPair build_training_pair(const ParallelPair& pair, const Datastore& store, const EmbeddingProvider& provider,
                                 const PromptOptions& options, const SpecialTokens& specials, std::mt19937_64* rng) {
  if (store.size() == 0) throw Error(ErrorKind::Config, "prompt store '" + store.style_id() + "' is empty");
  const auto exclude = exclusion(store, pair.target.text, options.exclude_self);
  std::string prompt;
  switch (options.strategy) {
    case PromptStrategy::RetrievedTarget:
    case PromptStrategy::Unsupervised: prompt = nearest(store, provider, pair.target.text, exclude); break;
    case PromptStrategy::RetrievedSource: prompt = nearest(store, provider, pair.source.text, exclude); break;
    case PromptStrategy::Random: prompt = random_entry(store, rng, exclude); break;
    case PromptStrategy::Fixed:
      if (!options.fixed_prompt) throw Error(ErrorKind::Config, "strategy fixed requires a fixed prompt");
      prompt = *options.fixed_prompt;
      break;
  }
  PromptedPair out;
  out.prompt.text = prompt;
  out.source.text = pair.source.text;
  out.target.text = pair.target.text;
  out.augmented_source.text = augment_text(prompt, pair.source.text, specials);
  out.augmented_target.text = augment_text(prompt, pair.target.text, specials);
  out.strategy = options.strategy;
  return out;
}

const Datastore& PromptStores::for_pair(const ParallelPair& pair) const {
  if (pair.style_label) {
    if (auto it = by_style.find(*pair.style_label); it != by_style.end() && it->second) return *it->second;
  }
  if (!default_store) {
    throw Error(ErrorKind::Config, "no prompt store for pair with style '" + pair.style_label.value_or("") + "'");
  }
  return *default_store;
}

nlohmann::json BuiltDataset::sidecar(const PromptOptions& options, const MixConfig& mix,
                                     std::uint32_t store_checksum) const {
  nlohmann::json j;
  j["strategy"] = to_string(options.strategy);
  j["exclude_self"] = options.exclude_self;
  if (options.fixed_prompt) j["fixed_prompt"] = *options.fixed_prompt;
  j["seed"] = mix.seed;
  j["prompted_fraction"] = mix.prompted_fraction;
  j["examples"] = examples.size();
  j["selected_for_prompting"] = selected;
  j["prompted"] = std::count(prompted.begin(), prompted.end(), 1);
  j["dropped_over_length"] = dropped_over_length;
  j["datastore_checksum"] = store_checksum;
  return j;
}

BuiltDataset build_dataset(std::span<const ParallelPair> pairs, const PromptStores& stores,
                           const EmbeddingProvider& provider, const PromptOptions& options, const MixConfig& mix,
                           const Tokenizer& tokenizer, std::size_t max_len) {
  if (!(mix.prompted_fraction >= 0.0 && mix.prompted_fraction <= 1.0)) {
    throw Error(ErrorKind::Config, "prompted_fraction must be in [0, 1]");
  }
  const auto& sp = tokenizer.specials();
  const std::size_t n = pairs.size();
  BuiltDataset out;
  out.selected = static_cast<std::size_t>(std::llround(mix.prompted_fraction * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 mix_rng(derive_seed(mix.seed, "mix"));
  std::shuffle(order.begin(), order.end(), mix_rng);
  std::vector<char> chosen(n, 0);
  for (std::size_t i = 0; i < out.selected; ++i) chosen[order[i]] = 1;

  std::mt19937_64 prompt_rng(derive_seed(mix.seed, "random-prompt"));
  out.examples.reserve(n);
  out.prompted.assign(n, 0);
  out.prompts.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    const ParallelPair& p = pairs[i];
    ParallelPair ex;
    ex.style_label = p.style_label;
    if (chosen[i]) {
      PromptedPair pp = build_training_pair(p, stores.for_pair(p), provider, options, sp, &prompt_rng);
      const auto src_len = tokenizer.encode_trusted(pp.augmented_source.text).size();
      const auto tgt_len = tokenizer.encode_trusted(pp.augmented_target.text).size();
      if (src_len <= max_len && tgt_len <= max_len) {
        ex.source.text = std::move(pp.augmented_source.text);
        ex.target.text = std::move(pp.augmented_target.text);
        out.prompted[i] = 1;
        out.prompts[i] = std::move(pp.prompt.text);
        out.examples.push_back(std::move(ex));
        continue;
      }
      ++out.dropped_over_length;
    }
    ex.source.text = escape_specials(p.source.text, sp);
    ex.target.text = escape_specials(p.target.text, sp);
    out.examples.push_back(std::move(ex));
  }
  return out;
}

std::vector<ParallelPair> tag_dataset(std::span<const ParallelPair> pairs, const Tokenizer& tokenizer,
                                      const std::vector<std::string>& tag_styles) {
  const auto& sp = tokenizer.specials();
  std::vector<ParallelPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    ParallelPair ex;
    ex.style_label = p.style_label;
    ex.source.text = escape_specials(p.source.text, sp);
    ex.target.text = escape_specials(p.target.text, sp);
    if (p.style_label && std::find(tag_styles.begin(), tag_styles.end(), *p.style_label) != tag_styles.end()) {
      tokenizer.tag_id(*p.style_label);  // throws for an unregistered style
      ex.source.text = sp.style_tags.at(*p.style_label) + (ex.source.text.empty() ? "" : " " + ex.source.text);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

Sentence select_prompt_inference(const Sentence& draft, const Sentence& source, const Datastore& style_store,
                                 const EmbeddingProvider& provider, const PromptOptions& options,
                                 std::mt19937_64* rng) {
  if (options.strategy == PromptStrategy::Fixed) {
    if (!options.fixed_prompt) throw Error(ErrorKind::Config, "strategy fixed requires a fixed prompt");
    return Sentence{*options.fixed_prompt, {}};
  }
  if (style_store.size() == 0) throw Error(ErrorKind::Config, "style store '" + style_store.style_id() + "' is empty");
  switch (options.strategy) {
    case PromptStrategy::RetrievedSource: return Sentence{nearest(style_store, provider, source.text, {}), {}};
    case PromptStrategy::Random: return Sentence{random_entry(style_store, rng, {}), {}};
    default: return Sentence{nearest(style_store, provider, draft.text, {}), {}};
  }
}

Datastore unsupervised_pool(std::span<const StyledCorpus> corpora, const EmbeddingProvider& provider, Metric metric,
                            const std::string& pool_id) {
  if (corpora.empty()) throw Error(ErrorKind::Config, "unsupervised pool needs at least one corpus");
  StyledCorpus pool;
  pool.style_id = pool_id;
  pool.language = corpora.front().language;
  for (const auto& c : corpora) pool.sentences.insert(pool.sentences.end(), c.sentences.begin(), c.sentences.end());
  return Datastore::build(pool, provider, metric);
}

}  // namespace styleap
