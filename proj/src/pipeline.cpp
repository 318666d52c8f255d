#include "styleap/pipeline.hpp"

#include <random>
#include <sstream>

#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

void StoreRegistry::add(std::shared_ptr<const Datastore> store) {
  const std::string id = store->style_id();
  add(id, std::move(store));
}

void StoreRegistry::add(const std::string& style_id, std::shared_ptr<const Datastore> store) {
  if (!store) throw Error(ErrorKind::Config, "null store for style '" + style_id + "'");
  stores_[style_id] = std::move(store);
}

const Datastore& StoreRegistry::at(const std::string& style_id) const {
  const auto it = stores_.find(style_id);
  if (it == stores_.end()) throw Error(ErrorKind::NotFound, "unknown style '" + style_id + "'");
  return *it->second;
}

std::vector<std::string> StoreRegistry::styles() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : stores_) out.push_back(k);
  return out;
}

StylePipeline::StylePipeline(const TranslationModel& model, const StoreRegistry& stores,
                             const EmbeddingProvider& provider, DecodeOptions decode)
    : model_(model), stores_(stores), provider_(provider), decode_(decode) {}

std::vector<TokenId> StylePipeline::ids(const Sentence& s) const {
  return s.tokens.empty() && !s.text.empty() ? model_.tokenizer().encode(s.text) : s.tokens;
}

Hypothesis StylePipeline::run(std::span<const TokenId> input) const {
  invocations_.fetch_add(1);
  return model_.decode(input, decode_);
}

Sentence StylePipeline::translate_plain(const Sentence& source) const {
  Hypothesis h = run(ids(source));
  return Sentence{model_.tokenizer().decode(h.tokens), std::move(h.tokens)};
}

StyledResult StylePipeline::translate_styled(const StyledRequest& request) const {
  const Datastore& store = stores_.at(request.style_id);
  if (store.size() == 0 && request.strategy != PromptStrategy::Fixed) {
    throw Error(ErrorKind::Config, "style store '" + request.style_id + "' is empty");
  }
  const Tokenizer& tok = model_.tokenizer();
  const auto src = ids(request.source);

  StyledResult r;
  Hypothesis draft = run(src);
  r.draft.text = tok.decode(draft.tokens);
  r.draft.tokens = std::move(draft.tokens);

  std::mt19937_64 rng(derive_seed(request.seed, "prompt"));
  const PromptOptions options{request.strategy, request.fixed_prompt, false};
  Sentence source_text = request.source;
  if (source_text.text.empty() && !source_text.tokens.empty()) source_text.text = tok.decode(source_text.tokens);
  r.prompt_used = select_prompt_inference(r.draft, source_text, store, provider_, options, &rng);
  r.prompt_used.tokens = tok.encode(r.prompt_used.text);

  Hypothesis out = run(augment_ids(r.prompt_used.tokens, tok.separator_id(), src));
  r.raw_output = std::move(out.tokens);
  const SeparatorSplit split = split_at_separator(r.raw_output, tok.separator_id());
  r.fallback_used = !split.found;
  r.hypothesis.tokens = split.payload;
  r.hypothesis.text = tok.decode(split.payload);
  return r;
}

std::vector<StyledResult> StylePipeline::batch_translate_styled(std::span<const StyledRequest> requests,
                                                                std::uint64_t run_seed) const {
  std::vector<StyledResult> out(requests.size());
  std::ostringstream errors;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    StyledRequest req = requests[i];
    req.seed = derive_seed(run_seed, static_cast<std::uint64_t>(i));
    try {
      out[i] = translate_styled(req);
    } catch (const Error& e) {
      errors << (failed++ ? "; " : "") << "item " << i << ": " << e.what();
    }
  }
  if (failed) throw Error(ErrorKind::Runtime, std::to_string(failed) + " request(s) failed: " + errors.str());
  return out;
}

Sentence translate_tagged(const TranslationModel& tag_model, const Sentence& source, const std::string& style_id,
                          const DecodeOptions& decode) {
  const Tokenizer& tok = tag_model.tokenizer();
  const TokenId tag = tok.tag_id(style_id);
  std::vector<TokenId> input{tag};
  const auto src = source.tokens.empty() && !source.text.empty() ? tok.encode(source.text) : source.tokens;
  input.insert(input.end(), src.begin(), src.end());
  Hypothesis h = tag_model.decode(input, decode);
  return Sentence{tok.decode(h.tokens), std::move(h.tokens)};
}

nlohmann::json result_json(const StyledRequest& request, const StyledResult& result) {
  return nlohmann::json{{"source", request.source.text},       {"draft", result.draft.text},
                        {"prompt", result.prompt_used.text},    {"hypothesis", result.hypothesis.text},
                        {"style_id", request.style_id},         {"fallback", result.fallback_used}};
}

}  // namespace styleap
