#include "styleap/experiment.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_set>

#include "styleap/corpus.hpp"
#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

nlohmann::json ExperimentConfig::to_json() const {
  return {{"task", task.to_json()},
          {"model", model.to_json()},
          {"train", train.to_json()},
          {"tokenizer", {{"max_vocab", tokenizer.max_vocab}, {"min_frequency", tokenizer.min_frequency}}},
          {"embedder", embedder},
          {"metric", to_string(metric)},
          {"prompted_fraction", prompted_fraction},
          {"decode", {{"beam", decode.beam}, {"max_len", decode.max_len}}},
          {"max_len", max_len},
          {"dev_size", dev_size},
          {"size_levels", size_levels},
          {"attention_events", attention_events},
          {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("task")) c.task = SyntheticTaskSpec::from_json(j.at("task"));
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  if (j.contains("tokenizer")) {
    c.tokenizer.max_vocab = j.at("tokenizer").value("max_vocab", c.tokenizer.max_vocab);
    c.tokenizer.min_frequency = j.at("tokenizer").value("min_frequency", c.tokenizer.min_frequency);
  }
  c.embedder = j.value("embedder", c.embedder);
  if (j.contains("metric")) c.metric = parse_metric(j.at("metric").get<std::string>());
  c.prompted_fraction = j.value("prompted_fraction", c.prompted_fraction);
  if (j.contains("decode")) {
    c.decode.beam = j.at("decode").value("beam", c.decode.beam);
    c.decode.max_len = j.at("decode").value("max_len", c.decode.max_len);
  }
  c.max_len = j.value("max_len", c.max_len);
  c.dev_size = j.value("dev_size", c.dev_size);
  c.size_levels = j.value("size_levels", c.size_levels);
  c.attention_events = j.value("attention_events", c.attention_events);
  c.seed = j.value("seed", c.seed);
  return c;
}

StoreRegistry Workspace::registry() const {
  StoreRegistry r;
  for (const auto& [style, store] : style_stores) r.add(style, store);
  return r;
}

Workspace prepare_workspace(const ExperimentConfig& config) {
  Workspace ws;
  ws.config = config;
  ws.config.task.seed = derive_seed(config.seed, "task");
  ws.task = generate_synthetic(ws.config.task);

  std::vector<StyledCorpus> text{source_side(ws.task.parallel), target_side(ws.task.parallel)};
  TokenizerOptions topt = config.tokenizer;
  topt.tag_styles.clear();
  for (const auto& c : ws.task.mono) topt.tag_styles.push_back(c.style_id);
  ws.tokenizer = Tokenizer::train(text, topt);

  ws.provider = make_provider(config.embedder);
  for (const auto& c : ws.task.mono) {
    ws.style_stores[c.style_id] = std::make_shared<const Datastore>(Datastore::build(c, *ws.provider, config.metric));
  }
  const StyledCorpus neutral = ws.task.neutral_targets();
  ws.neutral_store = std::make_shared<const Datastore>(Datastore::build(neutral, *ws.provider, config.metric));
  std::vector<StyledCorpus> all = ws.task.mono;
  all.push_back(neutral);
  ws.pool = std::make_shared<const Datastore>(unsupervised_pool(all, *ws.provider, config.metric));
  ws.classifier = LexiconClassifier(ws.task.lexicons);
  return ws;
}

void encode_examples(std::span<const ParallelPair> pairs, const Tokenizer& tokenizer, std::size_t max_len,
                     std::size_t dev_size, std::uint64_t seed, std::vector<TrainingExample>& train,
                     std::vector<TrainingExample>& dev) {
  std::vector<TrainingExample> all;
  for (const auto& p : pairs) {
    TrainingExample ex{tokenizer.encode_trusted(p.source.text), tokenizer.encode_trusted(p.target.text)};
    if (ex.source.size() <= max_len && ex.target.size() <= max_len) all.push_back(std::move(ex));
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "dev-split"));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_dev = std::min(dev_size, all.size() / 10);
  std::vector<char> is_dev(all.size(), 0);
  for (std::size_t i = 0; i < n_dev; ++i) is_dev[order[i]] = 1;
  train.clear();
  dev.clear();
  for (std::size_t i = 0; i < all.size(); ++i) (is_dev[i] ? dev : train).push_back(std::move(all[i]));
}

TrainedModel train_on(const Workspace& ws, std::span<const ParallelPair> dataset, const std::string& label,
                      const Logger& log) {
  std::vector<TrainingExample> tr, dev;
  const std::uint64_t seed = derive_seed(ws.config.seed, label);
  encode_examples(dataset, ws.tokenizer, ws.config.max_len, ws.config.dev_size, seed, tr, dev);
  TrainedModel out;
  out.model = std::make_unique<TranslationModel>(ws.tokenizer, ws.config.model, derive_seed(seed, "init"));
  TrainConfig tc = ws.config.train;
  tc.seed = derive_seed(seed, "train");
  out.result = train(*out.model, tr, dev, tc, [&](const CurvePoint& p) {
    if (log) {
      log(label + " step " + std::to_string(p.step) + " loss " + format_number(p.loss) + " dev " +
          format_number(p.dev_loss));
    }
  });
  return out;
}

std::map<std::string, StyledCorpus> subsample_styles(const std::vector<StyledCorpus>& corpora, std::size_t n,
                                                     std::uint64_t seed) {
  std::map<std::string, StyledCorpus> out;
  for (const auto& c : corpora) {
    if (n > c.sentences.size()) {
      throw Error(ErrorKind::Config, "level " + std::to_string(n) + " exceeds corpus '" + c.style_id + "' of size " +
                                         std::to_string(c.sentences.size()));
    }
    std::vector<std::size_t> idx(c.sentences.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(derive_seed(derive_seed(seed, c.style_id), static_cast<std::uint64_t>(n)));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());
    StyledCorpus sub{c.style_id, c.language, {}};
    for (std::size_t i : idx) sub.sentences.push_back(c.sentences[i]);
    out[c.style_id] = std::move(sub);
  }
  return out;
}

std::vector<ParallelPair> tag_training_data(const Workspace& ws, const std::map<std::string, StyledCorpus>& tagged) {
  std::map<std::string, std::unordered_set<std::string>> keep;
  for (const auto& [style, c] : tagged) {
    for (const auto& s : c.sentences) keep[style].insert(s.text);
  }
  std::vector<ParallelPair> pairs = ws.task.parallel;
  std::vector<std::string> styles;
  for (auto& p : pairs) {
    if (p.style_label && !keep[*p.style_label].count(p.target.text)) p.style_label.reset();
  }
  for (const auto& [style, c] : tagged) styles.push_back(style);
  return tag_dataset(pairs, ws.tokenizer, styles);
}

SystemOutputs plain_outputs(const std::string& name, const TranslationModel& model, const MultiwayTestSet& test,
                            const DecodeOptions& decode) {
  SystemOutputs out{name, {}};
  std::vector<std::string> hyps;
  for (const auto& item : test.items) hyps.push_back(model.translate(item.source, decode).text);
  for (const auto& s : test.styles) out.hypotheses[s] = hyps;
  return out;
}

SystemOutputs tagged_outputs(const std::string& name, const TranslationModel& model, const MultiwayTestSet& test,
                             const DecodeOptions& decode) {
  SystemOutputs out{name, {}};
  for (const auto& s : test.styles) {
    auto& hyps = out.hypotheses[s];
    for (const auto& item : test.items) hyps.push_back(translate_tagged(model, item.source, s, decode).text);
  }
  return out;
}

SystemOutputs styleap_outputs(const std::string& name, const StylePipeline& pipeline, const MultiwayTestSet& test,
                              PromptStrategy strategy, std::uint64_t run_seed,
                              const std::map<std::string, std::string>& fixed_prompts, std::size_t* fallbacks) {
  SystemOutputs out{name, {}};
  std::size_t fb = 0;
  for (const auto& s : test.styles) {
    std::vector<StyledRequest> reqs;
    for (const auto& item : test.items) {
      StyledRequest r;
      r.source = item.source;
      r.style_id = s;
      r.strategy = strategy;
      if (auto it = fixed_prompts.find(s); it != fixed_prompts.end()) r.fixed_prompt = it->second;
      reqs.push_back(std::move(r));
    }
    const auto results = pipeline.batch_translate_styled(reqs, derive_seed(run_seed, s));
    auto& hyps = out.hypotheses[s];
    for (const auto& r : results) {
      hyps.push_back(r.hypothesis.text);
      fb += r.fallback_used ? 1 : 0;
    }
  }
  if (fallbacks) *fallbacks = fb;
  return out;
}

ComparisonReport strategy_ablation(const TranslationModel& model, const StoreRegistry& stores,
                                   const EmbeddingProvider& provider, const MultiwayTestSet& test,
                                   const StyleClassifier& classifier, const DecodeOptions& decode,
                                   std::uint64_t run_seed, std::map<std::string, std::string> fixed_prompts) {
  for (const auto& s : test.styles) {
    if (!fixed_prompts.count(s)) {
      const Datastore& store = stores.at(s);
      if (store.size() == 0) throw Error(ErrorKind::Config, "style store '" + s + "' is empty");
      fixed_prompts[s] = store.value(0);
    }
  }
  const StylePipeline pipeline(model, stores, provider, decode);
  std::vector<SystemOutputs> systems;
  for (auto strategy : {PromptStrategy::RetrievedTarget, PromptStrategy::RetrievedSource, PromptStrategy::Random,
                        PromptStrategy::Fixed}) {
    systems.push_back(styleap_outputs(to_string(strategy), pipeline, test, strategy, run_seed, fixed_prompts));
  }
  return run_comparison(systems, test, classifier);
}

const SweepRow& SweepReport::at(std::size_t level, const std::string& system, const std::string& style) const {
  for (const auto& r : rows) {
    if (r.level == level && r.system == system && r.style == style) return r;
  }
  throw Error(ErrorKind::NotFound, "no sweep row for level " + std::to_string(level) + ", " + system + ", " + style);
}

std::string SweepReport::to_csv() const {
  std::ostringstream out;
  out << "level,system,style,bleu,transfer_ratio\n";
  for (const auto& r : rows) {
    out << r.level << ',' << r.system << ',' << r.style << ',' << format_number(r.bleu) << ','
        << format_number(r.transfer_ratio) << '\n';
  }
  return out.str();
}

SweepReport size_sweep(const std::vector<std::size_t>& levels, const std::vector<StyledCorpus>& corpora,
                       const TranslationModel& styleap_model, const TranslationModel* baseline_model,
                       const TagModelBuilder& build_tag, const EmbeddingProvider& provider, Metric metric,
                       const MultiwayTestSet& test, const StyleClassifier& classifier, const DecodeOptions& decode,
                       std::uint64_t seed, const Logger& log) {
  for (std::size_t level : levels) {
    for (const auto& c : corpora) {
      if (level == 0 || level > c.sentences.size()) {
        throw Error(ErrorKind::Config, "sweep level " + std::to_string(level) + " invalid for corpus '" + c.style_id +
                                           "' of size " + std::to_string(c.sentences.size()));
      }
    }
  }
  SweepReport report;
  std::vector<SystemOutputs> fixed_systems;
  if (baseline_model) fixed_systems.push_back(plain_outputs("baseline", *baseline_model, test, decode));
  const ComparisonReport base = run_comparison(fixed_systems, test, classifier);

  for (std::size_t level : levels) {
    const auto sub = subsample_styles(corpora, level, seed);
    StoreRegistry stores;
    for (const auto& [style, c] : sub) stores.add(style, std::make_shared<const Datastore>(Datastore::build(c, provider, metric)));
    const StylePipeline pipeline(styleap_model, stores, provider, decode);
    std::vector<SystemOutputs> systems{
        styleap_outputs("styleap", pipeline, test, PromptStrategy::RetrievedTarget, derive_seed(seed, level))};
    if (build_tag) {
      const auto tag_model = build_tag(level, sub);
      systems.push_back(tagged_outputs("tag", *tag_model, test, decode));
    }
    const ComparisonReport rep = run_comparison(systems, test, classifier);
    std::vector<const ComparisonRow*> rows;
    for (const auto& r : rep.rows) rows.push_back(&r);
    for (const auto& r : base.rows) rows.push_back(&r);
    for (const auto* r : rows) {
      for (const auto& s : test.styles) {
        const auto& cell = r->by_style.at(s);
        report.rows.push_back({level, r->system, s, cell.bleu.score, cell.transfer_ratio});
      }
    }
    if (log) log("sweep level " + std::to_string(level) + " done");
  }
  return report;
}

namespace {

bool is_continuation(const std::string& piece) {
  return piece.size() > kContinuation.size() && piece.compare(0, kContinuation.size(), kContinuation) == 0;
}

}  // namespace

AttentionStats attention_analysis(const StylePipeline& pipeline, const TranslationModel& model,
                                  const MultiwayTestSet& test, const LexiconClassifier& classifier,
                                  std::size_t min_events) {
  AttentionStats stats;
  const Tokenizer& tok = model.tokenizer();
  const int last = model.config().dec_layers - 1;
  if (last < 0) return stats;
  const int heads = model.config().heads;
  for (std::size_t i = 0; i < test.items.size() && stats.events < min_events; ++i) {
    const std::string& style = test.styles[i % test.styles.size()];
    StyledRequest req;
    req.source = test.items[i].source;
    req.style_id = style;
    req.seed = derive_seed(std::uint64_t{0x5eed}, static_cast<std::uint64_t>(i));
    const StyledResult r = pipeline.translate_styled(req);
    if (r.fallback_used) continue;
    ++stats.items;
    const std::vector<TokenId> src = augment_ids(r.prompt_used.tokens, tok.separator_id(), tok.encode(req.source.text));
    const AttentionTrace trace = model.network().attention(src, r.raw_output);
    nn::Matrix<float> avg = trace.self(last, 0);
    for (int h = 1; h < heads; ++h) avg += trace.self(last, h);
    avg /= static_cast<float>(heads);

    // Decoder input j (0 = BOS) emits raw_output[j]; the copied prompt sits at
    // inputs 1..P, the separator at P + 1.
    const auto sep = std::find(r.raw_output.begin(), r.raw_output.end(), tok.separator_id());
    const auto prompt_len = static_cast<Eigen::Index>(sep - r.raw_output.begin());
    // Group the payload into words (a word-initial piece plus continuations).
    // A marker spelled by one piece is its own event token; a multi-piece marker
    // is decided where it leaves its stem, at its first continuation piece.
    const auto n = static_cast<Eigen::Index>(r.raw_output.size());
    for (Eigen::Index start = prompt_len + 1; start < n;) {
      Eigen::Index end = start + 1;
      while (end < n && is_continuation(tok.piece(r.raw_output[static_cast<std::size_t>(end)]))) ++end;
      const std::vector<TokenId> word(r.raw_output.begin() + start, r.raw_output.begin() + end);
      const bool marker = classifier.is_marker(tok.decode(word), style);
      const Eigen::Index j = end - start > 1 ? start + 1 : start;
      start = end;
      if (!marker) continue;
      Eigen::Index best = -1;
      float best_v = -1.0f;
      for (Eigen::Index k = 0; k <= j - 2; ++k) {
        if (avg(j, k) > best_v) {
          best_v = avg(j, k);
          best = k;
        }
      }
      if (best < 0) continue;
      ++stats.events;
      if (best >= 1 && best <= prompt_len) ++stats.in_prompt;
    }
  }
  return stats;
}

nlohmann::json ExperimentResult::to_json() const {
  nlohmann::json j;
  j["main"] = main.to_json();
  j["strategies"] = strategies.to_json();
  j["sweep"] = nlohmann::json::array();
  for (const auto& r : sweep.rows) {
    j["sweep"].push_back({{"level", r.level}, {"system", r.system}, {"style", r.style},
                          {"bleu", format_number(r.bleu)}, {"transfer_ratio", format_number(r.transfer_ratio)}});
  }
  j["attention"] = {{"events", attention.events}, {"in_prompt", attention.in_prompt}, {"items", attention.items},
                    {"fraction", format_number(attention.fraction())}};
  j["fallbacks"] = fallbacks;
  for (const auto& [name, tr] : training) {
    nlohmann::json t{{"best_step", tr.best_step}, {"best_dev_loss", format_number(tr.best_dev_loss)}, {"steps", tr.steps}};
    for (const auto& p : tr.curve) {
      t["curve"].push_back({p.step, format_number(p.loss), format_number(p.dev_loss)});
    }
    j["training"][name] = t;
  }
  return j;
}

std::string ExperimentResult::to_text() const {
  std::ostringstream out;
  out << "== systems\n" << main.to_table() << "\n== retrieval strategies\n" << strategies.to_table();
  out << "\n== size sweep\n" << sweep.to_csv();
  out << "\n== attention: " << attention.in_prompt << "/" << attention.events << " marker emissions attend into the prompt ("
      << format_number(100.0 * attention.fraction(), 2) << "%)\n";
  out << "== second-pass fallbacks:";
  for (const auto& [name, n] : fallbacks) out << ' ' << name << '=' << n;
  out << '\n';
  return out.str();
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Logger& log) {
  auto note = [&](const std::string& m) {
    if (log) log(m);
  };
  const Workspace ws = prepare_workspace(config);
  note("workspace ready: " + std::to_string(ws.task.parallel.size()) + " pairs, vocabulary " +
       std::to_string(ws.tokenizer.vocab_size()));
  ExperimentResult res;
  const auto& test = ws.task.test;
  const auto& decode = config.decode;
  const std::size_t max_len = config.max_len;

  PromptStores sup;
  sup.default_store = ws.neutral_store.get();
  for (const auto& [style, store] : ws.style_stores) sup.by_style[style] = store.get();
  PromptStores unsup;
  unsup.default_store = ws.pool.get();

  const MixConfig plain_mix{0.0, derive_seed(config.seed, "mix")};
  const MixConfig mix{config.prompted_fraction, derive_seed(config.seed, "mix")};
  PromptOptions sup_opts;
  sup_opts.strategy = PromptStrategy::RetrievedTarget;
  PromptOptions unsup_opts;
  unsup_opts.strategy = PromptStrategy::Unsupervised;

  const BuiltDataset baseline_data =
      build_dataset(ws.task.parallel, sup, *ws.provider, sup_opts, plain_mix, ws.tokenizer, max_len);
  const BuiltDataset sup_data = build_dataset(ws.task.parallel, sup, *ws.provider, sup_opts, mix, ws.tokenizer, max_len);
  std::vector<ParallelPair> unlabeled = ws.task.parallel;
  for (auto& p : unlabeled) p.style_label.reset();
  const BuiltDataset unsup_data =
      build_dataset(unlabeled, unsup, *ws.provider, unsup_opts, mix, ws.tokenizer, max_len);

  TrainedModel baseline = train_on(ws, baseline_data.examples, "baseline", log);
  res.training["baseline"] = baseline.result;
  TrainedModel styleap = train_on(ws, sup_data.examples, "styleap", log);
  res.training["styleap"] = styleap.result;
  TrainedModel styleap_u = train_on(ws, unsup_data.examples, "styleap_unsup", log);
  res.training["styleap_unsup"] = styleap_u.result;

  std::map<std::size_t, std::shared_ptr<const TranslationModel>> tag_models;
  auto build_tag = [&](std::size_t level, const std::map<std::string, StyledCorpus>& sub) {
    const std::string label = "tag_" + std::to_string(level);
    TrainedModel t = train_on(ws, tag_training_data(ws, sub), label, log);
    res.training[label] = t.result;
    std::shared_ptr<const TranslationModel> m = std::move(t.model);
    tag_models[level] = m;
    return m;
  };

  const StoreRegistry stores = ws.registry();
  const StylePipeline pipe(*styleap.model, stores, *ws.provider, decode);
  const StylePipeline pipe_u(*styleap_u.model, stores, *ws.provider, decode);

  const std::uint64_t run_seed = derive_seed(config.seed, "inference");
  std::vector<SystemOutputs> systems;
  systems.push_back(plain_outputs("baseline", *baseline.model, test, decode));
  systems.push_back(styleap_outputs("styleap", pipe, test, PromptStrategy::RetrievedTarget, run_seed, {},
                                    &res.fallbacks["styleap"]));
  systems.push_back(styleap_outputs("styleap_unsup", pipe_u, test, PromptStrategy::RetrievedTarget, run_seed, {},
                                    &res.fallbacks["styleap_unsup"]));

  // The full-data tag model is also the sweep's largest level when it equals the corpus size.
  res.sweep = size_sweep(config.size_levels, ws.task.mono, *styleap.model, baseline.model.get(),
                         build_tag,
                         *ws.provider, config.metric, test, ws.classifier, decode, derive_seed(config.seed, "sweep"),
                         log);
  const std::size_t full = ws.task.mono.front().sentences.size();
  if (!tag_models.count(full)) {
    build_tag(full, subsample_styles(ws.task.mono, full, derive_seed(config.seed, "sweep")));
  }
  systems.insert(systems.begin() + 1, tagged_outputs("tag", *tag_models[full], test, decode));
  res.main = run_comparison(systems, test, ws.classifier);
  note("main comparison done");

  res.strategies = strategy_ablation(*styleap.model, stores, *ws.provider, test, ws.classifier, decode, run_seed);
  note("strategy ablation done");

  res.attention = attention_analysis(pipe, *styleap.model, test, ws.classifier, config.attention_events);
  note("attention analysis done");
  return res;
}

}  // namespace styleap
