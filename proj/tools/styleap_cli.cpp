// styleap: corpus preparation, datastore building, prompted data construction,
// training, styled translation, evaluation and ablations.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "styleap/bleu.hpp"
#include "styleap/classifier.hpp"
#include "styleap/corpus.hpp"
#include "styleap/datastore.hpp"
#include "styleap/embedder.hpp"
#include "styleap/error.hpp"
#include "styleap/experiment.hpp"
#include "styleap/pipeline.hpp"
#include "styleap/prompt.hpp"
#include "styleap/report.hpp"
#include "styleap/synthetic.hpp"
#include "styleap/text.hpp"
#include "styleap/train.hpp"
#include "styleap/translator.hpp"

namespace fs = std::filesystem;
using namespace styleap;
using json = nlohmann::json;

namespace {

struct Common {
  std::uint64_t seed = 1;
  std::string config;
  bool overwrite = false;
  bool verbose = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Base seed; every sub-seed is derived from it")->capture_default_str();
  sub->add_option("--config", c.config, "JSON file of flag values (flags given on the command line win)");
  sub->add_flag("--overwrite", c.overwrite, "Replace existing outputs");
  sub->add_flag("--verbose", c.verbose, "More logging; full detail in JSON reports");
}

void log_line(const Common& c, const std::string& msg) {
  if (c.verbose) std::cerr << msg << '\n';
}

json typed(const std::string& v) {
  if (v.empty()) return v;
  const json parsed = json::parse(v, nullptr, false);
  return parsed.is_number() || parsed.is_boolean() ? parsed : json(v);
}

/// Resolved values of every option of a subcommand.
json run_config(const CLI::App* sub) {
  json j;
  j["command"] = sub->get_name();
  if (sub->get_parent() && sub->get_parent()->get_parent()) {
    j["command"] = sub->get_parent()->get_name() + " " + sub->get_name();
  }
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (opt->get_expected_max() > 1 || res.size() > 1) {
        json arr = json::array();
        for (const auto& r : res) arr.push_back(typed(r));
        j["options"][name] = arr;
      } else if (opt->get_type_size() == 0) {
        j["options"][name] = true;
      } else {
        j["options"][name] = res.empty() ? json("") : typed(res.front());
      }
    } else if (!opt->get_default_str().empty()) {
      j["options"][name] = typed(opt->get_default_str());
    }
  }
  return j;
}

void echo_config(const json& cfg) { std::cout << "run-config " << cfg.dump() << std::endl; }

void require_absent(const std::string& path, const Common& c) {
  if (!c.overwrite && fs::exists(path)) {
    throw Error(ErrorKind::Config, "output '" + path + "' exists (pass --overwrite to replace it)");
  }
}

void archive(const json& cfg, const std::string& output_path) {
  write_file(output_path + ".run.json", cfg.dump(2) + "\n");
}

void ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::pair<std::string, std::string> key_value(const std::string& s, const std::string& what) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
    throw Error(ErrorKind::Config, what + " '" + s + "' is not of the form KEY=VALUE");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

std::map<std::string, std::string> key_values(const std::vector<std::string>& items, const std::string& what) {
  std::map<std::string, std::string> out;
  for (const auto& it : items) {
    auto [k, v] = key_value(it, what);
    if (out.count(k)) throw Error(ErrorKind::Config, what + " given twice for '" + k + "'");
    out[k] = v;
  }
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, what + " '" + path + "' not found");
}

std::map<std::string, std::shared_ptr<const Datastore>> load_stores(const std::map<std::string, std::string>& files) {
  std::map<std::string, std::shared_ptr<const Datastore>> out;
  for (const auto& [style, path] : files) {
    require_file(path, "datastore");
    out[style] = std::make_shared<const Datastore>(Datastore::load(path));
  }
  return out;
}

void check_dimension(const Datastore& store, const EmbeddingProvider& provider) {
  if (store.dimension() != provider.dimension()) {
    throw Error(ErrorKind::Dimension, "datastore '" + store.style_id() + "' has dimension " +
                                          std::to_string(store.dimension()) + " but embedder " + provider.name() +
                                          " produces " + std::to_string(provider.dimension()));
  }
}

std::vector<std::string> read_sources(const std::string& path) {
  require_file(path, "input");
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  const bool jsonl = path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl";
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (jsonl) {
      if (trim(line).empty()) continue;
      out.push_back(json::parse(line).at("source").get<std::string>());
    } else {
      out.push_back(line);
    }
  }
  return out;
}

std::vector<std::string> read_hypotheses(const std::string& path) {
  require_file(path, "hypothesis file");
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  const bool jsonl = path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl";
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (jsonl) {
      if (trim(line).empty()) continue;
      out.push_back(json::parse(line).at("hypothesis").get<std::string>());
    } else {
      out.push_back(line);
    }
  }
  return out;
}

/// Inserts `--key value` for config-file keys the command line does not set.
std::vector<std::string> merge_config_file(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  require_file(path, "config file");
  json cfg;
  try {
    cfg = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path + ": " + e.what());
  }
  if (!cfg.is_object()) throw Error(ErrorKind::Format, path + ": expected a JSON object of flag values");
  std::vector<std::string> extra;
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    bool given = false;
    for (const auto& a : args) given = given || a == flag || a.rfind(flag + "=", 0) == 0;
    if (given) continue;
    auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        extra.push_back(flag);
        extra.push_back(scalar(v));
      }
    } else {
      extra.push_back(flag);
      extra.push_back(scalar(value));
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------- model/train flags

struct ModelFlags {
  ModelConfig model;
  TrainConfig train;
  std::size_t dev_size = 200;
  std::size_t max_len = 64;

  void add(CLI::App* sub) {
    sub->add_option("--enc-layers", model.enc_layers)->capture_default_str();
    sub->add_option("--dec-layers", model.dec_layers)->capture_default_str();
    sub->add_option("--model-dim", model.model_dim)->capture_default_str();
    sub->add_option("--heads", model.heads)->capture_default_str();
    sub->add_option("--ffn-dim", model.ffn_dim)->capture_default_str();
    sub->add_option("--dropout", model.dropout)->capture_default_str();
    sub->add_option("--label-smoothing", model.label_smoothing)->capture_default_str();
    sub->add_option("--max-steps", train.max_steps)->capture_default_str();
    sub->add_option("--batch-tokens", train.batch_tokens)->capture_default_str();
    sub->add_option("--lr", train.learning_rate, "Peak learning rate")->capture_default_str();
    sub->add_option("--warmup", train.warmup_steps)->capture_default_str();
    sub->add_option("--checkpoint-every", train.checkpoint_every, "Dev evaluation interval in steps")->capture_default_str();
    sub->add_option("--dev-size", dev_size, "Held-out examples for checkpoint selection")->capture_default_str();
    sub->add_option("--max-len", max_len, "Maximum tokens per side")->capture_default_str();
  }
};

// ---------------------------------------------------------------- gen-synthetic

struct GenArgs {
  Common common;
  std::string out;
  SyntheticTaskSpec spec;
};

void cmd_gen(const GenArgs& a, const json& cfg) {
  SyntheticTaskSpec spec = a.spec;
  spec.seed = a.common.seed;
  spec.validate();
  SyntheticFiles names;
  std::vector<std::string> outputs{names.parallel, names.test, names.lexicon, names.manifest};
  for (const auto& st : spec.styles) outputs.push_back("mono_" + st.style_id + ".txt");
  for (const auto& f : outputs) require_absent((fs::path(a.out) / f).string(), a.common);
  const SyntheticTask task = generate_synthetic(spec);
  write_synthetic(task, spec, a.out);
  archive(cfg, (fs::path(a.out) / "gen-synthetic").string());
  std::cout << "wrote " << task.parallel.size() << " parallel pairs, " << task.mono.size() << " style corpora, "
            << task.test.items.size() << " test items to " << a.out << '\n';
}

// ---------------------------------------------------------------- build-index

struct IndexArgs {
  Common common;
  std::string corpus, style, out, embedder = "hash256", metric = "cosine", model;
  std::size_t clusters = 0, nprobe = 8, iters = 10;
};

void cmd_build_index(const IndexArgs& a, const json& cfg) {
  const Metric metric = parse_metric(a.metric);
  if (a.embedder == "learned" && a.model.empty()) {
    throw Error(ErrorKind::Config, "--embedder learned requires --model");
  }
  require_absent(a.out, a.common);
  require_file(a.corpus, "corpus");
  std::shared_ptr<const TranslationModel> model;
  if (!a.model.empty()) model = std::make_shared<const TranslationModel>(TranslationModel::load(a.model));
  const auto provider = make_provider(a.embedder, model);
  const StyledCorpus corpus = load_monolingual(a.corpus, a.style, "trg");
  Datastore store = Datastore::build(corpus, *provider, metric);
  if (a.clusters > 0) {
    store.attach_index(build_ivf(store, a.clusters, a.iters, derive_seed(a.common.seed, "kmeans"),
                                 std::min(a.nprobe, a.clusters)));
  }
  ensure_parent(a.out);
  store.save(a.out);
  archive(cfg, a.out);
  std::cout << "indexed " << store.size() << " sentences of style " << a.style << " (d=" << store.dimension()
            << ", crc32=" << store.checksum() << ")\n";
}

// ---------------------------------------------------------------- make-data

struct DataArgs {
  Common common;
  std::string parallel, out, tokenizer, mode = "prompt", strategy = "retrieved_target", embedder = "hash256";
  std::string default_store, pool, fixed_prompt;
  std::vector<std::string> stores;
  double fraction = 0.5;
  std::size_t max_len = 64, max_vocab = 2000, min_frequency = 2;
  bool no_exclude_self = false, ignore_labels = false;
};

void cmd_make_data(const DataArgs& a, const json& cfg) {
  if (a.mode != "prompt" && a.mode != "tag" && a.mode != "plain") {
    throw Error(ErrorKind::Config, "--mode must be prompt, tag or plain");
  }
  const PromptStrategy strategy = parse_strategy(a.strategy);
  if (strategy == PromptStrategy::Fixed && a.fixed_prompt.empty()) {
    throw Error(ErrorKind::Config, "--strategy fixed requires --fixed-prompt");
  }
  const auto store_files = key_values(a.stores, "--store");
  require_absent(a.out, a.common);
  require_absent(a.out + ".json", a.common);

  std::vector<ParallelPair> pairs = load_parallel_tsv(a.parallel);
  if (a.ignore_labels || strategy == PromptStrategy::Unsupervised) {
    for (auto& p : pairs) p.style_label.reset();
  }
  const auto stores = load_stores(store_files);

  Tokenizer tok;
  if (fs::exists(a.tokenizer)) {
    tok = Tokenizer::load(a.tokenizer);
    log_line(a.common, "loaded tokenizer " + a.tokenizer);
  } else {
    std::vector<StyledCorpus> text{source_side(pairs), target_side(pairs)};
    TokenizerOptions opt;
    opt.max_vocab = a.max_vocab;
    opt.min_frequency = a.min_frequency;
    std::set<std::string> styles;
    for (const auto& [style, store] : stores) {
      styles.insert(style);
      StyledCorpus c{style, "trg", {}};
      for (const auto& v : store->values()) c.sentences.push_back(Sentence{v, {}});
      text.push_back(std::move(c));
    }
    for (const auto& p : load_parallel_tsv(a.parallel)) {
      if (p.style_label) styles.insert(*p.style_label);
    }
    opt.tag_styles.assign(styles.begin(), styles.end());
    tok = Tokenizer::train(text, opt);
    ensure_parent(a.tokenizer);
    tok.save(a.tokenizer);
    std::cout << "trained tokenizer with " << tok.vocab_size() << " entries -> " << a.tokenizer << '\n';
  }

  ensure_parent(a.out);
  if (a.mode == "plain" || a.mode == "tag") {
    std::vector<std::string> tag_styles;
    if (a.mode == "tag") {
      for (const auto& [style, tag] : tok.specials().style_tags) tag_styles.push_back(style);
    }
    const auto data = tag_dataset(pairs, tok, tag_styles);
    save_parallel_tsv(a.out, data);
    write_file(a.out + ".json", json{{"mode", a.mode}, {"examples", data.size()}, {"seed", a.common.seed}}.dump(2) + "\n");
    archive(cfg, a.out);
    std::cout << "wrote " << data.size() << " " << a.mode << " examples to " << a.out << '\n';
    return;
  }

  const auto provider = make_provider(a.embedder);
  for (const auto& [style, store] : stores) check_dimension(*store, *provider);

  std::shared_ptr<const Datastore> fallback;
  if (strategy == PromptStrategy::Unsupervised) {
    if (!a.pool.empty()) {
      require_file(a.pool, "pool datastore");
      fallback = std::make_shared<const Datastore>(Datastore::load(a.pool));
    } else {
      std::vector<StyledCorpus> corpora;
      for (const auto& [style, store] : stores) {
        StyledCorpus c{style, "trg", {}};
        for (const auto& v : store->values()) c.sentences.push_back(Sentence{v, {}});
        corpora.push_back(std::move(c));
      }
      StyledCorpus general{"general", "trg", {}};
      std::set<std::string> styled;
      for (const auto& c : corpora) {
        for (const auto& s : c.sentences) styled.insert(s.text);
      }
      for (const auto& p : pairs) {
        if (!styled.count(p.target.text)) general.sentences.push_back(p.target);
      }
      corpora.push_back(std::move(general));
      fallback = std::make_shared<const Datastore>(unsupervised_pool(corpora, *provider));
    }
  } else if (!a.default_store.empty()) {
    require_file(a.default_store, "default datastore");
    fallback = std::make_shared<const Datastore>(Datastore::load(a.default_store));
  } else {
    StyledCorpus neutral{"neutral", "trg", {}};
    for (const auto& p : pairs) {
      if (!p.style_label || !stores.count(*p.style_label)) neutral.sentences.push_back(p.target);
    }
    if (!neutral.sentences.empty()) {
      fallback = std::make_shared<const Datastore>(Datastore::build(neutral, *provider));
    }
  }
  if (fallback) check_dimension(*fallback, *provider);

  PromptStores routing;
  routing.default_store = fallback.get();
  if (strategy != PromptStrategy::Unsupervised) {
    for (const auto& [style, store] : stores) routing.by_style[style] = store.get();
  }
  PromptOptions opt;
  opt.strategy = strategy;
  opt.exclude_self = !a.no_exclude_self;
  if (!a.fixed_prompt.empty()) opt.fixed_prompt = a.fixed_prompt;
  const MixConfig mix{a.fraction, derive_seed(a.common.seed, "mix")};
  const BuiltDataset data = build_dataset(pairs, routing, *provider, opt, mix, tok, a.max_len);
  save_parallel_tsv(a.out, data.examples);
  std::uint32_t crc = fallback ? fallback->checksum() : 0;
  for (const auto& [style, store] : stores) crc ^= store->checksum();
  json side = data.sidecar(opt, mix, crc);
  side["mode"] = a.mode;
  side["embedder"] = provider->name();
  for (const auto& [style, store] : stores) side["store_checksums"][style] = store->checksum();
  write_file(a.out + ".json", side.dump(2) + "\n");
  archive(cfg, a.out);
  std::cout << "wrote " << data.examples.size() << " examples (" << side["prompted"].get<long>() << " prompted, "
            << data.dropped_over_length << " kept plain for length) to " << a.out << '\n';
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string data, tokenizer, out, curve;
  ModelFlags flags;
};

void cmd_train(const TrainArgs& a, const json& cfg) {
  require_absent(a.out, a.common);
  const std::string curve = a.curve.empty() ? a.out + ".curve.csv" : a.curve;
  require_absent(curve, a.common);
  require_file(a.tokenizer, "tokenizer");
  const Tokenizer tok = Tokenizer::load(a.tokenizer);
  const auto pairs = load_parallel_tsv(a.data);
  std::vector<TrainingExample> tr, dev;
  encode_examples(pairs, tok, a.flags.max_len, a.flags.dev_size, a.common.seed, tr, dev);
  if (tr.empty()) throw Error(ErrorKind::Config, "no training examples within --max-len");
  ModelConfig mc = a.flags.model;
  mc.vocab_size = static_cast<int>(tok.vocab_size());
  TranslationModel model(tok, mc, derive_seed(a.common.seed, "init"));
  TrainConfig tc = a.flags.train;
  tc.seed = derive_seed(a.common.seed, "train");
  const Common& common = a.common;
  const TrainResult r = train(model, tr, dev, tc, [&](const CurvePoint& p) {
    std::cout << "step " << p.step << " loss " << format_number(p.loss) << " dev_loss " << format_number(p.dev_loss)
              << std::endl;
    (void)common;
  });
  ensure_parent(a.out);
  model.save(a.out);
  write_file(curve, r.curve_csv());
  archive(cfg, a.out);
  std::cout << "saved checkpoint from step " << r.best_step << " (dev loss " << format_number(r.best_dev_loss)
            << ") to " << a.out << '\n';
}

// ---------------------------------------------------------------- translate

struct TranslateArgs {
  Common common;
  std::string model, input, style, out, mode = "styleap", strategy = "retrieved_target", fixed_prompt,
                                        embedder = "hash256";
  std::vector<std::string> stores;
  int beam = 4;
};

void cmd_translate(const TranslateArgs& a, const json& cfg) {
  if (a.mode != "styleap" && a.mode != "tag" && a.mode != "plain") {
    throw Error(ErrorKind::Config, "--mode must be styleap, tag or plain");
  }
  const PromptStrategy strategy = parse_strategy(a.strategy);
  if (strategy == PromptStrategy::Fixed && a.fixed_prompt.empty()) {
    throw Error(ErrorKind::Config, "--strategy fixed requires --fixed-prompt");
  }
  if (a.beam < 1) throw Error(ErrorKind::Config, "--beam must be at least 1");
  const auto store_files = key_values(a.stores, "--store");
  if (a.mode == "styleap" && !store_files.count(a.style)) {
    throw Error(ErrorKind::NotFound, "unknown style '" + a.style + "': no --store given for it");
  }
  require_absent(a.out, a.common);
  require_file(a.model, "checkpoint");
  const TranslationModel model = TranslationModel::load(a.model);
  if (a.mode == "tag" && !model.tokenizer().specials().style_tags.count(a.style)) {
    throw Error(ErrorKind::NotFound, "unknown style '" + a.style + "': the model has no tag for it");
  }
  const auto sources = read_sources(a.input);
  const DecodeOptions decode{a.beam, 0};

  std::string out;
  if (a.mode == "styleap") {
    const auto stores = load_stores(store_files);
    const auto provider = make_provider(a.embedder);
    StoreRegistry reg;
    for (const auto& [style, store] : stores) {
      check_dimension(*store, *provider);
      reg.add(style, store);
    }
    const StylePipeline pipeline(model, reg, *provider, decode);
    std::vector<StyledRequest> reqs;
    for (const auto& s : sources) {
      StyledRequest r;
      r.source.text = s;
      r.style_id = a.style;
      r.strategy = strategy;
      if (!a.fixed_prompt.empty()) r.fixed_prompt = a.fixed_prompt;
      reqs.push_back(std::move(r));
    }
    const auto results = pipeline.batch_translate_styled(reqs, derive_seed(a.common.seed, "inference"));
    std::size_t fallbacks = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      out += result_json(reqs[i], results[i]).dump() + "\n";
      fallbacks += results[i].fallback_used;
    }
    std::cout << "translated " << results.size() << " sentences to style " << a.style << " (" << fallbacks
              << " without separator)\n";
  } else {
    for (const auto& s : sources) {
      const Sentence src{s, {}};
      const Sentence hyp = a.mode == "tag" ? translate_tagged(model, src, a.style, decode) : model.translate(src, decode);
      out += json{{"source", s}, {"draft", ""}, {"prompt", ""}, {"hypothesis", hyp.text}, {"style_id", a.style},
                  {"fallback", false}}
                 .dump() +
             "\n";
    }
    std::cout << "translated " << sources.size() << " sentences (" << a.mode << ")\n";
  }
  ensure_parent(a.out);
  write_file(a.out, out);
  archive(cfg, a.out);
}

// ---------------------------------------------------------------- evaluate

struct EvalArgs {
  Common common;
  std::string test, lexicon, csv, json_out, tokenize = "builtin";
  std::vector<std::string> hyps;
  bool smooth = false;
};

void write_report_files(const ComparisonReport& rep, const std::string& csv, const std::string& json_out,
                        const json& extra, const Common& common, const json& cfg) {
  if (!csv.empty()) {
    ensure_parent(csv);
    write_file(csv, rep.to_csv());
    archive(cfg, csv);
  }
  if (!json_out.empty()) {
    json j = rep.to_json();
    if (common.verbose && !extra.is_null()) j["items"] = extra;
    ensure_parent(json_out);
    write_file(json_out, j.dump(2) + "\n");
    if (csv.empty()) archive(cfg, json_out);
  }
}

void cmd_evaluate(const EvalArgs& a, const json& cfg) {
  BleuOptions bo;
  bo.tokenization = parse_bleu_tokenization(a.tokenize);
  bo.smooth = a.smooth;
  if (a.hyps.empty()) throw Error(ErrorKind::Config, "give at least one --hyp SYSTEM:STYLE=FILE");
  if (!a.csv.empty()) require_absent(a.csv, a.common);
  if (!a.json_out.empty()) require_absent(a.json_out, a.common);
  require_file(a.test, "test set");
  require_file(a.lexicon, "lexicon");
  const MultiwayTestSet test = MultiwayTestSet::load_jsonl(a.test);
  const LexiconClassifier classifier = LexiconClassifier::load(a.lexicon);

  std::map<std::string, SystemOutputs> systems;
  std::vector<std::string> order;
  for (const auto& spec : a.hyps) {
    auto [key, path] = key_value(spec, "--hyp");
    const auto colon = key.find(':');
    if (colon == std::string::npos) throw Error(ErrorKind::Config, "--hyp '" + spec + "' must be SYSTEM:STYLE=FILE");
    const std::string name = key.substr(0, colon), style = key.substr(colon + 1);
    if (std::find(test.styles.begin(), test.styles.end(), style) == test.styles.end()) {
      throw Error(ErrorKind::NotFound, "unknown style '" + style + "' (test set styles: " + join(test.styles, ",") + ")");
    }
    if (!systems.count(name)) order.push_back(name);
    systems[name].name = name;
    systems[name].hypotheses[style] = read_hypotheses(path);
  }
  std::vector<SystemOutputs> list;
  for (const auto& n : order) list.push_back(systems[n]);
  const ComparisonReport rep = run_comparison(list, test, classifier, bo);
  std::cout << rep.to_table();

  json items = json::array();
  if (a.common.verbose) {
    for (const auto& sys : list) {
      for (const auto& [style, hyps] : sys.hypotheses) {
        for (std::size_t i = 0; i < hyps.size(); ++i) {
          const auto cls = classifier.classify(hyps[i]);
          items.push_back({{"system", sys.name}, {"style", style}, {"index", i}, {"hypothesis", hyps[i]},
                           {"reference", test.items[i].references.at(style).text},
                           {"classified", cls ? json(*cls) : json(nullptr)}});
        }
      }
    }
  }
  write_report_files(rep, a.csv, a.json_out, items, a.common, cfg);
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  Common common;
  std::string model, model_unsup, tag_model, baseline, test, lexicon, out_dir, embedder = "hash256", parallel,
      tokenizer;
  std::vector<std::string> stores, mono, fixed_prompts;
  std::vector<std::size_t> levels{1000, 100, 10};
  int beam = 4;
  ModelFlags flags;
};

struct AblateInputs {
  std::unique_ptr<TranslationModel> model;
  std::unique_ptr<EmbeddingProvider> provider;
  StoreRegistry stores;
  MultiwayTestSet test;
  LexiconClassifier classifier;
};

AblateInputs ablate_inputs(const AblateArgs& a, bool need_stores) {
  AblateInputs in;
  require_file(a.model, "checkpoint");
  require_file(a.test, "test set");
  require_file(a.lexicon, "lexicon");
  in.test = MultiwayTestSet::load_jsonl(a.test);
  in.classifier = LexiconClassifier::load(a.lexicon);
  in.provider = make_provider(a.embedder);
  if (need_stores) {
    const auto files = key_values(a.stores, "--store");
    for (const auto& s : in.test.styles) {
      if (!files.count(s)) throw Error(ErrorKind::NotFound, "unknown style '" + s + "': no --store given for it");
    }
    for (const auto& [style, store] : load_stores(files)) {
      check_dimension(*store, *in.provider);
      in.stores.add(style, store);
    }
  }
  in.model = std::make_unique<TranslationModel>(TranslationModel::load(a.model));
  return in;
}

void write_outputs(const std::string& dir, const std::map<std::string, std::string>& files, const Common& c,
                   const json& cfg) {
  for (const auto& [name, body] : files) require_absent((fs::path(dir) / name).string(), c);
  fs::create_directories(dir);
  for (const auto& [name, body] : files) write_file((fs::path(dir) / name).string(), body);
  archive(cfg, (fs::path(dir) / "ablate").string());
}

void cmd_ablate_strategy(const AblateArgs& a, const json& cfg) {
  AblateInputs in = ablate_inputs(a, true);
  const auto rep = strategy_ablation(*in.model, in.stores, *in.provider, in.test, in.classifier, DecodeOptions{a.beam, 0},
                                     derive_seed(a.common.seed, "inference"), key_values(a.fixed_prompts, "--fixed-prompt"));
  std::cout << rep.to_table();
  write_outputs(a.out_dir, {{"strategy.csv", rep.to_csv()}, {"strategy.json", rep.to_json().dump(2) + "\n"}}, a.common,
                cfg);
}

void cmd_ablate_unsupervised(const AblateArgs& a, const json& cfg) {
  if (a.model_unsup.empty()) throw Error(ErrorKind::Config, "--model-unsup is required");
  AblateInputs in = ablate_inputs(a, true);
  require_file(a.model_unsup, "checkpoint");
  const TranslationModel unsup = TranslationModel::load(a.model_unsup);
  const DecodeOptions decode{a.beam, 0};
  const auto seed = derive_seed(a.common.seed, "inference");
  const StylePipeline p(*in.model, in.stores, *in.provider, decode);
  const StylePipeline pu(unsup, in.stores, *in.provider, decode);
  std::vector<SystemOutputs> systems{styleap_outputs("styleap", p, in.test, PromptStrategy::RetrievedTarget, seed),
                                     styleap_outputs("styleap_unsup", pu, in.test, PromptStrategy::RetrievedTarget, seed)};
  if (!a.tag_model.empty()) {
    require_file(a.tag_model, "checkpoint");
    systems.push_back(tagged_outputs("tag", TranslationModel::load(a.tag_model), in.test, decode));
  }
  const auto rep = run_comparison(systems, in.test, in.classifier);
  std::cout << rep.to_table();
  write_outputs(a.out_dir, {{"unsupervised.csv", rep.to_csv()}, {"unsupervised.json", rep.to_json().dump(2) + "\n"}},
                a.common, cfg);
}

void cmd_ablate_size(const AblateArgs& a, const json& cfg) {
  if (a.parallel.empty()) throw Error(ErrorKind::Config, "--parallel is required to retrain tag models");
  AblateInputs in = ablate_inputs(a, false);
  const auto mono_files = key_values(a.mono, "--mono");
  std::vector<StyledCorpus> corpora;
  for (const auto& s : in.test.styles) {
    if (!mono_files.count(s)) throw Error(ErrorKind::NotFound, "unknown style '" + s + "': no --mono given for it");
    corpora.push_back(load_monolingual(mono_files.at(s), s, "trg"));
  }
  std::unique_ptr<TranslationModel> baseline;
  if (!a.baseline.empty()) {
    require_file(a.baseline, "checkpoint");
    baseline = std::make_unique<TranslationModel>(TranslationModel::load(a.baseline));
  }
  const auto pairs = load_parallel_tsv(a.parallel);
  const Tokenizer& tok = in.model->tokenizer();
  for (const auto& s : in.test.styles) tok.tag_id(s);

  TagModelBuilder build = [&](std::size_t level, const std::map<std::string, StyledCorpus>& sub) {
    std::map<std::string, std::set<std::string>> keep;
    for (const auto& [style, c] : sub) {
      for (const auto& s : c.sentences) keep[style].insert(s.text);
    }
    std::vector<ParallelPair> labelled = pairs;
    for (auto& p : labelled) {
      if (p.style_label && !keep[*p.style_label].count(p.target.text)) p.style_label.reset();
    }
    const auto data = tag_dataset(labelled, tok, in.test.styles);
    std::vector<TrainingExample> tr, dev;
    const auto seed = derive_seed(a.common.seed, "tag_" + std::to_string(level));
    encode_examples(data, tok, a.flags.max_len, a.flags.dev_size, seed, tr, dev);
    ModelConfig mc = a.flags.model;
    mc.vocab_size = static_cast<int>(tok.vocab_size());
    auto m = std::make_shared<TranslationModel>(tok, mc, derive_seed(seed, "init"));
    TrainConfig tc = a.flags.train;
    tc.seed = derive_seed(seed, "train");
    train(*m, tr, dev, tc, [&](const CurvePoint& p) {
      log_line(a.common, "tag level " + std::to_string(level) + " step " + std::to_string(p.step) + " loss " +
                             format_number(p.loss));
    });
    return std::shared_ptr<const TranslationModel>(m);
  };
  const auto rep = size_sweep(a.levels, corpora, *in.model, baseline.get(), build, *in.provider, Metric::Cosine,
                              in.test, in.classifier, DecodeOptions{a.beam, 0}, derive_seed(a.common.seed, "sweep"),
                              [&](const std::string& m) { std::cout << m << std::endl; });
  std::cout << rep.to_csv();
  write_outputs(a.out_dir, {{"size_sweep.csv", rep.to_csv()}}, a.common, cfg);
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
  Common common;
  std::string out_dir, settings;
  std::size_t max_steps = 0;
};

void cmd_experiment(const ExperimentArgs& a, const json& cfg) {
  ExperimentConfig ec;
  if (!a.settings.empty()) {
    require_file(a.settings, "experiment settings");
    ec = ExperimentConfig::from_json(json::parse(read_file(a.settings)));
  }
  ec.seed = a.common.seed;
  if (a.max_steps > 0) ec.train.max_steps = a.max_steps;
  const std::map<std::string, std::string> names{{"report.json", ""}, {"report.txt", ""}, {"comparison.csv", ""},
                                                 {"strategy.csv", ""}, {"size_sweep.csv", ""}};
  for (const auto& [n, _] : names) require_absent((fs::path(a.out_dir) / n).string(), a.common);
  std::cout << "experiment-config " << ec.to_json().dump() << std::endl;
  const ExperimentResult r = run_experiment(ec, [&](const std::string& m) { std::cout << m << std::endl; });
  json report = r.to_json();
  report["config"] = ec.to_json();
  write_outputs(a.out_dir,
                {{"report.json", report.dump(2) + "\n"},
                 {"report.txt", r.to_text()},
                 {"comparison.csv", r.main.to_csv()},
                 {"strategy.csv", r.strategies.to_csv()},
                 {"size_sweep.csv", r.sweep.to_csv()}},
                Common{a.common.seed, "", true, a.common.verbose}, cfg);
  std::cout << r.to_text();
}

int exit_code(ErrorKind k) {
  return k == ErrorKind::Config || k == ErrorKind::NotFound ? 2 : 1;
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-based style activation prompts for machine translation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "styleap 1.0");

  GenArgs gen;
  auto* s_gen = app.add_subcommand("gen-synthetic", "Generate the synthetic two-style task");
  add_common(s_gen, gen.common);
  s_gen->add_option("--out", gen.out, "Output directory")->required();
  s_gen->add_option("--parallel", gen.spec.parallel_size, "Parallel pairs (styled pairs included)")->capture_default_str();
  s_gen->add_option("--mono", gen.spec.mono_size, "Stylized sentences per style")->capture_default_str();
  s_gen->add_option("--test", gen.spec.test_size, "Multiway test items")->capture_default_str();
  s_gen->add_option("--content-words", gen.spec.content_words)->capture_default_str();
  s_gen->add_option("--stylable-words", gen.spec.stylable_words)->capture_default_str();
  s_gen->add_option("--min-length", gen.spec.min_length)->capture_default_str();
  s_gen->add_option("--max-length", gen.spec.max_length)->capture_default_str();

  IndexArgs idx;
  auto* s_idx = app.add_subcommand("build-index", "Embed a stylized corpus into a datastore file");
  add_common(s_idx, idx.common);
  s_idx->add_option("--corpus", idx.corpus, "Monolingual corpus, one sentence per line")->required();
  s_idx->add_option("--style", idx.style, "Style id of the corpus")->required();
  s_idx->add_option("--out", idx.out, "Datastore file")->required();
  s_idx->add_option("--embedder", idx.embedder, "hash256, hashN or learned")->capture_default_str();
  s_idx->add_option("--model", idx.model, "Checkpoint for the learned embedder");
  s_idx->add_option("--metric", idx.metric, "cosine or l2")->capture_default_str();
  s_idx->add_option("--ivf-clusters", idx.clusters, "Attach an IVF index with this many clusters (0 = none)")
      ->capture_default_str();
  s_idx->add_option("--nprobe", idx.nprobe)->capture_default_str();
  s_idx->add_option("--kmeans-iters", idx.iters)->capture_default_str();

  DataArgs data;
  auto* s_data = app.add_subcommand("make-data", "Build prompted, tagged or plain training data");
  add_common(s_data, data.common);
  s_data->add_option("--parallel", data.parallel, "Parallel TSV (source, target, optional style label)")->required();
  s_data->add_option("--out", data.out, "Output TSV (sidecar written to OUT.json)")->required();
  s_data->add_option("--tokenizer", data.tokenizer, "Tokenizer JSON; trained and written when absent")->required();
  s_data->add_option("--mode", data.mode, "prompt, tag or plain")->capture_default_str();
  s_data->add_option("--store", data.stores, "STYLE=DATASTORE for labelled pairs (repeatable)");
  s_data->add_option("--default-store", data.default_store, "Datastore for unlabelled pairs");
  s_data->add_option("--pool", data.pool, "Datastore for the unsupervised strategy");
  s_data->add_option("--strategy", data.strategy)->capture_default_str();
  s_data->add_option("--fixed-prompt", data.fixed_prompt);
  s_data->add_option("--fraction", data.fraction, "Prompted fraction")->capture_default_str();
  s_data->add_option("--embedder", data.embedder)->capture_default_str();
  s_data->add_option("--max-len", data.max_len)->capture_default_str();
  s_data->add_option("--max-vocab", data.max_vocab)->capture_default_str();
  s_data->add_option("--min-frequency", data.min_frequency)->capture_default_str();
  s_data->add_flag("--no-exclude-self", data.no_exclude_self, "Allow a pair's own target as its prompt");
  s_data->add_flag("--ignore-labels", data.ignore_labels, "Drop style labels of the parallel corpus");

  TrainArgs tr;
  auto* s_train = app.add_subcommand("train", "Train a translation model");
  add_common(s_train, tr.common);
  s_train->add_option("--data", tr.data, "Training TSV from make-data")->required();
  s_train->add_option("--tokenizer", tr.tokenizer)->required();
  s_train->add_option("--out", tr.out, "Checkpoint file")->required();
  s_train->add_option("--curve", tr.curve, "Loss curve CSV (default OUT.curve.csv)");
  tr.flags.add(s_train);

  TranslateArgs tl;
  auto* s_tl = app.add_subcommand("translate", "Translate into a requested style");
  add_common(s_tl, tl.common);
  s_tl->add_option("--model", tl.model)->required();
  s_tl->add_option("--input", tl.input, "Sources: text lines, or JSON lines with a source field")->required();
  s_tl->add_option("--style", tl.style)->required();
  s_tl->add_option("--out", tl.out, "JSON-lines output")->required();
  s_tl->add_option("--mode", tl.mode, "styleap, tag or plain")->capture_default_str();
  s_tl->add_option("--store", tl.stores, "STYLE=DATASTORE (repeatable)");
  s_tl->add_option("--strategy", tl.strategy)->capture_default_str();
  s_tl->add_option("--fixed-prompt", tl.fixed_prompt);
  s_tl->add_option("--embedder", tl.embedder)->capture_default_str();
  s_tl->add_option("--beam", tl.beam)->capture_default_str();

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("evaluate", "BLEU and transfer ratio against a multiway test set");
  add_common(s_ev, ev.common);
  s_ev->add_option("--test", ev.test)->required();
  s_ev->add_option("--lexicon", ev.lexicon)->required();
  s_ev->add_option("--hyp", ev.hyps, "SYSTEM:STYLE=FILE (repeatable)");
  s_ev->add_option("--csv", ev.csv);
  s_ev->add_option("--json", ev.json_out);
  s_ev->add_option("--tokenize", ev.tokenize, "none or builtin")->capture_default_str();
  s_ev->add_flag("--smooth", ev.smooth, "Add-epsilon smoothing of zero precisions");

  AblateArgs ab;
  auto* s_ab = app.add_subcommand("ablate", "Retrieval-strategy, unsupervised and size ablations");
  s_ab->require_subcommand(1);
  auto add_ablate_common = [&](CLI::App* s) {
    add_common(s, ab.common);
    s->add_option("--model", ab.model, "StyleAP checkpoint")->required();
    s->add_option("--test", ab.test)->required();
    s->add_option("--lexicon", ab.lexicon)->required();
    s->add_option("--out-dir", ab.out_dir)->required();
    s->add_option("--embedder", ab.embedder)->capture_default_str();
    s->add_option("--beam", ab.beam)->capture_default_str();
  };
  auto* s_ab_strategy = s_ab->add_subcommand("strategy", "Compare prompt retrieval strategies");
  add_ablate_common(s_ab_strategy);
  s_ab_strategy->add_option("--store", ab.stores, "STYLE=DATASTORE (repeatable)");
  s_ab_strategy->add_option("--fixed-prompt", ab.fixed_prompts, "STYLE=TEXT (default: first store entry)");
  auto* s_ab_unsup = s_ab->add_subcommand("unsupervised", "Compare label-free prompt retrieval in training");
  add_ablate_common(s_ab_unsup);
  s_ab_unsup->add_option("--store", ab.stores, "STYLE=DATASTORE (repeatable)");
  s_ab_unsup->add_option("--model-unsup", ab.model_unsup)->required();
  s_ab_unsup->add_option("--tag-model", ab.tag_model);
  auto* s_ab_size = s_ab->add_subcommand("size", "Sweep the amount of stylized data");
  add_ablate_common(s_ab_size);
  s_ab_size->add_option("--mono", ab.mono, "STYLE=CORPUS (repeatable)");
  s_ab_size->add_option("--parallel", ab.parallel, "Parallel TSV for tag-model retraining")->required();
  s_ab_size->add_option("--baseline", ab.baseline, "No-prompt baseline checkpoint");
  s_ab_size->add_option("--levels", ab.levels)->delimiter(',')->capture_default_str();
  ab.flags.add(s_ab_size);

  ExperimentArgs ex;
  auto* s_ex = app.add_subcommand("experiment", "Run the whole synthetic comparison in one process");
  add_common(s_ex, ex.common);
  s_ex->add_option("--out-dir", ex.out_dir)->required();
  s_ex->add_option("--settings", ex.settings, "ExperimentConfig JSON");
  s_ex->add_option("--max-steps", ex.max_steps, "Override training steps per model");

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  try {
    std::vector<std::string> forward(args.rbegin(), args.rend());
    forward = merge_config_file(std::move(forward));
    args.assign(forward.rbegin(), forward.rend());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  } catch (const Error& e) {
    print_error(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  }

  try {
    auto run = [&](CLI::App* sub, auto&& fn) {
      const json cfg = run_config(sub);
      echo_config(cfg);
      fn(cfg);
    };
    if (s_gen->parsed()) run(s_gen, [&](const json& c) { cmd_gen(gen, c); });
    if (s_idx->parsed()) run(s_idx, [&](const json& c) { cmd_build_index(idx, c); });
    if (s_data->parsed()) run(s_data, [&](const json& c) { cmd_make_data(data, c); });
    if (s_train->parsed()) run(s_train, [&](const json& c) { cmd_train(tr, c); });
    if (s_tl->parsed()) run(s_tl, [&](const json& c) { cmd_translate(tl, c); });
    if (s_ev->parsed()) run(s_ev, [&](const json& c) { cmd_evaluate(ev, c); });
    if (s_ab_strategy->parsed()) run(s_ab_strategy, [&](const json& c) { cmd_ablate_strategy(ab, c); });
    if (s_ab_unsup->parsed()) run(s_ab_unsup, [&](const json& c) { cmd_ablate_unsupervised(ab, c); });
    if (s_ab_size->parsed()) run(s_ab_size, [&](const json& c) { cmd_ablate_size(ab, c); });
    if (s_ex->parsed()) run(s_ex, [&](const json& c) { cmd_experiment(ex, c); });
  } catch (const Error& e) {
    print_error(to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    print_error("format", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 1;
  }
  return 0;
}
