#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleap/classifier.hpp"
#include "styleap/datastore.hpp"
#include "styleap/embedder.hpp"
#include "styleap/pipeline.hpp"
#include "styleap/prompt.hpp"
#include "styleap/report.hpp"
#include "styleap/synthetic.hpp"
#include "styleap/train.hpp"
#include "styleap/translator.hpp"

namespace styleap {

using Logger = std::function<void(const std::string&)>;

/// Everything a synthetic end-to-end run depends on.
struct ExperimentConfig {
  SyntheticTaskSpec task;
  ModelConfig model;
  // Dev loss is still falling at 2000 updates; 3000 fits the 30-minute budget.
  TrainConfig train{.max_steps = 3000};
  // A styled word form occurs about 40 times at the default sizes, its stem and
  // the source words well over 60. This cut leaves styled forms as stem plus
  // shared suffix pieces, the way a subword vocabulary would.
  TokenizerOptions tokenizer{.max_vocab = 2000, .min_frequency = 60, .tag_styles = {}};
  std::string embedder = "hash256";
  Metric metric = Metric::Cosine;
  double prompted_fraction = 0.5;
  DecodeOptions decode;
  std::size_t max_len = 64;
  std::size_t dev_size = 200;
  std::vector<std::size_t> size_levels{1000, 100, 10};
  std::size_t attention_events = 200;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Generated data plus the shared tokenizer, embedder, stores and classifier.
struct Workspace {
  ExperimentConfig config;
  SyntheticTask task;
  Tokenizer tokenizer;
  std::unique_ptr<EmbeddingProvider> provider;
  std::map<std::string, std::shared_ptr<const Datastore>> style_stores;
  std::shared_ptr<const Datastore> neutral_store;  // targets of unlabelled pairs
  std::shared_ptr<const Datastore> pool;           // label-free union of all target sentences
  LexiconClassifier classifier;

  StoreRegistry registry() const;
};

Workspace prepare_workspace(const ExperimentConfig& config);

/// Encodes trusted-text pairs, drops pairs over max_len, and splits off a seeded
/// dev set of dev_size examples.
void encode_examples(std::span<const ParallelPair> pairs, const Tokenizer& tokenizer, std::size_t max_len,
                     std::size_t dev_size, std::uint64_t seed, std::vector<TrainingExample>& train,
                     std::vector<TrainingExample>& dev);

struct TrainedModel {
  std::unique_ptr<TranslationModel> model;
  TrainResult result;
};

TrainedModel train_on(const Workspace& ws, std::span<const ParallelPair> dataset, const std::string& label,
                      const Logger& log = {});

/// Seeded subsample of n sentences per style (corpus order kept).
std::map<std::string, StyledCorpus> subsample_styles(const std::vector<StyledCorpus>& corpora, std::size_t n,
                                                     std::uint64_t seed);

/// Tag-tuning data where only pairs whose target is in the given per-style
/// subsample carry a tag.
std::vector<ParallelPair> tag_training_data(const Workspace& ws, const std::map<std::string, StyledCorpus>& tagged);

// System outputs over a test set, one hypothesis list per style.

SystemOutputs plain_outputs(const std::string& name, const TranslationModel& model, const MultiwayTestSet& test,
                            const DecodeOptions& decode);
SystemOutputs tagged_outputs(const std::string& name, const TranslationModel& model, const MultiwayTestSet& test,
                             const DecodeOptions& decode);
/// Also reports how many second passes fell back (no separator emitted).
SystemOutputs styleap_outputs(const std::string& name, const StylePipeline& pipeline, const MultiwayTestSet& test,
                              PromptStrategy strategy, std::uint64_t run_seed,
                              const std::map<std::string, std::string>& fixed_prompts = {},
                              std::size_t* fallbacks = nullptr);

/// Retrieval-strategy ablation on one checkpoint. fixed prompts default to the
/// first entry of each style store.
ComparisonReport strategy_ablation(const TranslationModel& model, const StoreRegistry& stores,
                                   const EmbeddingProvider& provider, const MultiwayTestSet& test,
                                   const StyleClassifier& classifier, const DecodeOptions& decode,
                                   std::uint64_t run_seed, std::map<std::string, std::string> fixed_prompts = {});

struct SweepRow {
  std::size_t level = 0;
  std::string system;
  std::string style;
  double bleu = 0.0;
  double transfer_ratio = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  const SweepRow& at(std::size_t level, const std::string& system, const std::string& style) const;
  std::string to_csv() const;
};

/// Trains (or otherwise produces) the tag-tuning model for a per-style subsample.
using TagModelBuilder =
    std::function<std::shared_ptr<const TranslationModel>(std::size_t level, const std::map<std::string, StyledCorpus>&)>;

/// For each level: seeded subsample of every style corpus, StyleAP with stores
/// rebuilt over the subsample (same checkpoint), tag model from build_tag, and
/// the no-prompt baseline for reference. Throws Error(Config) when a level
/// exceeds a corpus.
SweepReport size_sweep(const std::vector<std::size_t>& levels, const std::vector<StyledCorpus>& corpora,
                       const TranslationModel& styleap_model, const TranslationModel* baseline_model,
                       const TagModelBuilder& build_tag, const EmbeddingProvider& provider, Metric metric,
                       const MultiwayTestSet& test, const StyleClassifier& classifier, const DecodeOptions& decode,
                       std::uint64_t seed, const Logger& log = {});

struct AttentionStats {
  std::size_t events = 0;     // style-marker emissions examined
  std::size_t in_prompt = 0;  // argmax inside the prompt span
  std::size_t items = 0;      // second-pass outputs scanned
  double fraction() const { return events ? static_cast<double>(in_prompt) / static_cast<double>(events) : 0.0; }
};

/// Final decoder layer, head-averaged self-attention at each emission of a
/// marker of the requested style, argmax over positions outside the two most
/// recent decoder inputs. Scans test items (both styles, alternating) until
/// min_events events are collected or the set is exhausted.
AttentionStats attention_analysis(const StylePipeline& pipeline, const TranslationModel& model,
                                  const MultiwayTestSet& test, const LexiconClassifier& classifier,
                                  std::size_t min_events);

struct ExperimentResult {
  ComparisonReport main;        // baseline, tag, styleap, styleap_unsup
  ComparisonReport strategies;  // retrieved_target, retrieved_source, random, fixed
  SweepReport sweep;
  AttentionStats attention;
  std::map<std::string, std::size_t> fallbacks;  // system -> second passes without separator
  std::map<std::string, TrainResult> training;

  nlohmann::json to_json() const;
  /// Human-readable summary (tables and sweep CSV).
  std::string to_text() const;
};

/// Generates the task, trains baseline, StyleAP (supervised and label-free
/// retrieval) and tag models, and runs every comparison.
ExperimentResult run_experiment(const ExperimentConfig& config, const Logger& log = {});

}  // namespace styleap
