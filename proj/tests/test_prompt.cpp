#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "styleap/classifier.hpp"
#include "styleap/corpus.hpp"
#include "styleap/datastore.hpp"
#include "styleap/embedder.hpp"
#include "styleap/error.hpp"
#include "styleap/prompt.hpp"
#include "styleap/synthetic.hpp"
#include "styleap/tokenizer.hpp"

using namespace styleap;

namespace {

StyledCorpus corpus_of(std::vector<std::string> lines, std::string style = "A") {
  StyledCorpus c{std::move(style), "trg", {}};
  for (auto& l : lines) c.sentences.push_back(Sentence{std::move(l), {}});
  return c;
}

ParallelPair pair_of(std::string s, std::string t) {
  ParallelPair p;
  p.source.text = std::move(s);
  p.target.text = std::move(t);
  return p;
}

Tokenizer tokenizer_for(const std::vector<ParallelPair>& pairs) {
  StyledCorpus c{"x", "trg", {}};
  for (const auto& p : pairs) {
    c.sentences.push_back(p.source);
    c.sentences.push_back(p.target);
  }
  TokenizerOptions o;
  o.min_frequency = 1;
  return Tokenizer::train(std::span<const StyledCorpus>(&c, 1), o);
}

std::vector<ParallelPair> numbered_pairs(std::size_t n) {
  std::vector<ParallelPair> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(pair_of("s" + std::to_string(i) + " x", "t" + std::to_string(i) + " y"));
  return out;
}

const SpecialTokens kSpecials{};

}  // namespace

TEST(Prompt, AugmentsBothSides) {
  const HashEmbedder e(32);
  const Datastore store = Datastore::build(corpus_of({"P"}), e);
  PromptOptions opt;
  opt.exclude_self = false;
  const PromptedPair pp = build_training_pair(pair_of("S", "T"), store, e, opt, kSpecials);
  EXPECT_EQ(pp.prompt.text, "P");
  EXPECT_EQ(pp.augmented_source.text, "P [s] S");
  EXPECT_EQ(pp.augmented_target.text, "P [s] T");
}

TEST(Prompt, OwnTargetIsExcluded) {
  const HashEmbedder e(64);
  const Datastore store = Datastore::build(corpus_of({"the target", "something else"}), e);
  const PromptedPair pp = build_training_pair(pair_of("src", "the target"), store, e, PromptOptions{}, kSpecials);
  EXPECT_EQ(pp.prompt.text, "something else");
  const Datastore only_self = Datastore::build(corpus_of({"the target"}), e);
  EXPECT_THROW(build_training_pair(pair_of("src", "the target"), only_self, e, PromptOptions{}, kSpecials), Error);
}

TEST(Prompt, RetrievedPromptIsOracleArgmin) {
  const std::vector<std::string> store_lines{"red fox runs", "blue whale swims", "red foxes run fast", "green frog",
                                             "a quiet fox"};
  const HashEmbedder e(256);
  const Datastore store = Datastore::build(corpus_of(store_lines), e);
  for (const std::string target : {"the red fox runs", "whales swim", "frog green", "quiet"}) {
    const auto q = oracle::hash_embed(target, 256);
    std::size_t best = 0;
    double best_d = 1e9;
    for (std::size_t i = 0; i < store_lines.size(); ++i) {
      const auto k = oracle::hash_embed(store_lines[i], 256);
      double dot = 0;
      for (std::size_t j = 0; j < 256; ++j) dot += q[j] * k[j];
      if (1 - dot < best_d) {
        best_d = 1 - dot;
        best = i;
      }
    }
    const PromptedPair pp = build_training_pair(pair_of("s", target), store, e, PromptOptions{}, kSpecials);
    EXPECT_EQ(pp.prompt.text, store_lines[best]) << target;
  }
}

TEST(Prompt, SpecialLiteralsAreEscapedAndSplitBack) {
  const std::string text = augment_text("a [s] b", "c <s> d", kSpecials);
  const auto [prompt, payload] = split_augmented_text(text, kSpecials);
  EXPECT_EQ(prompt, "a [s] b");
  EXPECT_EQ(payload, "c <s> d");
  const std::vector<ParallelPair> pairs{pair_of("a b c d", "a b c d")};
  const Tokenizer tok = tokenizer_for(pairs);
  const auto ids = tok.encode_trusted(text);
  EXPECT_EQ(std::count(ids.begin(), ids.end(), tok.separator_id()), 1);
  const auto split = split_at_separator(ids, tok.separator_id());
  ASSERT_TRUE(split.found);
  EXPECT_EQ(split.prompt, tok.encode("a [s] b"));
  EXPECT_EQ(split.payload, tok.encode("c <s> d"));
}

TEST(Prompt, ZeroFractionIsIdentity) {
  const auto pairs = numbered_pairs(20);
  const Tokenizer tok = tokenizer_for(pairs);
  const HashEmbedder e(32);
  const Datastore store = Datastore::build(target_side(pairs), e);
  PromptStores stores{&store, {}};
  const BuiltDataset d = build_dataset(pairs, stores, e, PromptOptions{}, MixConfig{0.0, 1}, tok, 64);
  EXPECT_EQ(d.examples, pairs);
  EXPECT_EQ(d.selected, 0u);
}

TEST(Prompt, FullFractionPromptsEveryPair) {
  const auto pairs = numbered_pairs(10);
  const Tokenizer tok = tokenizer_for(pairs);
  const HashEmbedder e(32);
  const Datastore store = Datastore::build(target_side(pairs), e);
  PromptStores stores{&store, {}};
  const BuiltDataset d = build_dataset(pairs, stores, e, PromptOptions{}, MixConfig{1.0, 1}, tok, 64);
  EXPECT_EQ(std::count(d.prompted.begin(), d.prompted.end(), 1), 10);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto ids = tok.encode_trusted(d.examples[i].source.text);
    EXPECT_EQ(std::count(ids.begin(), ids.end(), tok.separator_id()), 1);
    const auto [p, payload] = split_augmented_text(d.examples[i].target.text, tok.specials());
    EXPECT_EQ(payload, pairs[i].target.text);
    EXPECT_EQ(p, d.prompts[i]);
    EXPECT_NE(p, pairs[i].target.text);
  }
}

TEST(Prompt, HalfFractionIsExactAndReproducible) {
  const auto pairs = numbered_pairs(100);
  const Tokenizer tok = tokenizer_for(pairs);
  const HashEmbedder e(32);
  const Datastore store = Datastore::build(target_side(pairs), e);
  PromptStores stores{&store, {}};
  const BuiltDataset a = build_dataset(pairs, stores, e, PromptOptions{}, MixConfig{0.5, 42}, tok, 64);
  const BuiltDataset b = build_dataset(pairs, stores, e, PromptOptions{}, MixConfig{0.5, 42}, tok, 64);
  const BuiltDataset c = build_dataset(pairs, stores, e, PromptOptions{}, MixConfig{0.5, 43}, tok, 64);
  EXPECT_EQ(std::count(a.prompted.begin(), a.prompted.end(), 1), 50);
  EXPECT_EQ(a.prompted, b.prompted);
  EXPECT_EQ(a.examples, b.examples);
  EXPECT_NE(a.prompted, c.prompted);
}

TEST(Prompt, OverLengthPairsStayPlain) {
  std::vector<ParallelPair> pairs{pair_of("a b c d e f", "a b c d e f"), pair_of("a", "b")};
  const Tokenizer tok = tokenizer_for(pairs);
  const HashEmbedder e(32);
  const Datastore store = Datastore::build(corpus_of({"a b c d e f g"}), e);
  PromptStores stores{&store, {}};
  // Prompted: 7 + 1 + 6 tokens does not fit, 7 + 1 + 1 fits exactly.
  const BuiltDataset d = build_dataset(pairs, stores, e, PromptOptions{}, MixConfig{1.0, 1}, tok, 9);
  EXPECT_EQ(d.dropped_over_length, 1u);
  EXPECT_EQ(d.examples[0], pairs[0]);
  EXPECT_EQ(d.prompted[1], 1);
}

TEST(Prompt, LabelledPairsUseTheirStyleStore) {
  const HashEmbedder e(64);
  const Datastore a = Datastore::build(corpus_of({"alpha one"}, "A"), e);
  const Datastore neutral = Datastore::build(corpus_of({"plain one"}, "n"), e);
  PromptStores stores{&neutral, {{"A", &a}}};
  ParallelPair labelled = pair_of("s", "t");
  labelled.style_label = "A";
  EXPECT_EQ(&stores.for_pair(labelled), &a);
  EXPECT_EQ(&stores.for_pair(pair_of("s", "t")), &neutral);
  labelled.style_label = "Z";
  EXPECT_EQ(&stores.for_pair(labelled), &neutral);
}

TEST(Prompt, SingleEntryStoreWinsForEveryStrategy) {
  const HashEmbedder e(32);
  const Datastore store = Datastore::build(corpus_of({"P"}), e);
  std::mt19937_64 rng(1);
  for (auto s : {PromptStrategy::RetrievedTarget, PromptStrategy::RetrievedSource, PromptStrategy::Random,
                 PromptStrategy::Unsupervised}) {
    PromptOptions o;
    o.strategy = s;
    EXPECT_EQ(select_prompt_inference(Sentence{"draft", {}}, Sentence{"src", {}}, store, e, o, &rng).text, "P");
  }
}

TEST(Prompt, FixedStrategyReturnsTheFixedPrompt) {
  const HashEmbedder e(32);
  const Datastore store = Datastore::build(corpus_of({"P", "Q"}), e);
  PromptOptions o;
  o.strategy = PromptStrategy::Fixed;
  o.fixed_prompt = "X";
  for (const char* d : {"a", "b c", ""}) {
    EXPECT_EQ(select_prompt_inference(Sentence{d, {}}, Sentence{"s", {}}, store, e, o).text, "X");
  }
  o.fixed_prompt.reset();
  EXPECT_THROW(select_prompt_inference(Sentence{"a", {}}, Sentence{"s", {}}, store, e, o), Error);
}

TEST(Prompt, RandomSelectionReplaysUnderSeed) {
  const HashEmbedder e(32);
  std::vector<std::string> lines;
  for (int i = 0; i < 30; ++i) lines.push_back("line " + std::to_string(i));
  const Datastore store = Datastore::build(corpus_of(lines), e);
  PromptOptions o;
  o.strategy = PromptStrategy::Random;
  auto run = [&](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::string> picks;
    for (int i = 0; i < 100; ++i) {
      picks.push_back(select_prompt_inference(Sentence{"d" + std::to_string(i), {}}, Sentence{}, store, e, o, &rng).text);
    }
    return picks;
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
  EXPECT_THROW(select_prompt_inference(Sentence{"d", {}}, Sentence{}, store, e, o, nullptr), Error);
}

TEST(Prompt, SourceQueryUsesTheSource) {
  const HashEmbedder e(256);
  const Datastore store = Datastore::build(corpus_of({"apple pie", "zebra crossing"}), e);
  PromptOptions o;
  o.strategy = PromptStrategy::RetrievedSource;
  EXPECT_EQ(select_prompt_inference(Sentence{"apple pie", {}}, Sentence{"zebra crossing", {}}, store, e, o).text,
            "zebra crossing");
  o.strategy = PromptStrategy::RetrievedTarget;
  EXPECT_EQ(select_prompt_inference(Sentence{"apple pie", {}}, Sentence{"zebra crossing", {}}, store, e, o).text,
            "apple pie");
}

TEST(Prompt, PoolIsTheUnionAndDeterministic) {
  const HashEmbedder e(32);
  const std::vector<StyledCorpus> corpora{corpus_of({"a", "b", "c"}, "A"), corpus_of({"d", "e", "f", "g"}, "B")};
  const Datastore pool = unsupervised_pool(corpora, e);
  EXPECT_EQ(pool.size(), 7u);
  EXPECT_EQ(pool.serialize(), unsupervised_pool(corpora, e).serialize());
}

TEST(Prompt, PoolQueryKeepsTheDraftStyle) {
  SyntheticTaskSpec spec;
  spec.seed = 3;
  const SyntheticTask task = generate_synthetic(spec);
  const LexiconClassifier cls(task.lexicons);
  const HashEmbedder e(256);
  const Datastore pool = unsupervised_pool(task.mono, e);
  std::size_t same = 0;
  for (const auto& item : task.test.items) {
    const auto hit = pool.query(e.embed_text(item.references.at("A").text)).hits.at(0);
    same += cls.classify(hit.value) == std::optional<std::string>("A");
  }
  EXPECT_EQ(task.test.items.size(), 500u);
  EXPECT_GE(static_cast<double>(same) / 500.0, 0.8);
}

TEST(Prompt, TagDataPrefixesLabelledSources) {
  std::vector<ParallelPair> pairs{pair_of("a b", "c d"), pair_of("a", "c")};
  pairs[0].style_label = "A";
  StyledCorpus c{"x", "trg", {}};
  for (const auto& p : pairs) c.sentences.push_back(p.source);
  TokenizerOptions o;
  o.min_frequency = 1;
  o.tag_styles = {"A"};
  const Tokenizer tok = Tokenizer::train(std::span<const StyledCorpus>(&c, 1), o);
  const auto d = tag_dataset(pairs, tok, {"A"});
  EXPECT_EQ(tok.encode_trusted(d[0].source.text).front(), tok.tag_id("A"));
  EXPECT_EQ(d[1], pairs[1]);
}
