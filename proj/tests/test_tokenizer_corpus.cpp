#include <filesystem>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "styleap/corpus.hpp"
#include "styleap/error.hpp"
#include "styleap/text.hpp"
#include "styleap/tokenizer.hpp"

using namespace styleap;
namespace fs = std::filesystem;

namespace {

StyledCorpus corpus_of(std::vector<std::string> lines) {
  StyledCorpus c{"x", "trg", {}};
  for (auto& l : lines) c.sentences.push_back(Sentence{std::move(l), {}});
  return c;
}

Tokenizer toy(std::vector<std::string> lines, std::size_t max_vocab = 16, std::size_t min_freq = 1) {
  const StyledCorpus c = corpus_of(std::move(lines));
  TokenizerOptions opt;
  opt.max_vocab = max_vocab;
  opt.min_frequency = min_freq;
  return Tokenizer::train(std::span<const StyledCorpus>(&c, 1), opt);
}

std::string temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "styleap_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Tokenizer, TinyAlphabetVocabulary) {
  const Tokenizer tok = toy({"a b", "a c"});
  for (const char* w : {"a", "b", "c"}) EXPECT_TRUE(tok.find(w).has_value()) << w;
  for (const char* s : {"<pad>", "<unk>", "<s>", "</s>", "[s]"}) EXPECT_TRUE(tok.find(s).has_value()) << s;
  EXPECT_EQ(tok.pad_id(), 0);
  EXPECT_EQ(*tok.find("[s]"), tok.separator_id());
}

TEST(Tokenizer, TrainingIsDeterministic) {
  const Tokenizer a = toy({"a b", "a c"});
  const Tokenizer b = toy({"a b", "a c"});
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(Tokenizer, CoversEveryGeneratedWordType) {
  std::mt19937_64 rng(5);
  std::vector<std::string> types;
  for (int i = 0; i < 20; ++i) types.push_back("t" + std::to_string(i) + "x");
  std::vector<std::string> lines;
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    for (int j = 0; j < 6; ++j) s += (j ? " " : "") + types[rng() % types.size()];
    lines.push_back(s);
  }
  std::set<std::string> seen;
  for (const auto& l : lines) {
    for (const auto& w : split_whitespace(l)) seen.insert(w);
  }
  ASSERT_EQ(seen.size(), 20u);
  const Tokenizer tok = toy(lines, 2000, 2);
  for (const auto& w : seen) {
    ASSERT_TRUE(tok.find(w).has_value()) << w;
    EXPECT_EQ(tok.encode(w), std::vector<TokenId>{*tok.find(w)});
  }
}

TEST(Tokenizer, EmptyTextEncodesToNothing) {
  EXPECT_TRUE(toy({"a b"}).encode("").empty());
}

TEST(Tokenizer, LiteralSeparatorIsEscaped) {
  const Tokenizer tok = toy({"a b", "a c"}, 64);
  const auto ids = tok.encode("a [s] b");
  EXPECT_EQ(std::count(ids.begin(), ids.end(), tok.separator_id()), 0);
  EXPECT_EQ(ids.front(), *tok.find("a"));
  EXPECT_NE(std::find(ids.begin(), ids.end(), tok.escape_id()), ids.end());
  EXPECT_EQ(tok.decode(ids), "a [s] b");
  // Trusted text written by the library does denote the separator.
  const auto trusted = tok.encode_trusted("a [s] b");
  EXPECT_EQ(trusted, (std::vector<TokenId>{*tok.find("a"), tok.separator_id(), *tok.find("b")}));
}

TEST(Tokenizer, ToyIdsFromVocabulary) {
  const Tokenizer tok = toy({"a b", "a c"});
  const TokenId a = *tok.find("a"), b = *tok.find("b");
  EXPECT_EQ(tok.encode("a b a"), (std::vector<TokenId>{a, b, a}));
}

TEST(Tokenizer, RoundTripAndDenseIds) {
  const Tokenizer tok = toy({"the cat sat", "a dog ran off"}, 64);
  for (std::size_t i = 0; i < tok.vocab_size(); ++i) {
    EXPECT_EQ(*tok.find(tok.piece(static_cast<TokenId>(i))), static_cast<TokenId>(i));
  }
  // Unseen words are segmented into pieces and still round-trip.
  for (const char* s : {"the cat sat", "tac dogs sat the", "  a   dog "}) {
    const auto ids = tok.encode(s);
    for (TokenId id : ids) EXPECT_LT(static_cast<std::size_t>(id), tok.vocab_size());
    EXPECT_EQ(tok.decode(ids), join(split_whitespace(s), " "));
  }
  const Tokenizer back = Tokenizer::from_json(tok.to_json());
  EXPECT_TRUE(back == tok);
}

TEST(Tokenizer, TagsAreSingleEntries) {
  const StyledCorpus c = corpus_of({"x y"});
  TokenizerOptions opt;
  opt.tag_styles = {"A", "B"};
  const Tokenizer tok = Tokenizer::train(std::span<const StyledCorpus>(&c, 1), opt);
  EXPECT_TRUE(tok.is_special(tok.tag_id("A")));
  EXPECT_NE(tok.tag_id("A"), tok.tag_id("B"));
  const auto ids = tok.encode("<2A> x");
  EXPECT_EQ(std::count(ids.begin(), ids.end(), tok.tag_id("A")), 0);
  EXPECT_THROW(tok.tag_id("C"), Error);
}

TEST(Corpus, LengthFilterRemovesOverLength) {
  const Tokenizer tok = toy({"w"});
  std::vector<ParallelPair> pairs(1);
  pairs[0].source.text = "w";
  pairs[0].source.tokens.assign(257, 5);
  pairs[0].target.tokens.assign(3, 5);
  EXPECT_TRUE(length_filter(pairs, 256).empty());
  pairs[0].source.tokens.assign(256, 5);
  EXPECT_EQ(length_filter(pairs, 256).size(), 1u);
}

TEST(Corpus, LengthFilterIdentityAndCount) {
  std::mt19937_64 rng(11);
  std::vector<ParallelPair> pairs(100);
  std::vector<std::size_t> over;
  for (std::size_t i = 0; i < 100; ++i) over.push_back(i);
  std::shuffle(over.begin(), over.end(), rng);
  over.resize(30);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].source.text = pairs[i].target.text = "p" + std::to_string(i);
    pairs[i].source.tokens.assign(1 + rng() % 10, 4);
    pairs[i].target.tokens.assign(1 + rng() % 10, 4);
  }
  EXPECT_EQ(length_filter(pairs, 10), pairs);
  for (std::size_t i : over) (i % 2 ? pairs[i].source : pairs[i].target).tokens.assign(11, 4);
  const auto kept = length_filter(pairs, 10);
  EXPECT_EQ(kept.size(), 70u);
  for (const auto& p : kept) {
    EXPECT_LE(p.source.tokens.size(), 10u);
    EXPECT_LE(p.target.tokens.size(), 10u);
  }
}

TEST(Corpus, TsvLoadAndRoundTrip) {
  const std::string path = temp_path("three.tsv");
  write_file(path, "a b\tx y\nc\tz\tA\nd e\tw\n");
  const auto pairs = load_parallel_tsv(path);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[1].style_label, std::optional<std::string>("A"));
  EXPECT_FALSE(pairs[0].style_label.has_value());
  const std::string again = temp_path("three_again.tsv");
  save_parallel_tsv(again, pairs);
  EXPECT_EQ(load_parallel_tsv(again), pairs);
}

TEST(Corpus, MalformedLineIsNamed) {
  const std::string path = temp_path("bad.tsv");
  write_file(path, "a\tb\nonly one field\nc\td\n");
  try {
    load_parallel_tsv(path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Corpus, MonolingualRoundTrip) {
  const std::string path = temp_path("mono.txt");
  const StyledCorpus c = corpus_of({"one two", "three"});
  save_monolingual(path, c);
  EXPECT_EQ(load_monolingual(path, "x", "trg"), c);
}
