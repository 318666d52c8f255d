#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "styleap/datastore.hpp"
#include "styleap/embedder.hpp"
#include "styleap/error.hpp"
#include "styleap/text.hpp"

using namespace styleap;
namespace fs = std::filesystem;

namespace {

double cos_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<std::vector<float>> random_unit(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<float> g;
  std::vector<std::vector<float>> out(n, std::vector<float>(d));
  for (auto& v : out) {
    double s = 0;
    for (auto& x : v) {
      x = g(rng);
      s += double(x) * x;
    }
    for (auto& x : v) x = static_cast<float>(x / std::sqrt(s));
  }
  return out;
}

Datastore store_of(const std::vector<std::vector<float>>& rows, Metric m) {
  KeyMatrix k(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  std::vector<std::string> values;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    values.push_back("v" + std::to_string(i));
  }
  return Datastore::from_vectors("S", m, std::move(k), std::move(values));
}

SentenceVector vec(const std::vector<float>& v) {
  return SentenceVector(Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size())));
}

StyledCorpus corpus_of(std::vector<std::string> lines) {
  StyledCorpus c{"S", "trg", {}};
  for (auto& l : lines) c.sentences.push_back(Sentence{std::move(l), {}});
  return c;
}

std::string temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "styleap_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(Embedder, MatchesHashingOracle) {
  const HashEmbedder e(256);
  for (const std::string s : {"the cat sat", "the cat sat down", "zq xv wk", "a", "ab cd ef gh ij kl"}) {
    const auto got = e.embed_text(s);
    const auto want = oracle::hash_embed(s, 256);
    for (std::size_t i = 0; i < 256; ++i) ASSERT_NEAR(got.values()[static_cast<Eigen::Index>(i)], want[i], 1e-6) << s;
  }
}

TEST(Embedder, SimilarSentencesAreCloser) {
  const HashEmbedder e(256);
  const auto a = oracle::hash_embed("the cat sat", 256), b = oracle::hash_embed("the cat sat down", 256),
             c = oracle::hash_embed("zq xv wk", 256);
  ASSERT_GT(cos_oracle(a, b), cos_oracle(a, c));
  EXPECT_GT(cosine_similarity(e.embed_text("the cat sat"), e.embed_text("the cat sat down")),
            cosine_similarity(e.embed_text("the cat sat"), e.embed_text("zq xv wk")));
}

TEST(Embedder, DeterministicUnitNormAndEmpty) {
  const HashEmbedder e(64);
  EXPECT_EQ(e.embed_text("one two"), e.embed_text("one two"));
  const auto empty = e.embed_text("   ");
  EXPECT_EQ(empty.values()[0], 1.0f);
  EXPECT_EQ(empty.values().tail(63).cwiseAbs().sum(), 0.0f);
  for (const char* s : {"x", "one two three", "ünïcödé wörds"}) {
    const auto v = e.embed_text(s);
    EXPECT_NEAR(v.norm(), 1.0f, 1e-6);
    EXPECT_TRUE(v.values().allFinite());
  }
}

TEST(Embedder, BatchContract) {
  const HashEmbedder e(128);
  std::vector<std::string> texts{"a b", "c d e", "f"};
  EXPECT_EQ(e.embed_texts(std::span<const std::string>(texts.data(), 1)).front(), e.embed_text("a b"));
  const auto fwd = e.embed_texts(texts);
  std::vector<std::string> rev(texts.rbegin(), texts.rend());
  const auto back = e.embed_texts(rev);
  for (std::size_t i = 0; i < texts.size(); ++i) EXPECT_EQ(fwd[i], back[texts.size() - 1 - i]);
}

TEST(Embedder, TenThousandSentencesWithinBudget) {
  const HashEmbedder e(256);
  std::mt19937_64 rng(3);
  std::vector<std::string> texts;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    for (int j = 0; j < 8; ++j) s += (j ? " " : "") + std::string("tok") + std::to_string(rng() % 500);
    texts.push_back(s);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto v = e.embed_texts(texts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(v.size(), 10000u);
  EXPECT_LT(secs, 10.0);
}

TEST(Embedder, ProviderNames) {
  EXPECT_EQ(make_provider("hash256")->dimension(), 256);
  EXPECT_EQ(make_provider("hash32")->dimension(), 32);
  EXPECT_THROW(make_provider("learned"), Error);
  EXPECT_THROW(make_provider("word2vec"), Error);
}

TEST(Datastore, SingleEntry) {
  const HashEmbedder e(32);
  const Datastore s = Datastore::build(corpus_of({"only one"}), e);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.query(e.embed_text("something else")).hits.at(0).value, "only one");
  EXPECT_THROW(Datastore::build(corpus_of({}), e), Error);
}

TEST(Datastore, BuildIsDeterministic) {
  const HashEmbedder e(64);
  const auto c = corpus_of({"a b c", "d e f", "g h"});
  EXPECT_EQ(Datastore::build(c, e).serialize(), Datastore::build(c, e).serialize());
}

TEST(Datastore, ExactMatchesBruteForceOracle) {
  std::mt19937_64 rng(77);
  const auto keys = random_unit(rng, 1000, 64);
  const auto queries = random_unit(rng, 100, 64);
  for (const auto& [m, name] : {std::pair{Metric::Cosine, "cosine"}, std::pair{Metric::L2, "l2"}}) {
    const Datastore s = store_of(keys, m);
    for (const auto& q : queries) {
      const auto got = s.query_exact(vec(q), 5);
      const auto want = oracle::knn(keys, q, 5, name);
      ASSERT_EQ(got.hits.size(), want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(got.hits[i].id, want[i].first);
        EXPECT_NEAR(got.hits[i].distance, want[i].second, 1e-5);
        if (i) {
          EXPECT_LE(got.hits[i - 1].distance, got.hits[i].distance);
        }
      }
    }
  }
}

TEST(Datastore, QueryOnEntryKeyReturnsItFirst) {
  std::mt19937_64 rng(4);
  const auto keys = random_unit(rng, 50, 16);
  for (Metric m : {Metric::Cosine, Metric::L2}) {
    const Datastore s = store_of(keys, m);
    const auto r = s.query(vec(keys[17]), 3);
    EXPECT_EQ(r.hits[0].id, 17u);
    EXPECT_NEAR(r.hits[0].distance, 0.0f, 1e-6);
  }
}

TEST(Datastore, ExclusionAndShortResults) {
  std::mt19937_64 rng(8);
  const auto keys = random_unit(rng, 3, 8);
  const Datastore s = store_of(keys, Metric::Cosine);
  const auto r = s.query(vec(keys[1]), 1, {1});
  EXPECT_NE(r.hits.at(0).id, 1u);
  const auto all = s.query(vec(keys[0]), 10);
  EXPECT_EQ(all.hits.size(), 3u);
  EXPECT_TRUE(all.short_result);
  EXPECT_THROW(s.query(SentenceVector(Eigen::VectorXf::Ones(9)), 1), Error);
  EXPECT_THROW(s.query(vec(keys[0]), 0), Error);
}

TEST(Datastore, IvfDegenerateCasesEqualExact) {
  std::mt19937_64 rng(21);
  const auto keys = random_unit(rng, 300, 32);
  const auto queries = random_unit(rng, 50, 32);
  Datastore s = store_of(keys, Metric::Cosine);
  s.attach_index(build_ivf(s, 1, 5, 1, 1));
  ASSERT_EQ(s.index()->lists.size(), 1u);
  EXPECT_EQ(s.index()->lists[0].size(), 300u);
  for (const auto& q : queries) {
    const auto a = s.query(vec(q), 4), b = s.query_exact(vec(q), 4);
    ASSERT_EQ(a.hits.size(), b.hits.size());
    for (std::size_t i = 0; i < a.hits.size(); ++i) EXPECT_EQ(a.hits[i].id, b.hits[i].id);
  }
  s.attach_index(build_ivf(s, 16, 10, 2, 16));
  for (const auto& q : queries) {
    const auto a = s.query(vec(q), 4), b = s.query_exact(vec(q), 4);
    for (std::size_t i = 0; i < a.hits.size(); ++i) EXPECT_EQ(a.hits[i].id, b.hits[i].id);
  }
}

TEST(Datastore, IvfListsPartitionIds) {
  std::mt19937_64 rng(5);
  const auto keys = random_unit(rng, 40, 8);
  const Datastore s = store_of(keys, Metric::L2);
  const IvfIndex idx = build_ivf(s, 40, 5, 3, 2);
  std::multiset<std::uint32_t> ids;
  for (const auto& l : idx.lists) ids.insert(l.begin(), l.end());
  EXPECT_EQ(ids.size(), 40u);
  for (std::uint32_t i = 0; i < 40; ++i) EXPECT_EQ(ids.count(i), 1u);
  EXPECT_THROW(build_ivf(s, 0, 5, 3, 1), Error);
  EXPECT_THROW(build_ivf(s, 41, 5, 3, 1), Error);
  EXPECT_THROW(build_ivf(s, 4, 5, 3, 5), Error);
}

TEST(Datastore, SerializationRoundTripAndCorruption) {
  const HashEmbedder e(32);
  Datastore s = Datastore::build(corpus_of({"a b", "c d", "e f", "g h"}), e, Metric::L2);
  s.attach_index(build_ivf(s, 2, 4, 9, 1));
  const std::string path = temp_path("store.bin");
  s.save(path);
  EXPECT_TRUE(Datastore::load(path) == s);
  std::string bytes = read_file(path);
  bytes[bytes.size() / 2] ^= 0x20;
  write_file(path, bytes);
  try {
    Datastore::load(path);
    FAIL() << "expected a checksum error";
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::Checksum);
  }
}

TEST(Datastore, FileSizeIsDominatedByKeys) {
  const std::size_t n = 10000;
  const Eigen::Index d = 256;
  const HashEmbedder e(d);
  StyledCorpus c{"S", "trg", {}};
  std::size_t value_bytes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    c.sentences.push_back(Sentence{"sentence number " + std::to_string(i), {}});
    value_bytes += c.sentences.back().text.size();
  }
  const auto t0 = std::chrono::steady_clock::now();
  const Datastore s = Datastore::build(c, e);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 10.0);
  EXPECT_EQ(s.size(), n);
  const std::string path = temp_path("big.bin");
  s.save(path);
  const double expected = static_cast<double>(n * static_cast<std::size_t>(d) * 4 + value_bytes);
  const double actual = static_cast<double>(fs::file_size(path));
  // Per-entry framing (length prefixes, cached norms) plus a small header.
  EXPECT_GE(actual, expected);
  EXPECT_LE(actual, expected + 16.0 * n + 4096);
}
