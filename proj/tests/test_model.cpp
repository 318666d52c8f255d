#include <random>

#include <gtest/gtest.h>

#include "styleap/error.hpp"
#include "styleap/gradcheck.hpp"
#include "styleap/text.hpp"
#include "styleap/train.hpp"
#include "styleap/translator.hpp"

using namespace styleap;

namespace {

ModelConfig tiny(int vocab) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.model_dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.max_positions = 16;
  c.dropout = 0.0;
  return c;
}

const std::vector<std::vector<TokenId>> kSources{{5, 6, 7}, {8, 9}, {11}};
const std::vector<std::vector<TokenId>> kTargets{{6, 7}, {10, 11, 5, 6}, {9, 9}};

// Copy task: target = source over 60 word types.
struct CopyTask {
  Tokenizer tok;
  std::vector<TrainingExample> train, held_out;
  std::vector<std::string> held_out_text;
};

CopyTask make_copy_task() {
  std::mt19937_64 rng(3);
  std::vector<std::string> words;
  for (int i = 0; i < 60; ++i) words.push_back("w" + std::to_string(i));
  words[0] = "a";
  words[1] = "b";
  words[2] = "c";
  StyledCorpus c{"x", "trg", {}};
  std::vector<std::string> lines;
  for (int i = 0; i < 5200; ++i) {
    const int n = 4 + static_cast<int>(rng() % 6);
    std::string s;
    for (int j = 0; j < n; ++j) s += (j ? " " : "") + words[rng() % words.size()];
    lines.push_back(s);
    c.sentences.push_back(Sentence{s, {}});
  }
  CopyTask t{Tokenizer::train(std::span<const StyledCorpus>(&c, 1), {}), {}, {}, {}};
  for (int i = 0; i < 5200; ++i) {
    const auto ids = t.tok.encode(lines[static_cast<std::size_t>(i)]);
    (i < 5000 ? t.train : t.held_out).push_back({ids, ids});
    if (i >= 5000) t.held_out_text.push_back(lines[static_cast<std::size_t>(i)]);
  }
  return t;
}

TranslationModel& copy_model() {
  static CopyTask task = make_copy_task();
  static TranslationModel model = [] {
    TranslationModel m(task.tok, ModelConfig{}, 11);
    TrainConfig tc;
    tc.max_steps = 600;
    tc.checkpoint_every = 200;
    tc.seed = 5;
    train(m, task.train, task.held_out, tc);
    return m;
  }();
  return model;
}

const CopyTask& copy_task() {
  copy_model();
  static CopyTask task = make_copy_task();
  return task;
}

}  // namespace

TEST(GradCheck, TiedTinyTransformer) {
  const auto r = gradient_check(tiny(12), kSources, kTargets);
  EXPECT_TRUE(r.finite);
  EXPECT_GT(r.checked, 100u);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter << " " << r.analytic << " vs " << r.numeric;
}

TEST(GradCheck, UntiedTinyTransformer) {
  ModelConfig c = tiny(12);
  c.tie_embeddings = false;
  const auto r = gradient_check(c, kSources, kTargets);
  EXPECT_LT(r.max_relative_error, 1e-4) << r.worst_parameter;
}

TEST(GradCheck, LinearOnlyIsExact) {
  ModelConfig c = tiny(12);
  c.enc_layers = 0;
  c.dec_layers = 0;
  const auto r = gradient_check(c, kSources, kTargets);
  EXPECT_LT(r.max_relative_error, 1e-6) << r.worst_parameter;
}

TEST(GradCheck, EmptySequencesStayFinite) {
  const std::vector<std::vector<TokenId>> empty{{}, {}};
  const auto r = gradient_check(tiny(12), empty, empty);
  EXPECT_TRUE(r.finite);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(GradCheck, RequireGradientsNamesTheParameter) {
  EXPECT_THROW(require_gradients(tiny(12), kSources, kTargets, 0.0), Error);
  EXPECT_NO_THROW(require_gradients(tiny(12), kSources, kTargets, 1e-4));
}

TEST(Model, ConfigValidation) {
  ModelConfig c = tiny(12);
  c.heads = 3;
  EXPECT_THROW(c.validate(), Error);
  c = tiny(12);
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = tiny(12);
  EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
}

TEST(Model, AttentionRowsAndShapes) {
  const Transformer<float> net(tiny(12), 3);
  const std::vector<TokenId> src{5, 6, 7, 8}, trg{9, 10};
  const auto tr = net.attention(src, trg);
  ASSERT_EQ(tr.self_attn.size(), 2u);  // 1 layer x 2 heads
  for (int h = 0; h < 2; ++h) {
    const auto& s = tr.self(0, h);
    const auto& x = tr.cross(0, h);
    // Decoder inputs: BOS + target; encoder positions: source + EOS.
    EXPECT_EQ(s.rows(), 3);
    EXPECT_EQ(s.cols(), 3);
    EXPECT_EQ(x.rows(), 3);
    EXPECT_EQ(x.cols(), 5);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      EXPECT_NEAR(s.row(i).sum(), 1.0f, 1e-5);
      EXPECT_NEAR(x.row(i).sum(), 1.0f, 1e-5);
      EXPECT_GE(s.row(i).minCoeff(), 0.0f);
      for (Eigen::Index j = i + 1; j < s.cols(); ++j) EXPECT_EQ(s(i, j), 0.0f);  // causal
    }
  }
}

TEST(Model, IncrementalStepsMatchTeacherForcing) {
  Transformer<double> net(tiny(12), 4);
  const std::vector<TokenId> src{5, 6, 7}, trg{8, 9, 10};
  const SequencePair p{src, trg};
  const LossStats full = net.forward_backward(std::span<const SequencePair>(&p, 1), nullptr, false);
  const auto enc = net.encode(src);
  auto st = net.start(8);
  double nll = 0;
  TokenId in = net.bos_id;
  for (TokenId t : {8, 9, 10, 3}) {
    const auto lp = net.step(enc, st, in);
    nll -= lp[t];
    in = t;
  }
  EXPECT_NEAR(nll, full.nll_sum, 1e-9);
}

TEST(Training, ZeroStepsKeepsInitialization) {
  const CopyTask t = make_copy_task();
  TranslationModel a(t.tok, tiny(static_cast<int>(t.tok.vocab_size())), 9);
  const TranslationModel b(t.tok, tiny(static_cast<int>(t.tok.vocab_size())), 9);
  TrainConfig tc;
  tc.max_steps = 0;
  train(a, t.train, {}, tc);
  EXPECT_EQ(a.serialize(), b.serialize());
}

TEST(Training, SameSeedSameLoss) {
  const CopyTask t = make_copy_task();
  std::vector<TrainingExample> small(t.train.begin(), t.train.begin() + 300);
  auto run = [&] {
    TranslationModel m(t.tok, tiny(static_cast<int>(t.tok.vocab_size())), 2);
    TrainConfig tc;
    tc.max_steps = 20;
    tc.checkpoint_every = 10;
    tc.batch_tokens = 512;
    const TrainResult r = train(m, small, {}, tc);
    return std::pair{r.curve.back().loss, m.serialize()};
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Training, ScheduleAndBatches) {
  TrainConfig tc;
  tc.warmup_steps = 100;
  tc.learning_rate = 1e-3;
  EXPECT_NEAR(learning_rate_at(tc, 50), 0.5e-3, 1e-12);
  EXPECT_NEAR(learning_rate_at(tc, 100), 1e-3, 1e-12);
  EXPECT_NEAR(learning_rate_at(tc, 400), 0.5e-3, 1e-12);
  const CopyTask t = make_copy_task();
  const auto a = make_batches(t.train, 256, 7), b = make_batches(t.train, 256, 7);
  EXPECT_EQ(a, b);
  std::vector<int> seen(t.train.size(), 0);
  for (const auto& batch : a) {
    for (auto i : batch) ++seen[i];
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
}

TEST(Training, DivergenceIsReported) {
  const CopyTask t = make_copy_task();
  TranslationModel m(t.tok, tiny(static_cast<int>(t.tok.vocab_size())), 2);
  TrainConfig tc;
  tc.max_steps = 50;
  tc.warmup_steps = 0;
  tc.learning_rate = 1e30;
  try {
    train(m, t.train, {}, tc);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Runtime);
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
  EXPECT_THROW(train(m, {}, {}, TrainConfig{}), Error);
}

TEST(Training, CopyTaskIsLearned) {
  const TranslationModel& m = copy_model();
  const CopyTask& t = copy_task();
  std::size_t ok = 0, total = 0;
  for (const auto& e : t.held_out) {
    const Hypothesis h = m.decode(e.source, DecodeOptions{1, 0});
    for (std::size_t i = 0; i < e.target.size(); ++i) {
      ++total;
      ok += i < h.tokens.size() && h.tokens[i] == e.target[i];
    }
  }
  EXPECT_GE(static_cast<double>(ok) / static_cast<double>(total), 0.99);
  EXPECT_EQ(m.translate(Sentence{"a b c", {}}, DecodeOptions{1, 0}).text, "a b c");
}

TEST(Decoding, GreedyIsRepeatable) {
  const TranslationModel& m = copy_model();
  const Sentence s{"w5 w7 w9", {}};
  EXPECT_EQ(m.translate(s, DecodeOptions{1, 0}), m.translate(s, DecodeOptions{1, 0}));
}

TEST(Decoding, BeamScoresAtLeastGreedy) {
  const TranslationModel& m = copy_model();
  const CopyTask& t = copy_task();
  for (const auto& e : t.held_out) {
    const Hypothesis g = m.decode(e.source, DecodeOptions{1, 0});
    const Hypothesis b = m.decode(e.source, DecodeOptions{4, 0});
    const double sg = m.score(e.source, g.tokens), sb = m.score(e.source, b.tokens);
    EXPECT_GE(sb, sg - 1e-4);
    EXPECT_NEAR(sb, b.log_prob, 1e-3);
  }
}

TEST(Decoding, UntrainedModelStopsAtLengthCap) {
  const CopyTask t = make_copy_task();
  const TranslationModel m(t.tok, tiny(static_cast<int>(t.tok.vocab_size())), 1);
  const std::vector<TokenId> src{5, 6};
  const Hypothesis h = m.decode(src, DecodeOptions{3, 5});
  EXPECT_LE(h.tokens.size(), 5u);
  for (TokenId id : h.tokens) {
    EXPECT_NE(id, t.tok.bos_id());
    EXPECT_NE(id, t.tok.pad_id());
  }
}

TEST(Checkpoint, RoundTripReproducesOutputs) {
  const TranslationModel& m = copy_model();
  const TranslationModel back = TranslationModel::deserialize(m.serialize());
  for (const auto& s : copy_task().held_out_text) {
    EXPECT_EQ(back.translate(Sentence{s, {}}, DecodeOptions{1, 0}), m.translate(Sentence{s, {}}, DecodeOptions{1, 0}));
  }
  std::string bytes = m.serialize();
  bytes[bytes.size() / 3] ^= 1;
  try {
    TranslationModel::deserialize(bytes);
    FAIL() << "expected a checksum error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Checksum);
  }
}

TEST(Checkpoint, TranslateWithAttentionCoversOutput) {
  const TranslationModel& m = copy_model();
  const auto [out, trace] = m.translate_with_attention(Sentence{"a b c", {}});
  EXPECT_EQ(out.text, "a b c");
  EXPECT_EQ(trace.layers, m.config().dec_layers);
  EXPECT_EQ(trace.self(0, 0).rows(), static_cast<Eigen::Index>(out.tokens.size()) + 1);
}
