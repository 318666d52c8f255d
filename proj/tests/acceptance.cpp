// Acceptance run: one PASS/FAIL line per criterion, every threshold pinned here.
// Exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "styleap/bleu.hpp"
#include "styleap/datastore.hpp"
#include "styleap/embedder.hpp"
#include "styleap/experiment.hpp"
#include "styleap/gradcheck.hpp"
#include "styleap/synthetic.hpp"

using namespace styleap;

namespace {

// Thresholds.
constexpr double kExactSeconds = 10.0;
constexpr double kIvfRecall = 0.95;
constexpr double kIvfSeconds = 60.0;
constexpr double kBleuTolerance = 1e-6;
constexpr double kGradTolerance = 1e-4;
constexpr double kStyledRatio = 90.0;    // percent
constexpr double kBaselineRatio = 20.0;  // percent
constexpr double kExperimentSeconds = 30.0 * 60.0;
constexpr double kUnsupMaxDrop = 0.15;
constexpr std::size_t kAttentionEvents = 200;
constexpr double kAttentionFraction = 0.70;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
std::vector<int> selected;  // criteria named on the command line; empty runs all

bool wanted(int n) { return selected.empty() || std::find(selected.begin(), selected.end(), n) != selected.end(); }

void report(int n, const char* what, const std::function<Outcome()>& check) {
  if (!wanted(n)) return;
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  failures += !o.pass;
  std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", n, what, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

using Rows = std::vector<std::vector<float>>;

Rows random_unit(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<float> g;
  Rows out(n, std::vector<float>(d));
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

Datastore store_of(const Rows& rows, Metric m) {
  KeyMatrix k(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  std::vector<std::string> values;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    values.push_back(std::to_string(i));
  }
  return Datastore::from_vectors("S", m, std::move(k), std::move(values));
}

SentenceVector vec(const std::vector<float>& v) {
  return SentenceVector(Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size())));
}

std::vector<std::size_t> ids(const QueryResult& r) {
  std::vector<std::size_t> out;
  for (const auto& h : r.hits) out.push_back(h.id);
  return out;
}

Outcome exact_retrieval() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  const Rows keys = random_unit(rng, 1000, 256), queries = random_unit(rng, 100, 256);
  std::size_t agree = 0, total = 0;
  for (auto [metric, name] : {std::pair{Metric::Cosine, "cosine"}, std::pair{Metric::L2, "l2"}}) {
    const Datastore s = store_of(keys, metric);
    for (const auto& q : queries) {
      std::vector<std::size_t> want;
      for (const auto& [id, dist] : oracle::knn(keys, q, 10, name)) want.push_back(id);
      agree += ids(s.query_exact(vec(q), 10)) == want;
      ++total;
    }
  }
  const double t = seconds_since(t0);
  return {agree == total && t < kExactSeconds,
          std::to_string(agree) + "/" + std::to_string(total) + " top-10 lists equal, " + fmt("%.2f s", t)};
}

// Keys are embeddings of generated target sentences, queries embeddings of
// held-out styled references: the workload the stores actually serve.
Outcome ivf_quality() {
  const auto t0 = Clock::now();
  SyntheticTaskSpec spec;
  spec.parallel_size = 10000;
  spec.test_size = 500;
  spec.seed = 77;
  const SyntheticTask task = generate_synthetic(spec);
  const HashEmbedder e(256);
  StyledCorpus keys{"pool", "trg", {}};
  for (const auto& p : task.parallel) keys.sentences.push_back(p.target);
  Datastore store = Datastore::build(keys, e);
  std::vector<SentenceVector> queries;
  for (const auto& item : task.test.items) {
    for (const auto& [style, ref] : item.references) queries.push_back(e.embed_text(ref.text));
  }

  store.attach_index(build_ivf(store, 64, 20, 5, 8));
  std::size_t hit = 0;
  for (const auto& q : queries) hit += store.query(q, 1).hits.at(0).id == store.query_exact(q, 1).hits.at(0).id;
  const double recall = static_cast<double>(hit) / static_cast<double>(queries.size());

  std::size_t degenerate_ok = 0, degenerate_total = 0;
  for (auto [k_c, nprobe] : {std::pair<std::size_t, std::size_t>{1, 1}, {64, 64}}) {
    store.attach_index(build_ivf(store, k_c, 20, 5, nprobe));
    for (const auto& q : queries) {
      degenerate_ok += ids(store.query(q, 10)) == ids(store.query_exact(q, 10));
      ++degenerate_total;
    }
  }
  const double t = seconds_since(t0);
  return {recall >= kIvfRecall && degenerate_ok == degenerate_total && t < kIvfSeconds,
          "recall@1 " + fmt("%.4f", recall) + " over " + std::to_string(queries.size()) + " queries, degenerate " +
              std::to_string(degenerate_ok) + "/" + std::to_string(degenerate_total) + ", " + fmt("%.2f s", t)};
}

std::vector<std::string> random_corpus(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 1 + rng() % 12;
    std::string s;
    for (std::size_t j = 0; j < len; ++j) s += (j ? " " : "") + ("w" + std::to_string(rng() % vocab));
    out.push_back(s);
  }
  return out;
}

std::vector<std::string> perturb(std::mt19937_64& rng, const std::vector<std::string>& refs, std::size_t vocab) {
  std::vector<std::string> out;
  for (const auto& r : refs) {
    std::string s;
    std::size_t j = 0;
    for (const auto& w : oracle::words(r)) {
      const auto roll = rng() % 10;
      if (roll == 0) continue;
      s += (j++ ? " " : "") + (roll == 1 ? "w" + std::to_string(rng() % vocab) : w);
    }
    out.push_back(s);
  }
  return out;
}

Outcome bleu_correctness() {
  std::mt19937_64 rng(303);
  BleuOptions opt;
  opt.tokenization = BleuTokenization::None;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const std::size_t vocab = 4 + rng() % 20;
    const auto refs = random_corpus(rng, 5 + rng() % 40, vocab);
    const auto hyps = c % 4 == 0 ? random_corpus(rng, refs.size(), vocab) : perturb(rng, refs, vocab);
    worst = std::max(worst, std::abs(corpus_bleu(hyps, refs, opt).score - oracle::bleu(hyps, refs).score));
  }
  const auto refs = random_corpus(rng, 30, 10);
  const double identity = corpus_bleu(refs, refs).score;
  const std::vector<std::string> h{"the the the the"}, r{"the cat"};
  const BleuScore hand = corpus_bleu(h, r);
  return {worst <= kBleuTolerance && std::abs(identity - 100.0) <= 1e-9 && hand.precisions[0] == 0.25 && hand.score == 0.0,
          "max oracle gap " + fmt("%.2e", worst) + ", BLEU(h,h) " + fmt("%.6f", identity) + ", hand p1 " +
              fmt("%.4f", hand.precisions[0]) + " score " + fmt("%.4f", hand.score)};
}

Outcome gradients() {
  ModelConfig c;
  c.vocab_size = 12;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.model_dim = 8;
  c.heads = 2;
  c.ffn_dim = 16;
  c.max_positions = 16;
  c.dropout = 0.0;
  const std::vector<std::vector<TokenId>> src{{5, 6, 7}, {8, 9}, {11}}, trg{{6, 7}, {10, 11, 5, 6}, {9, 9}};
  const GradCheckResult r = gradient_check(c, src, trg);
  return {r.finite && r.max_relative_error < kGradTolerance,
          "max relative error " + fmt("%.3e", r.max_relative_error) + " over " + std::to_string(r.checked) +
              " entries (worst " + r.worst_parameter + ")"};
}

const std::string& other_style(const std::vector<std::string>& styles, const std::string& s) {
  return styles[0] == s ? styles[1] : styles[0];
}

double sweep_macro(const SweepReport& sweep, std::size_t level, const std::string& system,
                   const std::vector<std::string>& styles, bool ratio) {
  double s = 0.0;
  for (const auto& st : styles) {
    const SweepRow& r = sweep.at(level, system, st);
    s += ratio ? r.transfer_ratio : r.bleu;
  }
  return s / static_cast<double>(styles.size());
}

ExperimentConfig reduced_config() {
  ExperimentConfig c;
  c.task.parallel_size = 1000;
  c.task.mono_size = 100;
  c.task.test_size = 40;
  c.train.max_steps = 20;
  c.train.checkpoint_every = 10;
  c.dev_size = 50;
  c.size_levels = {100, 10};
  c.attention_events = 20;
  c.seed = 5;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  report(1, "exact retrieval vs linear scan", exact_retrieval);
  report(2, "IVF recall and degenerate cases", ivf_quality);
  report(3, "BLEU vs naive oracle and hand cases", bleu_correctness);
  report(4, "finite-difference gradient check", gradients);

  const ExperimentConfig config;
  ExperimentResult res;
  double elapsed = 0.0;
  std::string run_error;
  try {
    if (!(wanted(5) || wanted(6) || wanted(7) || wanted(8) || wanted(9))) throw std::runtime_error("not selected");
    const auto t0 = Clock::now();
    res = run_experiment(config, [](const std::string& m) { std::fprintf(stderr, "%s\n", m.c_str()); });
    elapsed = seconds_since(t0);
    std::fprintf(stderr, "%s", res.to_text().c_str());
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto needs_run = [&](const std::function<Outcome()>& f) {
    return [&, f] { return run_error.empty() ? f() : Outcome{false, "experiment failed: " + run_error}; };
  };
  const auto& styles = res.main.styles;

  report(5, "style activation on the synthetic task", needs_run([&] {
           bool ok = elapsed <= kExperimentSeconds;
           std::string d;
           for (const auto& s : styles) {
             const auto& sap = res.main.row("styleap").by_style.at(s);
             const double base = res.main.row("baseline").by_style.at(s).transfer_ratio;
             const double match = sap.bleu_by_ref.at(s), other = sap.bleu_by_ref.at(other_style(styles, s));
             ok = ok && sap.transfer_ratio >= kStyledRatio && base <= kBaselineRatio && match > other;
             d += s + ": ratio " + fmt("%.2f", sap.transfer_ratio) + " (baseline " + fmt("%.2f", base) + "), BLEU " +
                  fmt("%.2f", match) + " vs other-ref " + fmt("%.2f", other) + "; ";
           }
           return Outcome{ok, d + fmt("%.0f s", elapsed)};
         }));

  report(6, "retrieval strategy ordering", needs_run([&] {
           const double t = res.strategies.row("retrieved_target").macro_bleu;
           const double s = res.strategies.row("retrieved_source").macro_bleu;
           const double r = res.strategies.row("random").macro_bleu;
           const double f = res.strategies.row("fixed").macro_bleu;
           return Outcome{t >= s && s >= r && r >= f && t > f, "target " + fmt("%.2f", t) + ", source " +
                                                                    fmt("%.2f", s) + ", random " + fmt("%.2f", r) +
                                                                    ", fixed " + fmt("%.2f", f)};
         }));

  const std::size_t full = config.size_levels.front(), small = config.size_levels.back();

  report(7, "label-free retrieval", needs_run([&] {
           const double sup = res.main.row("styleap").macro_bleu;
           const double unsup = res.main.row("styleap_unsup").macro_bleu;
           const double tag_small = sweep_macro(res.sweep, small, "tag", styles, false);
           const double drop = (sup - unsup) / sup;
           return Outcome{drop <= kUnsupMaxDrop && unsup > tag_small,
                          "pooled " + fmt("%.2f", unsup) + " vs restricted " + fmt("%.2f", sup) + " (drop " +
                              fmt("%.2f%%", 100 * drop) + "), tag at " + std::to_string(small) + " " +
                              fmt("%.2f", tag_small)};
         }));

  report(8, "smallest stylized-data level", needs_run([&] {
           const double sap_ratio = sweep_macro(res.sweep, small, "styleap", styles, true);
           const double base_ratio = sweep_macro(res.sweep, small, "baseline", styles, true);
           auto drop = [&](const char* sys) {
             const double hi = sweep_macro(res.sweep, full, sys, styles, false);
             return (hi - sweep_macro(res.sweep, small, sys, styles, false)) / hi;
           };
           const double tag_drop = drop("tag"), sap_drop = drop("styleap");
           return Outcome{sap_ratio > base_ratio && tag_drop > sap_drop,
                          "ratio " + fmt("%.2f", sap_ratio) + " vs baseline " + fmt("%.2f", base_ratio) +
                              ", relative BLEU drop tag " + fmt("%.2f%%", 100 * tag_drop) + " vs StyleAP " +
                              fmt("%.2f%%", 100 * sap_drop)};
         }));

  report(9, "attention on the prompt at marker emission", needs_run([&] {
           const auto& a = res.attention;
           return Outcome{a.events >= kAttentionEvents && a.fraction() >= kAttentionFraction,
                          std::to_string(a.in_prompt) + "/" + std::to_string(a.events) + " events in the prompt (" +
                              fmt("%.2f%%", 100 * a.fraction()) + ") over " + std::to_string(a.items) + " outputs"};
         }));

  report(10, "same-seed reruns are byte-identical", [] {
    const ExperimentConfig c = reduced_config();
    const ExperimentResult a = run_experiment(c), b = run_experiment(c);
    const std::string ja = a.to_json().dump(2), jb = b.to_json().dump(2);
    const bool same = ja == jb && a.to_text() == b.to_text();
    return Outcome{same, std::to_string(ja.size()) + "-byte JSON report and text report " +
                             (same ? "identical" : "differ") + " across two runs"};
  });

  return failures ? 1 : 0;
}
