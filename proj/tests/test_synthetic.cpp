#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "styleap/classifier.hpp"
#include "styleap/corpus.hpp"
#include "styleap/error.hpp"
#include "styleap/experiment.hpp"
#include "styleap/synthetic.hpp"
#include "styleap/text.hpp"

using namespace styleap;
namespace fs = std::filesystem;

namespace {

SyntheticTaskSpec small_spec() {
  SyntheticTaskSpec s;
  s.parallel_size = 1000;
  s.mono_size = 200;
  s.test_size = 100;
  s.seed = 4;
  return s;
}

std::size_t line_count(const fs::path& p) {
  const std::string s = read_file(p.string());
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / "styleap_tests" / name;
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Synthetic, FileSizes) {
  const auto dir = fresh_dir("synth_sizes");
  const auto spec = small_spec();
  write_synthetic(generate_synthetic(spec), spec, dir.string());
  EXPECT_EQ(line_count(dir / "parallel.tsv"), 1000u);
  EXPECT_EQ(line_count(dir / "mono_A.txt"), 200u);
  EXPECT_EQ(line_count(dir / "mono_B.txt"), 200u);
  EXPECT_EQ(line_count(dir / "test.jsonl"), 100u);
}

TEST(Synthetic, SameSeedSameBytes) {
  const auto a = fresh_dir("synth_a"), b = fresh_dir("synth_b");
  const auto spec = small_spec();
  write_synthetic(generate_synthetic(spec), spec, a.string());
  write_synthetic(generate_synthetic(spec), spec, b.string());
  for (const char* f : {"parallel.tsv", "mono_A.txt", "mono_B.txt", "test.jsonl", "lexicon.json", "manifest.json"}) {
    EXPECT_EQ(read_file((a / f).string()), read_file((b / f).string())) << f;
  }
  auto other = spec;
  other.seed = 5;
  EXPECT_NE(generate_synthetic(other).parallel, generate_synthetic(spec).parallel);
}

TEST(Synthetic, ReferencesCarryOnlyTheirStyleMarkers) {
  const SyntheticTask task = generate_synthetic(small_spec());
  const LexiconClassifier cls(task.lexicons);
  for (const auto& item : task.test.items) {
    const auto a = cls.marker_counts(item.references.at("A").text);
    EXPECT_GE(a.count("A") ? a.at("A") : 0u, 1u);
    EXPECT_EQ(a.count("B"), 0u);
    const auto b = cls.marker_counts(item.references.at("B").text);
    EXPECT_GE(b.count("B") ? b.at("B") : 0u, 1u);
    EXPECT_EQ(b.count("A"), 0u);
  }
}

TEST(Synthetic, LexiconsDisjointAndMappingInvertible) {
  const SyntheticTask task = generate_synthetic(small_spec());
  for (const auto& w : task.lexicons.at("A")) EXPECT_EQ(task.lexicons.at("B").count(w), 0u);
  // The source word at each position determines the plain target word.
  std::map<std::string, std::string> forward, backward;
  for (const auto& p : task.parallel) {
    if (p.style_label) continue;
    const auto s = split_whitespace(p.source.text), t = split_whitespace(p.target.text);
    ASSERT_EQ(s.size(), t.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto [it, fresh] = forward.emplace(s[i], t[i]);
      EXPECT_EQ(it->second, t[i]);
      auto [jt, fresh2] = backward.emplace(t[i], s[i]);
      EXPECT_EQ(jt->second, s[i]);
    }
  }
}

TEST(Synthetic, MonoCorporaAreStyledTargets) {
  const SyntheticTask task = generate_synthetic(small_spec());
  std::size_t labelled = 0;
  for (const auto& p : task.parallel) labelled += p.style_label.has_value();
  EXPECT_EQ(labelled, 400u);
  ASSERT_EQ(task.mono.size(), 2u);
  for (const auto& c : task.mono) EXPECT_EQ(c.sentences.size(), 200u);
  EXPECT_EQ(task.neutral_targets().sentences.size(), 600u);
}

TEST(Synthetic, SpecValidation) {
  auto s = small_spec();
  s.mono_size = 600;
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.styles[1].suffixes.push_back(s.styles[0].suffixes[0]);
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  s.styles[0].suffixes.clear();
  EXPECT_THROW(s.validate(), Error);
  s = small_spec();
  EXPECT_EQ(SyntheticTaskSpec::from_json(s.to_json()).to_json(), s.to_json());
}

TEST(Experiment, SubsampleIsSeededAndBounded) {
  const SyntheticTask task = generate_synthetic(small_spec());
  const auto a = subsample_styles(task.mono, 10, 1), b = subsample_styles(task.mono, 10, 1);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.at("A").sentences.size(), 10u);
  const auto full = subsample_styles(task.mono, 200, 1);
  EXPECT_EQ(full.at("A"), task.mono[0]);
  EXPECT_THROW(subsample_styles(task.mono, 201, 1), Error);
}

TEST(Experiment, ConfigRoundTrip) {
  ExperimentConfig c;
  c.train.max_steps = 123;
  c.size_levels = {50, 5};
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Synthetic, StyledFormsAreWordSpecific) {
  const SyntheticTask task = generate_synthetic(small_spec());
  // Each plain stylable word keeps one styled form per style, and a style uses
  // every one of its suffixes.
  for (const auto& st : small_spec().styles) {
    std::map<std::string, std::string> form;
    std::set<std::string> used;
    for (const auto& item : task.test.items) {
      const auto styled = split_whitespace(item.references.at(st.style_id).text);
      for (const auto& w : styled) {
        if (!task.lexicons.at(st.style_id).count(w)) continue;
        const auto sfx = std::find_if(st.suffixes.begin(), st.suffixes.end(), [&](const std::string& x) {
          return w.size() > x.size() && w.compare(w.size() - x.size(), x.size(), x) == 0;
        });
        ASSERT_NE(sfx, st.suffixes.end()) << w;
        const std::string stem = w.substr(0, w.size() - sfx->size());
        auto [it, fresh] = form.emplace(stem, w);
        EXPECT_EQ(it->second, w);
        used.insert(*sfx);
      }
    }
    EXPECT_EQ(used.size(), st.suffixes.size()) << st.style_id;
  }
}
