#include "styleap/synthetic.hpp"

#include <algorithm>
#include <filesystem>
#include <random>
#include <unordered_set>

#include "styleap/corpus.hpp"
#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

bool is_vowel(char c) { return kVowels.find(c) != std::string_view::npos; }

/// Rotates the last vowel: a->e->i->o->u->a.
std::string cognate(std::string word) {
  for (auto it = word.rbegin(); it != word.rend(); ++it) {
    if (is_vowel(*it)) {
      *it = kVowels[(kVowels.find(*it) + 1) % kVowels.size()];
      break;
    }
  }
  return word;
}

class Lexicon {
 public:
  Lexicon(const SyntheticTaskSpec& spec, std::mt19937_64& rng) {
    for (const auto& st : spec.styles) suffixes_.insert(suffixes_.end(), st.suffixes.begin(), st.suffixes.end());
    while (content_.size() < spec.content_words) {
      std::string w{pick(kConsonants, rng), pick(kVowels, rng), pick(kConsonants, rng)};
      if (accept(w)) content_.push_back(w);
    }
    while (stylable_.size() < spec.stylable_words) {
      std::string w{pick(kConsonants, rng), pick(kVowels, rng), pick(kConsonants, rng),
                    pick(kConsonants, rng), pick(kVowels, rng), pick(kConsonants, rng)};
      if (accept(w)) stylable_.push_back(w);
    }
  }

  const std::vector<std::string>& content() const { return content_; }
  const std::vector<std::string>& stylable() const { return stylable_; }

 private:
  static char pick(std::string_view set, std::mt19937_64& rng) {
    return set[std::uniform_int_distribution<std::size_t>(0, set.size() - 1)(rng)];
  }

  // Target forms (plain and styled) and source forms must all be distinct
  // across both languages.
  bool accept(const std::string& w) {
    std::vector<std::string> forms{w, cognate(w)};
    for (const auto& s : suffixes_) forms.push_back(w + s);
    for (const auto& f : forms) {
      if (used_.count(f)) return false;
    }
    if (std::set<std::string>(forms.begin(), forms.end()).size() != forms.size()) return false;
    used_.insert(forms.begin(), forms.end());
    return true;
  }

  std::vector<std::string> suffixes_;
  std::vector<std::string> content_, stylable_;
  std::unordered_set<std::string> used_;
};

struct Draw {
  std::vector<std::string> words;
  std::vector<char> stylable;      // parallel to words
  std::vector<std::size_t> index;  // position of each word in its inventory
};

}  // namespace

void SyntheticTaskSpec::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, "synthetic spec: " + m); };
  if (content_words < 1 || stylable_words < 1) fail("word inventories must be non-empty");
  if (content_words + stylable_words > 2000) fail("at most 2000 words in total");
  if (min_length < 1 || min_length > max_length) fail("need 1 <= min_length <= max_length");
  if (min_stylable < 1 || min_stylable > max_stylable) fail("need 1 <= min_stylable <= max_stylable");
  if (max_stylable > min_length) fail("max_stylable must not exceed min_length");
  if (styles.size() < 2) fail("at least two styles are required");
  std::set<std::string> ids, suffixes;
  std::size_t n_suffixes = 0;
  for (const auto& s : styles) {
    if (s.style_id.empty() || s.suffixes.empty()) fail("style id and suffixes must be non-empty");
    if (s.style_id.find_first_of(" \t\n") != std::string::npos) fail("style id must not contain whitespace");
    for (const auto& x : s.suffixes) {
      if (x.empty() || x.find_first_not_of("abcdefghijklmnopqrstuvwxyz") != std::string::npos) {
        fail("suffixes must be non-empty lowercase letters");
      }
      suffixes.insert(x);
    }
    n_suffixes += s.suffixes.size();
    ids.insert(s.style_id);
  }
  if (ids.size() != styles.size()) fail("duplicate style id");
  if (suffixes.size() != n_suffixes) fail("suffixes must all differ (lexicons must be disjoint)");
  if (styles.size() * mono_size > parallel_size) fail("parallel_size must cover mono_size styled pairs per style");
  if (test_size < 1) fail("test_size must be positive");
}

nlohmann::json SyntheticTaskSpec::to_json() const {
  nlohmann::json st = nlohmann::json::array();
  for (const auto& s : styles) st.push_back({{"style_id", s.style_id}, {"suffixes", s.suffixes}});
  return {{"content_words", content_words}, {"stylable_words", stylable_words}, {"min_length", min_length},
          {"max_length", max_length},       {"min_stylable", min_stylable},     {"max_stylable", max_stylable},
          {"parallel_size", parallel_size}, {"mono_size", mono_size},           {"test_size", test_size},
          {"styles", st},                   {"seed", seed}};
}

SyntheticTaskSpec SyntheticTaskSpec::from_json(const nlohmann::json& j) {
  SyntheticTaskSpec s;
  s.content_words = j.value("content_words", s.content_words);
  s.stylable_words = j.value("stylable_words", s.stylable_words);
  s.min_length = j.value("min_length", s.min_length);
  s.max_length = j.value("max_length", s.max_length);
  s.min_stylable = j.value("min_stylable", s.min_stylable);
  s.max_stylable = j.value("max_stylable", s.max_stylable);
  s.parallel_size = j.value("parallel_size", s.parallel_size);
  s.mono_size = j.value("mono_size", s.mono_size);
  s.test_size = j.value("test_size", s.test_size);
  s.seed = j.value("seed", s.seed);
  if (j.contains("styles")) {
    s.styles.clear();
    for (const auto& st : j.at("styles")) {
      // A single "suffix" is accepted as a one-variant style.
      s.styles.push_back({st.at("style_id"), st.contains("suffixes")
                                                 ? st.at("suffixes").get<std::vector<std::string>>()
                                                 : std::vector<std::string>{st.at("suffix").get<std::string>()}});
    }
  }
  return s;
}

StyledCorpus SyntheticTask::neutral_targets() const {
  StyledCorpus c;
  c.style_id = "neutral";
  c.language = "trg";
  for (const auto& p : parallel) {
    if (!p.style_label) c.sentences.push_back(Sentence{p.target.text, {}});
  }
  return c;
}

SyntheticTask generate_synthetic(const SyntheticTaskSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, "synthetic"));
  const Lexicon lex(spec, rng);

  std::unordered_set<std::string> seen;
  auto draw = [&]() {
    for (;;) {
      Draw d;
      const auto len = std::uniform_int_distribution<std::size_t>(spec.min_length, spec.max_length)(rng);
      const auto k = std::uniform_int_distribution<std::size_t>(spec.min_stylable, spec.max_stylable)(rng);
      d.stylable.assign(len, 0);
      std::vector<std::size_t> pos(len);
      for (std::size_t i = 0; i < len; ++i) pos[i] = i;
      std::shuffle(pos.begin(), pos.end(), rng);
      for (std::size_t i = 0; i < k; ++i) d.stylable[pos[i]] = 1;
      for (std::size_t i = 0; i < len; ++i) {
        const auto& inv = d.stylable[i] ? lex.stylable() : lex.content();
        d.index.push_back(std::uniform_int_distribution<std::size_t>(0, inv.size() - 1)(rng));
        d.words.push_back(inv[d.index.back()]);
      }
      if (seen.insert(join(d.words, " ")).second) return d;
    }
  };
  auto source_of = [](const Draw& d) {
    std::vector<std::string> w;
    for (const auto& x : d.words) w.push_back(cognate(x));
    return join(w, " ");
  };
  // st == nullptr renders the plain target.
  auto render = [](const Draw& d, const StyleTransform* st) {
    std::vector<std::string> w = d.words;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (st && d.stylable[i]) w[i] += st->suffix_for(d.index[i]);
    }
    return join(w, " ");
  };

  SyntheticTask task;
  std::vector<int> labels(spec.parallel_size - spec.styles.size() * spec.mono_size, -1);
  for (std::size_t s = 0; s < spec.styles.size(); ++s) labels.insert(labels.end(), spec.mono_size, static_cast<int>(s));
  std::shuffle(labels.begin(), labels.end(), rng);

  for (const auto& st : spec.styles) task.mono.push_back(StyledCorpus{st.style_id, "trg", {}});
  for (int label : labels) {
    const Draw d = draw();
    ParallelPair p;
    p.source.text = source_of(d);
    if (label < 0) {
      p.target.text = render(d, nullptr);
    } else {
      const auto& st = spec.styles[static_cast<std::size_t>(label)];
      p.target.text = render(d, &st);
      p.style_label = st.style_id;
      task.mono[static_cast<std::size_t>(label)].sentences.push_back(Sentence{p.target.text, {}});
    }
    task.parallel.push_back(std::move(p));
  }

  for (const auto& st : spec.styles) task.test.styles.push_back(st.style_id);
  std::sort(task.test.styles.begin(), task.test.styles.end());
  for (std::size_t i = 0; i < spec.test_size; ++i) {
    const Draw d = draw();
    MultiwayItem item;
    item.source.text = source_of(d);
    for (const auto& st : spec.styles) item.references[st.style_id].text = render(d, &st);
    task.test.items.push_back(std::move(item));
  }

  for (const auto& st : spec.styles) {
    auto& set = task.lexicons[st.style_id];
    for (std::size_t i = 0; i < lex.stylable().size(); ++i) set.insert(lex.stylable()[i] + st.suffix_for(i));
  }
  return task;
}

SyntheticFiles write_synthetic(const SyntheticTask& task, const SyntheticTaskSpec& spec, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  SyntheticFiles files;
  const fs::path base(dir);
  save_parallel_tsv((base / files.parallel).string(), task.parallel);
  std::vector<CorpusManifestEntry> manifest;
  for (const auto& c : task.mono) {
    const std::string name = "mono_" + c.style_id + ".txt";
    files.mono[c.style_id] = name;
    save_monolingual((base / name).string(), c);
    manifest.push_back({c.style_id, c.language, name});
  }
  task.test.save_jsonl((base / files.test).string());
  nlohmann::json lex = nlohmann::json::object();
  for (const auto& [style, words] : task.lexicons) lex[style] = std::vector<std::string>(words.begin(), words.end());
  write_file((base / files.lexicon).string(), lex.dump(1) + "\n");
  save_manifest((base / files.manifest).string(), manifest);
  write_file((base / "task.json").string(), spec.to_json().dump(2) + "\n");
  return files;
}

}  // namespace styleap
