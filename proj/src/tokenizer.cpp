#include "styleap/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

namespace {

constexpr std::size_t kFixedSpecials = 5;  // pad, unk, bos, eos, separator

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

std::vector<std::string> special_strings(const SpecialTokens& sp) {
  std::vector<std::string> out{sp.pad, sp.unk, sp.bos, sp.eos, sp.separator};
  for (const auto& [style, tag] : sp.style_tags) out.push_back(tag);
  return out;
}

template <typename Counts>
std::vector<std::pair<std::string, std::size_t>> by_frequency(const Counts& counts) {
  std::vector<std::pair<std::string, std::size_t>> v(counts.begin(), counts.end());
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  return v;
}

}  // namespace

std::string escape_specials(std::string_view raw, const SpecialTokens& specials) {
  const auto reserved = special_strings(specials);
  auto words = split_whitespace(raw);
  for (auto& w : words) {
    if (std::find(reserved.begin(), reserved.end(), w) != reserved.end()) {
      w = std::string(kEscape) + w;
    }
  }
  return join(words, " ");
}

Tokenizer Tokenizer::train(std::span<const StyledCorpus> corpora, const TokenizerOptions& options) {
  if (corpora.empty()) throw Error(ErrorKind::Config, "train_tokenizer: no corpora given");
  std::size_t sentences = 0;
  for (const auto& c : corpora) sentences += c.sentences.size();
  if (sentences == 0) throw Error(ErrorKind::Config, "train_tokenizer: corpora contain no sentences");

  Tokenizer tok;
  tok.options_ = options;
  std::set<std::string> styles(options.tag_styles.begin(), options.tag_styles.end());
  for (const auto& s : styles) {
    if (s.empty()) throw Error(ErrorKind::Config, "train_tokenizer: empty style id for tag");
    tok.specials_.style_tags[s] = SpecialTokens::default_tag(s);
  }

  const std::size_t reserved = kFixedSpecials + styles.size() + 1;  // + escape piece
  if (options.max_vocab < std::max<std::size_t>(16, reserved + 1)) {
    throw Error(ErrorKind::Config, "train_tokenizer: max_vocab " + std::to_string(options.max_vocab) +
                                       " too small for " + std::to_string(reserved) + " reserved entries");
  }

  std::map<std::string, std::size_t> word_counts;
  std::map<std::string, std::size_t> char_counts;
  for (const auto& corpus : corpora) {
    for (const auto& sentence : corpus.sentences) {
      for (const auto& word : split_whitespace(escape_specials(sentence.text, tok.specials_))) {
        ++word_counts[word];
        const auto b = utf8_boundaries(word);
        for (std::size_t i = 0; i + 1 < b.size(); ++i) ++char_counts[word.substr(b[i], b[i + 1] - b[i])];
      }
    }
  }

  tok.pieces_ = special_strings(tok.specials_);
  tok.pieces_.emplace_back(kEscape);
  std::set<std::string> present(tok.pieces_.begin(), tok.pieces_.end());
  std::size_t budget = options.max_vocab - tok.pieces_.size();

  for (const auto& [ch, count] : by_frequency(char_counts)) {
    if (ch == kEscape) continue;
    if (budget < 2) break;
    tok.pieces_.push_back(ch);
    tok.pieces_.push_back(std::string(kContinuation) + ch);
    present.insert(ch);
    present.insert(std::string(kContinuation) + ch);
    budget -= 2;
  }
  // Characters of the special literals come next, so an escaped literal in
  // untrusted text still decodes back to itself.
  for (const auto& special : special_strings(tok.specials_)) {
    const auto b = utf8_boundaries(special);
    for (std::size_t i = 0; i + 1 < b.size() && budget >= 2; ++i) {
      const std::string ch = special.substr(b[i], b[i + 1] - b[i]);
      if (present.count(ch)) continue;
      tok.pieces_.push_back(ch);
      tok.pieces_.push_back(std::string(kContinuation) + ch);
      present.insert(ch);
      present.insert(std::string(kContinuation) + ch);
      budget -= 2;
    }
  }
  for (const auto& [word, count] : by_frequency(word_counts)) {
    if (budget == 0) break;
    if (count < options.min_frequency) break;
    if (present.count(word) || starts_with(word, kContinuation) || starts_with(word, kEscape)) continue;
    tok.pieces_.push_back(word);
    present.insert(word);
    --budget;
  }
  tok.index();
  return tok;
}

void Tokenizer::index() {
  regular_.clear();
  special_lookup_.clear();
  first_regular_ = static_cast<TokenId>(kFixedSpecials + specials_.style_tags.size());
  max_piece_bytes_ = 1;
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    if (id < first_regular_) {
      special_lookup_.emplace(pieces_[i], id);
    } else {
      if (!regular_.emplace(pieces_[i], id).second) {
        throw Error(ErrorKind::Format, "tokenizer: duplicate piece '" + pieces_[i] + "'");
      }
      max_piece_bytes_ = std::max(max_piece_bytes_, pieces_[i].size());
    }
  }
}

std::optional<TokenId> Tokenizer::find(std::string_view piece) const {
  if (auto it = special_lookup_.find(std::string(piece)); it != special_lookup_.end()) return it->second;
  if (auto it = regular_.find(std::string(piece)); it != regular_.end()) return it->second;
  return std::nullopt;
}

TokenId Tokenizer::tag_id(const std::string& style_id) const {
  auto it = specials_.style_tags.find(style_id);
  if (it == specials_.style_tags.end()) throw Error(ErrorKind::NotFound, "no tag registered for style '" + style_id + "'");
  return special_lookup_.at(it->second);
}

std::vector<TokenId> Tokenizer::tag_ids() const {
  std::vector<TokenId> out;
  for (TokenId id = static_cast<TokenId>(kFixedSpecials); id < first_regular_; ++id) out.push_back(id);
  return out;
}

void Tokenizer::encode_word(std::string_view word, std::vector<TokenId>& out) const {
  if (!starts_with(word, kContinuation)) {
    if (auto it = regular_.find(std::string(word)); it != regular_.end()) {
      out.push_back(it->second);
      return;
    }
  }
  const auto bounds = utf8_boundaries(word);
  std::size_t bi = 0;  // index into bounds
  std::string key;
  while (bi + 1 < bounds.size()) {
    const std::size_t pos = bounds[bi];
    std::size_t best_end = 0;
    TokenId best_id = -1;
    // Longest match first; candidate ends are code point boundaries.
    for (std::size_t ei = bounds.size() - 1; ei > bi; --ei) {
      const std::size_t len = bounds[ei] - pos;
      if (len > max_piece_bytes_) continue;
      key.assign(pos == 0 ? "" : kContinuation);
      key.append(word.substr(pos, len));
      if (pos == 0 && starts_with(key, kContinuation)) continue;
      if (auto it = regular_.find(key); it != regular_.end()) {
        best_end = ei;
        best_id = it->second;
        break;
      }
    }
    if (best_id < 0) {
      out.push_back(unk_id());
      ++bi;
    } else {
      out.push_back(best_id);
      bi = best_end;
    }
  }
}

std::vector<TokenId> Tokenizer::encode(std::string_view raw) const {
  std::vector<TokenId> out;
  for (const auto& word : split_whitespace(escape_specials(raw, specials_))) encode_word(word, out);
  return out;
}

std::vector<TokenId> Tokenizer::encode_trusted(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& word : split_whitespace(text)) {
    if (auto it = special_lookup_.find(word); it != special_lookup_.end()) {
      out.push_back(it->second);
    } else {
      encode_word(word, out);
    }
  }
  return out;
}

Sentence Tokenizer::tokenize(std::string_view raw) const {
  return Sentence{std::string(raw), encode(raw)};
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> words;
  for (TokenId id : ids) {
    if (id == pad_id() || id == bos_id() || id == eos_id()) continue;
    const std::string& p = piece(id);
    if (id >= first_regular_ && starts_with(p, kContinuation) && !words.empty()) {
      words.back() += p.substr(kContinuation.size());
    } else {
      words.push_back(p);
    }
  }
  const auto reserved = special_strings(specials_);
  for (auto& w : words) {
    if (starts_with(w, kEscape)) {
      std::string rest = w.substr(kEscape.size());
      if (std::find(reserved.begin(), reserved.end(), rest) != reserved.end()) w = rest;
    }
  }
  return join(words, " ");
}

nlohmann::json Tokenizer::to_json() const {
  nlohmann::json j;
  j["format"] = "styleap-tokenizer";
  j["version"] = 1;
  j["algorithm"] = "greedy-longest-match";
  j["continuation_prefix"] = std::string(kContinuation);
  j["max_vocab"] = options_.max_vocab;
  j["min_frequency"] = options_.min_frequency;
  j["specials"] = {{"pad", specials_.pad},
                   {"unk", specials_.unk},
                   {"bos", specials_.bos},
                   {"eos", specials_.eos},
                   {"separator", specials_.separator},
                   {"style_tags", specials_.style_tags}};
  j["vocabulary"] = pieces_;
  return j;
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "styleap-tokenizer") throw Error(ErrorKind::Format, "not a tokenizer model");
    if (j.at("version") != 1) throw Error(ErrorKind::Format, "unsupported tokenizer version");
    Tokenizer tok;
    tok.options_.max_vocab = j.at("max_vocab");
    tok.options_.min_frequency = j.at("min_frequency");
    const auto& sp = j.at("specials");
    tok.specials_.pad = sp.at("pad");
    tok.specials_.unk = sp.at("unk");
    tok.specials_.bos = sp.at("bos");
    tok.specials_.eos = sp.at("eos");
    tok.specials_.separator = sp.at("separator");
    tok.specials_.style_tags = sp.at("style_tags").get<std::map<std::string, std::string>>();
    for (const auto& [style, tag] : tok.specials_.style_tags) tok.options_.tag_styles.push_back(style);
    tok.pieces_ = j.at("vocabulary").get<std::vector<std::string>>();
    const auto expected = special_strings(tok.specials_);
    if (tok.pieces_.size() <= expected.size() ||
        !std::equal(expected.begin(), expected.end(), tok.pieces_.begin())) {
      throw Error(ErrorKind::Format, "tokenizer vocabulary does not start with the special tokens");
    }
    tok.index();
    return tok;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("tokenizer json: ") + e.what());
  }
}

void Tokenizer::save(const std::string& path) const { write_file(path, to_json().dump(1) + "\n"); }

Tokenizer Tokenizer::load(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace styleap
