#include "styleap/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::Io, "no such file '" + path + "'");
  const std::string data = read_file(path);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < data.size()) {
    std::size_t nl = data.find('\n', start);
    if (nl == std::string::npos) nl = data.size();
    std::string line = data.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  return lines;
}

[[noreturn]] void report_malformed(const std::string& path, const std::vector<std::size_t>& lines,
                                   const std::string& why) {
  std::ostringstream ss;
  ss << path << ": malformed record at line";
  if (lines.size() > 1) ss << "s";
  for (std::size_t i = 0; i < lines.size(); ++i) ss << (i ? ", " : " ") << lines[i];
  ss << " (" << why << ")";
  throw Error(ErrorKind::Format, ss.str());
}

bool writable_field(const std::string& s) {
  return s.find('\t') == std::string::npos && s.find('\n') == std::string::npos &&
         s.find('\r') == std::string::npos && !trim(s).empty();
}

}  // namespace

std::vector<ParallelPair> load_parallel_tsv(const std::string& path) {
  const auto lines = read_lines(path);
  std::vector<ParallelPair> pairs;
  std::vector<std::size_t> bad;
  pairs.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto fields = split(lines[i], '\t');
    const bool ok = (fields.size() == 2 || fields.size() == 3) && !trim(fields[0]).empty() &&
                    !trim(fields[1]).empty() && (fields.size() == 2 || !trim(fields[2]).empty());
    if (!ok) {
      bad.push_back(i + 1);
      continue;
    }
    ParallelPair p;
    p.source.text = fields[0];
    p.target.text = fields[1];
    if (fields.size() == 3) p.style_label = fields[2];
    pairs.push_back(std::move(p));
  }
  if (!bad.empty()) report_malformed(path, bad, "expected source<TAB>target[<TAB>style]");
  return pairs;
}

void save_parallel_tsv(const std::string& path, std::span<const ParallelPair> pairs) {
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (!writable_field(p.source.text) || !writable_field(p.target.text) ||
        (p.style_label && !writable_field(*p.style_label))) {
      throw Error(ErrorKind::Format, "pair " + std::to_string(i) + " cannot be written as TSV");
    }
    out += p.source.text;
    out += '\t';
    out += p.target.text;
    if (p.style_label) {
      out += '\t';
      out += *p.style_label;
    }
    out += '\n';
  }
  write_file(path, out);
}

StyledCorpus load_monolingual(const std::string& path, const std::string& style_id,
                              const std::string& language) {
  if (style_id.empty()) throw Error(ErrorKind::Config, "monolingual corpus needs a style id");
  const auto lines = read_lines(path);
  StyledCorpus corpus{style_id, language, {}};
  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty() || lines[i].find('\t') != std::string::npos) {
      bad.push_back(i + 1);
      continue;
    }
    corpus.sentences.push_back(Sentence{lines[i], {}});
  }
  if (!bad.empty()) report_malformed(path, bad, "empty line or embedded tab");
  return corpus;
}

void save_monolingual(const std::string& path, const StyledCorpus& corpus) {
  std::string out;
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    if (!writable_field(corpus.sentences[i].text)) {
      throw Error(ErrorKind::Format, "sentence " + std::to_string(i) + " cannot be written");
    }
    out += corpus.sentences[i].text;
    out += '\n';
  }
  write_file(path, out);
}

std::vector<CorpusManifestEntry> load_manifest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, path + ": " + e.what());
  }
  if (j.is_object()) j = nlohmann::json::array({j});
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<CorpusManifestEntry> out;
  for (const auto& e : j) {
    try {
      CorpusManifestEntry entry{e.at("style_id"), e.at("language"), e.at("path")};
      if (std::filesystem::path(entry.path).is_relative()) entry.path = (base / entry.path).string();
      out.push_back(std::move(entry));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorKind::Format, path + ": " + ex.what());
    }
  }
  return out;
}

void save_manifest(const std::string& path, std::span<const CorpusManifestEntry> entries) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : entries) j.push_back({{"style_id", e.style_id}, {"language", e.language}, {"path", e.path}});
  write_file(path, j.dump(2) + "\n");
}

std::vector<StyledCorpus> load_manifest_corpora(const std::string& path) {
  std::vector<StyledCorpus> out;
  for (const auto& e : load_manifest(path)) out.push_back(load_monolingual(e.path, e.style_id, e.language));
  return out;
}

void tokenize_pairs(std::span<ParallelPair> pairs, const Tokenizer& tokenizer) {
  for (auto& p : pairs) {
    p.source.tokens = tokenizer.encode(p.source.text);
    p.target.tokens = tokenizer.encode(p.target.text);
  }
}

void tokenize_corpus(StyledCorpus& corpus, const Tokenizer& tokenizer) {
  for (auto& s : corpus.sentences) s.tokens = tokenizer.encode(s.text);
}

std::vector<ParallelPair> length_filter(std::span<const ParallelPair> pairs, std::size_t max_len) {
  std::vector<ParallelPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.source.tokens.size() <= max_len && p.target.tokens.size() <= max_len) out.push_back(p);
  }
  return out;
}

StyledCorpus source_side(std::span<const ParallelPair> pairs, const std::string& language) {
  StyledCorpus c{"source", language, {}};
  for (const auto& p : pairs) c.sentences.push_back(p.source);
  return c;
}

StyledCorpus target_side(std::span<const ParallelPair> pairs, const std::string& language) {
  StyledCorpus c{"target", language, {}};
  for (const auto& p : pairs) c.sentences.push_back(p.target);
  return c;
}

}  // namespace styleap
