#include "styleap/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

void MultiwayTestSet::validate() const {
  if (styles.empty()) throw Error(ErrorKind::Format, "test set declares no styles");
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (const auto& s : styles) {
      if (!items[i].references.count(s)) {
        throw Error(ErrorKind::Format, "test item " + std::to_string(i) + " has no reference for style '" + s + "'");
      }
    }
  }
}

std::vector<std::string> MultiwayTestSet::sources() const {
  std::vector<std::string> out;
  for (const auto& it : items) out.push_back(it.source.text);
  return out;
}

std::vector<std::string> MultiwayTestSet::references(const std::string& style_id) const {
  std::vector<std::string> out;
  for (const auto& it : items) out.push_back(it.references.at(style_id).text);
  return out;
}

MultiwayTestSet MultiwayTestSet::load_jsonl(const std::string& path) {
  MultiwayTestSet ts;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MultiwayItem item;
      item.source.text = j.at("source").get<std::string>();
      for (const auto& [style, ref] : j.at("references").items()) item.references[style].text = ref.get<std::string>();
      if (ts.items.empty()) {
        for (const auto& [style, ref] : item.references) ts.styles.push_back(style);
      }
      ts.items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Format, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  ts.validate();
  return ts;
}

void MultiwayTestSet::save_jsonl(const std::string& path) const {
  std::string out;
  for (const auto& it : items) {
    nlohmann::json refs = nlohmann::json::object();
    for (const auto& [style, ref] : it.references) refs[style] = ref.text;
    out += nlohmann::json{{"source", it.source.text}, {"references", refs}}.dump() + "\n";
  }
  write_file(path, out);
}

const ComparisonRow& ComparisonReport::row(const std::string& system) const {
  for (const auto& r : rows) {
    if (r.system == system) return r;
  }
  throw Error(ErrorKind::NotFound, "no system '" + system + "' in report");
}

std::string format_number(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  return buf;
}

std::string ComparisonReport::to_csv() const {
  std::ostringstream out;
  out << "system,style,bleu,transfer_ratio";
  for (const auto& s : styles) out << ",bleu_ref_" << s;
  out << '\n';
  for (const auto& r : rows) {
    for (const auto& s : styles) {
      const auto& c = r.by_style.at(s);
      out << r.system << ',' << s << ',' << format_number(c.bleu.score) << ',' << format_number(c.transfer_ratio);
      for (const auto& ref : styles) out << ',' << format_number(c.bleu_by_ref.at(ref));
      out << '\n';
    }
    out << r.system << ",macro," << format_number(r.macro_bleu) << ',' << format_number(r.macro_ratio);
    for (std::size_t i = 0; i < styles.size(); ++i) out << ',';
    out << '\n';
  }
  return out.str();
}

std::string ComparisonReport::to_table() const {
  std::size_t width = 6;
  for (const auto& r : rows) width = std::max(width, r.system.size());
  std::ostringstream out;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  out << pad("system", width);
  for (const auto& s : styles) out << "  " << pad("BLEU(" + s + ")", 10) << "  " << pad("ratio(" + s + ")", 10);
  out << "  " << pad("BLEU(avg)", 10) << "  ratio(avg)\n";
  for (const auto& r : rows) {
    out << pad(r.system, width);
    for (const auto& s : styles) {
      const auto& c = r.by_style.at(s);
      out << "  " << pad(format_number(c.bleu.score, 2), 10) << "  " << pad(format_number(c.transfer_ratio, 2), 10);
    }
    out << "  " << pad(format_number(r.macro_bleu, 2), 10) << "  " << format_number(r.macro_ratio, 2) << '\n';
  }
  return out.str();
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json j;
  j["styles"] = styles;
  j["systems"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"system", r.system}, {"macro_bleu", format_number(r.macro_bleu)},
                       {"macro_ratio", format_number(r.macro_ratio)}};
    for (const auto& s : styles) {
      const auto& c = r.by_style.at(s);
      nlohmann::json cell{{"bleu", format_number(c.bleu.score)},
                          {"brevity_penalty", format_number(c.bleu.brevity_penalty)},
                          {"hyp_len", c.bleu.hyp_len},
                          {"ref_len", c.bleu.ref_len},
                          {"transfer_ratio", format_number(c.transfer_ratio)}};
      for (std::size_t n = 0; n < 4; ++n) cell["precisions"].push_back(format_number(c.bleu.precisions[n]));
      for (const auto& [ref, score] : c.bleu_by_ref) cell["bleu_by_ref"][ref] = format_number(score);
      row["styles"][s] = cell;
    }
    j["systems"].push_back(row);
  }
  return j;
}

ComparisonReport run_comparison(const std::vector<SystemOutputs>& systems, const MultiwayTestSet& testset,
                                const StyleClassifier& classifier, const BleuOptions& options) {
  testset.validate();
  ComparisonReport report;
  report.styles = testset.styles;
  std::map<std::string, std::vector<std::string>> refs;
  for (const auto& s : testset.styles) refs[s] = testset.references(s);
  for (const auto& sys : systems) {
    ComparisonRow row;
    row.system = sys.name;
    for (const auto& s : testset.styles) {
      const auto it = sys.hypotheses.find(s);
      if (it == sys.hypotheses.end()) {
        throw Error(ErrorKind::Config, "system '" + sys.name + "' has no hypotheses for style '" + s + "'");
      }
      if (it->second.size() != testset.items.size()) {
        throw Error(ErrorKind::Config, "system '" + sys.name + "' has " + std::to_string(it->second.size()) +
                                           " hypotheses for style '" + s + "', expected " +
                                           std::to_string(testset.items.size()));
      }
      ComparisonCell cell;
      cell.bleu = corpus_bleu(it->second, refs[s], options);
      for (const auto& r : testset.styles) cell.bleu_by_ref[r] = r == s ? cell.bleu.score : corpus_bleu(it->second, refs[r], options).score;
      cell.transfer_ratio = transfer_ratio(it->second, s, classifier);
      row.macro_bleu += cell.bleu.score;
      row.macro_ratio += cell.transfer_ratio;
      row.by_style[s] = std::move(cell);
    }
    const auto k = static_cast<double>(testset.styles.size());
    row.macro_bleu /= k;
    row.macro_ratio /= k;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace styleap
