#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleap/bleu.hpp"
#include "styleap/classifier.hpp"
#include "styleap/types.hpp"

namespace styleap {

struct MultiwayItem {
  Sentence source;
  std::map<std::string, Sentence> references;  // style_id -> reference
};

/// One source with one reference per declared style.
struct MultiwayTestSet {
  std::vector<std::string> styles;
  std::vector<MultiwayItem> items;

  /// Throws Error(Format) when an item lacks a reference for a declared style.
  void validate() const;
  std::vector<std::string> sources() const;
  std::vector<std::string> references(const std::string& style_id) const;

  /// JSON lines: {"source": ..., "references": {"A": ..., "B": ...}}. Styles
  /// are taken from the first record.
  static MultiwayTestSet load_jsonl(const std::string& path);
  void save_jsonl(const std::string& path) const;
};

/// Hypotheses of one system, per requested style, in test-set order.
struct SystemOutputs {
  std::string name;
  std::map<std::string, std::vector<std::string>> hypotheses;
};

struct ComparisonCell {
  BleuScore bleu;                            // against the matching-style reference
  std::map<std::string, double> bleu_by_ref;  // reference style -> BLEU score
  double transfer_ratio = 0.0;
};

struct ComparisonRow {
  std::string system;
  std::map<std::string, ComparisonCell> by_style;
  double macro_bleu = 0.0;
  double macro_ratio = 0.0;
};

struct ComparisonReport {
  std::vector<std::string> styles;
  std::vector<ComparisonRow> rows;

  const ComparisonRow& row(const std::string& system) const;

  /// system,style,bleu,transfer_ratio,bleu_ref_<style>... plus a macro row per system.
  std::string to_csv() const;
  std::string to_table() const;
  nlohmann::json to_json() const;
};

/// Per-system, per-style BLEU against the matching reference, BLEU against every
/// reference style, transfer ratio, and macro averages. Throws Error(Config)
/// when a system lacks hypotheses for a style or has the wrong count.
ComparisonReport run_comparison(const std::vector<SystemOutputs>& systems, const MultiwayTestSet& testset,
                                const StyleClassifier& classifier, const BleuOptions& options = {});

/// Fixed-precision rendering used in every report so reruns are byte-identical.
std::string format_number(double value, int decimals = 4);

}  // namespace styleap
