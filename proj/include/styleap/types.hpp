#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace styleap {

using TokenId = std::int32_t;

struct Sentence {
  std::string text;
  std::vector<TokenId> tokens;  // empty until tokenized

  bool operator==(const Sentence&) const = default;
};

struct ParallelPair {
  Sentence source;
  Sentence target;
  std::optional<std::string> style_label;

  bool operator==(const ParallelPair&) const = default;
};

struct StyledCorpus {
  std::string style_id;
  std::string language;
  std::vector<Sentence> sentences;

  bool operator==(const StyledCorpus&) const = default;
};

}  // namespace styleap
