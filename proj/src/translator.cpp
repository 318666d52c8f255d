#include "styleap/translator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "styleap/binary_io.hpp"
#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'Y', 'L', 'E', 'A', 'P', 'M'};

ModelConfig checked(ModelConfig config, const Tokenizer& tok) {
  if (config.vocab_size == 0) config.vocab_size = static_cast<int>(tok.vocab_size());
  if (config.vocab_size != static_cast<int>(tok.vocab_size())) {
    throw Error(ErrorKind::Dimension, "model vocab_size " + std::to_string(config.vocab_size) +
                                          " differs from tokenizer vocabulary " + std::to_string(tok.vocab_size()));
  }
  return config;
}

struct Beam {
  std::vector<TokenId> tokens;
  double log_prob = 0.0;
  Transformer<float>::DecoderState state;
};

}  // namespace

TranslationModel::TranslationModel(Tokenizer tokenizer, const ModelConfig& config, std::uint64_t seed)
    : tokenizer_(std::move(tokenizer)), network_(checked(config, tokenizer_), seed) {
  network_.bos_id = tokenizer_.bos_id();
  network_.eos_id = tokenizer_.eos_id();
  banned_.assign(tokenizer_.vocab_size(), 0);
  banned_[static_cast<std::size_t>(tokenizer_.pad_id())] = 1;
  banned_[static_cast<std::size_t>(tokenizer_.bos_id())] = 1;
  for (TokenId t : tokenizer_.tag_ids()) banned_[static_cast<std::size_t>(t)] = 1;
}

std::vector<TokenId> TranslationModel::source_ids(const Sentence& s) const {
  return s.tokens.empty() && !s.text.empty() ? tokenizer_.encode(s.text) : s.tokens;
}

int TranslationModel::resolve_max_len(std::size_t source_len, int requested) const {
  const int cap = config().max_positions - 1;
  const int want = requested > 0 ? requested : static_cast<int>(2 * source_len + 10);
  return std::min(want, cap);
}

Hypothesis TranslationModel::decode(std::span<const TokenId> source, const DecodeOptions& options) const {
  if (options.beam < 1) throw Error(ErrorKind::Config, "beam must be at least 1");
  const int max_len = resolve_max_len(source.size(), options.max_len);
  const auto enc = network_.encode(source);
  const TokenId eos = tokenizer_.eos_id();
  const auto beam_width = static_cast<std::size_t>(options.beam);

  // A hypothesis holds at most one separator, so prompt and payload split cleanly.
  const TokenId sep = tokenizer_.separator_id();
  auto masked = [&](Transformer<float>::RowVector& logp, const std::vector<TokenId>& so_far) {
    for (Eigen::Index v = 0; v < logp.size(); ++v) {
      if (banned_[static_cast<std::size_t>(v)]) logp(v) = -std::numeric_limits<float>::infinity();
    }
    if (std::find(so_far.begin(), so_far.end(), sep) != so_far.end()) {
      logp(sep) = -std::numeric_limits<float>::infinity();
    }
  };

  if (beam_width == 1) {
    Hypothesis h;
    auto state = network_.start(max_len + 1);
    TokenId prev = tokenizer_.bos_id();
    for (int t = 0; t <= max_len; ++t) {
      auto logp = network_.step(enc, state, prev);
      masked(logp, h.tokens);
      if (t == max_len) break;
      Eigen::Index best = 0;
      logp.maxCoeff(&best);
      h.log_prob += logp(best);
      if (static_cast<TokenId>(best) == eos) {
        h.finished = true;
        return h;
      }
      prev = static_cast<TokenId>(best);
      h.tokens.push_back(prev);
    }
    return h;
  }

  std::vector<Beam> live(1);
  live[0].state = network_.start(max_len + 1);
  std::vector<Hypothesis> finished;
  struct Cand {
    double score;
    std::size_t beam;
    TokenId token;
  };
  for (int t = 0; t <= max_len && !live.empty() && finished.size() < beam_width; ++t) {
    std::vector<Cand> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      const TokenId prev = live[b].tokens.empty() ? tokenizer_.bos_id() : live[b].tokens.back();
      auto logp = network_.step(enc, live[b].state, prev);
      masked(logp, live[b].tokens);
      if (t == max_len) {
        finished.push_back({live[b].tokens, live[b].log_prob, false});
        continue;
      }
      // Only the top beam_width tokens of each beam can survive.
      std::vector<std::pair<float, TokenId>> top;
      for (Eigen::Index v = 0; v < logp.size(); ++v) {
        if (std::isfinite(logp(v))) top.emplace_back(logp(v), static_cast<TokenId>(v));
      }
      const std::size_t keep = std::min(beam_width, top.size());
      std::partial_sort(top.begin(), top.begin() + static_cast<std::ptrdiff_t>(keep), top.end(),
                        [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
      for (std::size_t i = 0; i < keep; ++i) cands.push_back({live[b].log_prob + top[i].first, b, top[i].second});
    }
    if (t == max_len) break;
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
    std::vector<Beam> next;
    for (const auto& c : cands) {
      if (next.size() >= beam_width || finished.size() >= beam_width) break;
      if (c.token == eos) {
        finished.push_back({live[c.beam].tokens, c.score, true});
        continue;
      }
      Beam nb;
      nb.tokens = live[c.beam].tokens;
      nb.tokens.push_back(c.token);
      nb.log_prob = c.score;
      nb.state = live[c.beam].state;
      next.push_back(std::move(nb));
    }
    live = std::move(next);
  }
  if (finished.empty()) {
    for (auto& b : live) finished.push_back({b.tokens, b.log_prob, false});
  }
  if (finished.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].normalized() > finished[best].normalized()) best = i;
  }
  return finished[best];
}

Sentence TranslationModel::translate(const Sentence& source, const DecodeOptions& options) const {
  Hypothesis h = decode(source_ids(source), options);
  Sentence out;
  out.text = tokenizer_.decode(h.tokens);
  out.tokens = std::move(h.tokens);
  return out;
}

std::pair<Sentence, AttentionTrace> TranslationModel::translate_with_attention(const Sentence& source,
                                                                               int max_len) const {
  const auto src = source_ids(source);
  Sentence out = translate(source, DecodeOptions{1, max_len});
  return {out, network_.attention(src, out.tokens)};
}

double TranslationModel::score(std::span<const TokenId> source, std::span<const TokenId> target) const {
  const auto enc = network_.encode(source);
  auto state = network_.start(static_cast<Eigen::Index>(target.size() + 1));
  double total = 0.0;
  TokenId prev = tokenizer_.bos_id();
  for (std::size_t i = 0; i <= target.size(); ++i) {
    const auto logp = network_.step(enc, state, prev);
    const TokenId next = i < target.size() ? target[i] : tokenizer_.eos_id();
    total += logp(next);
    prev = next;
  }
  return total;
}

std::string TranslationModel::serialize() const {
  using binio::put;
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  const nlohmann::json header = {{"config", config().to_json()}, {"tokenizer", tokenizer_.to_json()}};
  const std::string text = header.dump();
  put<std::uint64_t>(out, text.size());
  out += text;
  const auto params = network_.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    binio::put_string(out, p->name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    binio::put_floats(out, p->value.data(), static_cast<std::size_t>(p->value.size()));
  }
  put<std::uint32_t>(out, crc32(out));
  return out;
}

TranslationModel TranslationModel::deserialize(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + 8) throw Error(ErrorKind::Format, "checkpoint: file truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  binio::Reader tail(bytes.substr(bytes.size() - 4), "checkpoint");
  if (tail.get<std::uint32_t>() != crc32(body)) throw Error(ErrorKind::Checksum, "checkpoint: CRC mismatch");
  binio::Reader r(body, "checkpoint");
  if (r.get_bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw Error(ErrorKind::Format, "checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::Format, "checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_len = r.get<std::uint64_t>();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.get_bytes(static_cast<std::size_t>(header_len)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("checkpoint: bad header: ") + e.what());
  }
  TranslationModel model(Tokenizer::from_json(header.at("tokenizer")), ModelConfig::from_json(header.at("config")), 0);
  auto params = model.network_.parameters();
  const auto count = r.get<std::uint32_t>();
  if (count != params.size()) {
    throw Error(ErrorKind::Format, "checkpoint: expected " + std::to_string(params.size()) + " tensors, found " +
                                       std::to_string(count));
  }
  for (auto* p : params) {
    const std::string name = r.get_string();
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (name != p->name || rows != static_cast<std::uint64_t>(p->value.rows()) ||
        cols != static_cast<std::uint64_t>(p->value.cols())) {
      throw Error(ErrorKind::Format, "checkpoint: tensor '" + name + "' does not match model parameter '" + p->name + "'");
    }
    r.get_floats(p->value.data(), static_cast<std::size_t>(p->value.size()));
  }
  if (r.remaining() != 0) throw Error(ErrorKind::Format, "checkpoint: trailing bytes");
  return model;
}

void TranslationModel::save(const std::string& path) const { write_file(path, serialize()); }

TranslationModel TranslationModel::load(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace styleap
