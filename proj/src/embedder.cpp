#include "styleap/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "styleap/error.hpp"
#include "styleap/text.hpp"
#include "styleap/translator.hpp"

namespace styleap {

SentenceVector SentenceVector::unit_basis(Eigen::Index dim) {
  Eigen::VectorXf v = Eigen::VectorXf::Zero(dim);
  if (dim > 0) v[0] = 1.0f;
  return SentenceVector(std::move(v));
}

float cosine_similarity(const SentenceVector& a, const SentenceVector& b) {
  if (a.dim() != b.dim()) throw Error(ErrorKind::Dimension, "cosine_similarity: dimension mismatch");
  if (a.norm() == 0.0f || b.norm() == 0.0f) return 0.0f;
  const float c = a.values().dot(b.values()) / (a.norm() * b.norm());
  return std::clamp(c, -1.0f, 1.0f);
}

std::vector<SentenceVector> EmbeddingProvider::embed_batch(std::span<const Sentence> sentences) const {
  std::vector<SentenceVector> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(embed(s));
  return out;
}

std::vector<SentenceVector> EmbeddingProvider::embed_texts(std::span<const std::string> texts) const {
  std::vector<SentenceVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_text(t));
  return out;
}

HashEmbedder::HashEmbedder(Eigen::Index dimension, int min_ngram, int max_ngram)
    : dimension_(dimension), min_ngram_(min_ngram), max_ngram_(max_ngram) {
  if (dimension < 1) throw Error(ErrorKind::Config, "hash embedder dimension must be positive");
  if (min_ngram < 1 || max_ngram < min_ngram) throw Error(ErrorKind::Config, "invalid n-gram range");
}

SentenceVector HashEmbedder::embed_text(std::string_view text) const {
  const auto words = split_whitespace(text);
  if (words.empty()) return SentenceVector::unit_basis(dimension_);

  // Term frequencies per feature hash; std::map keeps accumulation order fixed.
  std::map<std::uint64_t, int> tf;
  constexpr std::uint64_t kWordSalt = 0x77u;
  constexpr std::uint64_t kGramSalt = 0x63u;
  for (const auto& w : words) {
    ++tf[fnv1a64(w, splitmix64(kWordSalt))];
    const std::string padded = "<" + w + ">";
    const auto b = utf8_boundaries(padded);
    const std::size_t chars = b.size() - 1;
    for (int n = min_ngram_; n <= max_ngram_; ++n) {
      const auto un = static_cast<std::size_t>(n);
      if (chars < un) break;
      for (std::size_t i = 0; i + un <= chars; ++i) {
        ++tf[fnv1a64(std::string_view(padded).substr(b[i], b[i + un] - b[i]), splitmix64(kGramSalt))];
      }
    }
  }

  Eigen::VectorXf v = Eigen::VectorXf::Zero(dimension_);
  for (const auto& [h, count] : tf) {
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dimension_));
    const float sign = (h >> 63) ? -1.0f : 1.0f;
    v[bucket] += sign * std::log1p(static_cast<float>(count));
  }
  const float norm = v.norm();
  if (!(norm > 0.0f) || !std::isfinite(norm)) return SentenceVector::unit_basis(dimension_);
  v /= norm;
  return SentenceVector(std::move(v));
}

LearnedEmbedder::LearnedEmbedder(std::shared_ptr<const TranslationModel> model) : model_(std::move(model)) {
  if (!model_) throw Error(ErrorKind::Config, "learned embedder requires a trained model");
}

Eigen::Index LearnedEmbedder::dimension() const { return model_->config().model_dim; }

SentenceVector LearnedEmbedder::embed_text(std::string_view text) const {
  const auto ids = model_->tokenizer().encode(text);
  if (ids.empty()) return SentenceVector::unit_basis(dimension());
  const auto& table = model_->network().source_embedding();
  Eigen::VectorXf mean = Eigen::VectorXf::Zero(dimension());
  for (TokenId id : ids) mean += table.row(id).transpose();
  mean /= static_cast<float>(ids.size());
  const float norm = mean.norm();
  if (!(norm > 0.0f) || !std::isfinite(norm)) return SentenceVector::unit_basis(dimension());
  return SentenceVector(mean / norm);
}

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& name,
                                                 std::shared_ptr<const TranslationModel> model) {
  if (name == "learned") return std::make_unique<LearnedEmbedder>(std::move(model));
  if (name.rfind("hash", 0) == 0) {
    const std::string digits = name.substr(4);
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
      return std::make_unique<HashEmbedder>(std::stol(digits));
    }
  }
  throw Error(ErrorKind::Config, "unknown embedder '" + name + "' (expected hash256 or learned)");
}

}  // namespace styleap
