#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "styleap/types.hpp"

namespace styleap {

/// Fixed-dimension sentence representation with its L2 norm cached.
class SentenceVector {
 public:
  SentenceVector() = default;
  explicit SentenceVector(Eigen::VectorXf values) : values_(std::move(values)), norm_(values_.norm()) {}

  const Eigen::VectorXf& values() const noexcept { return values_; }
  float norm() const noexcept { return norm_; }
  Eigen::Index dim() const noexcept { return values_.size(); }

  /// The reserved representation of an empty sentence: (1, 0, ..., 0).
  static SentenceVector unit_basis(Eigen::Index dim);

  bool operator==(const SentenceVector& o) const { return values_ == o.values_; }

 private:
  Eigen::VectorXf values_;
  float norm_ = 0.0f;
};

/// Cosine similarity clamped to [-1, 1]; 0 when either vector is zero.
float cosine_similarity(const SentenceVector& a, const SentenceVector& b);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::string name() const = 0;
  virtual Eigen::Index dimension() const = 0;
  virtual bool deterministic() const { return true; }
  virtual bool unit_norm() const { return true; }

  virtual SentenceVector embed_text(std::string_view text) const = 0;

  SentenceVector embed(const Sentence& sentence) const { return embed_text(sentence.text); }
  std::vector<SentenceVector> embed_batch(std::span<const Sentence> sentences) const;
  std::vector<SentenceVector> embed_texts(std::span<const std::string> texts) const;
};

/// Signed feature hashing of word unigrams and character 3..5-grams (word
/// padded with '<' and '>'), log(1 + tf) weighting, L2 normalized.
class HashEmbedder final : public EmbeddingProvider {
 public:
  explicit HashEmbedder(Eigen::Index dimension = 256, int min_ngram = 3, int max_ngram = 5);

  std::string name() const override { return "hash" + std::to_string(dimension_); }
  Eigen::Index dimension() const override { return dimension_; }
  SentenceVector embed_text(std::string_view text) const override;

 private:
  Eigen::Index dimension_;
  int min_ngram_;
  int max_ngram_;
};

class Tokenizer;
class TranslationModel;

/// Mean of the translator's (source) token embeddings, L2 normalized.
class LearnedEmbedder final : public EmbeddingProvider {
 public:
  explicit LearnedEmbedder(std::shared_ptr<const TranslationModel> model);

  std::string name() const override { return "learned"; }
  Eigen::Index dimension() const override;
  SentenceVector embed_text(std::string_view text) const override;

 private:
  std::shared_ptr<const TranslationModel> model_;
};

/// Resolves `hash256` (or `hashN`) and `learned`. `learned` requires a model.
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& name,
                                                 std::shared_ptr<const TranslationModel> model = nullptr);

}  // namespace styleap
