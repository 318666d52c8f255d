#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "styleap/nn.hpp"
#include "styleap/types.hpp"

namespace styleap {

/// Post-layer-norm Transformer encoder-decoder hyperparameters.
/// Larger settings (6+6 layers, 512 wide) are reachable by configuration;
/// the defaults are sized for a desktop CPU.
struct ModelConfig {
  int vocab_size = 0;
  int enc_layers = 2;
  int dec_layers = 2;
  int model_dim = 64;
  int heads = 4;
  int ffn_dim = 256;
  double dropout = 0.1;
  bool tie_embeddings = true;
  double label_smoothing = 0.1;
  int max_positions = 256;

  /// Throws Error(Config) on an inconsistent configuration.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

struct LossStats {
  double loss_sum = 0.0;  // label-smoothed cross entropy, summed over target tokens
  double nll_sum = 0.0;   // plain negative log-likelihood, summed
  std::size_t tokens = 0;

  double mean_loss() const { return tokens ? loss_sum / static_cast<double>(tokens) : 0.0; }
  LossStats& operator+=(const LossStats& o) {
    loss_sum += o.loss_sum;
    nll_sum += o.nll_sum;
    tokens += o.tokens;
    return *this;
  }
};

/// One supervised sequence pair. BOS/EOS are added by the model.
struct SequencePair {
  std::span<const TokenId> source;
  std::span<const TokenId> target;
};

/// Attention probabilities of one decoded sequence. Decoder positions are the
/// decoder inputs (BOS followed by the emitted tokens).
template <typename S>
struct AttentionTraceT {
  int layers = 0;
  int heads = 0;
  std::vector<nn::Matrix<S>> self_attn;   // [layer * heads + head]: T x T
  std::vector<nn::Matrix<S>> cross_attn;  // [layer * heads + head]: T x S

  const nn::Matrix<S>& self(int layer, int head) const { return self_attn.at(static_cast<std::size_t>(layer * heads + head)); }
  const nn::Matrix<S>& cross(int layer, int head) const { return cross_attn.at(static_cast<std::size_t>(layer * heads + head)); }
};

template <typename S>
class Transformer {
 public:
  using Matrix = nn::Matrix<S>;
  using RowVector = nn::RowVector<S>;

  Transformer(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  std::vector<nn::Param<S>*> parameters();
  std::vector<const nn::Param<S>*> parameters() const;
  void zero_grad();

  /// Teacher-forced forward pass over a batch. With backward=true the
  /// gradients of the mean per-token loss are accumulated into Param::grad.
  /// A null dropout_rng disables dropout.
  LossStats forward_backward(std::span<const SequencePair> batch, std::mt19937_64* dropout_rng, bool backward);

  /// Teacher-forced attention probabilities for one (source, target) pair.
  AttentionTraceT<S> attention(std::span<const TokenId> source, std::span<const TokenId> target) const;

  /// Incremental decoding state for one hypothesis.
  struct DecoderState {
    std::vector<Matrix> keys, values;  // per decoder layer; first `length` rows are valid
    Eigen::Index length = 0;
  };
  struct EncodedSource {
    Matrix memory;
    std::vector<Matrix> cross_keys, cross_values;  // per decoder layer
  };

  EncodedSource encode(std::span<const TokenId> source) const;
  DecoderState start(Eigen::Index max_steps) const;
  /// Feeds one decoder input token; returns log-probabilities of the next token.
  RowVector step(const EncodedSource& src, DecoderState& state, TokenId token) const;

  const Matrix& source_embedding() const { return embeddings_.front().value; }

  TokenId bos_id = 2;
  TokenId eos_id = 3;

 private:
  struct EncoderLayer {
    nn::MultiHeadAttention<S> self_attn;
    nn::LayerNorm<S> ln1, ln2;
    nn::FeedForward<S> ffn;
  };
  struct DecoderLayer {
    nn::MultiHeadAttention<S> self_attn, cross_attn;
    nn::LayerNorm<S> ln1, ln2, ln3;
    nn::FeedForward<S> ffn;
  };
  struct Forward;

  nn::Param<S>& src_embed() { return embeddings_[0]; }
  nn::Param<S>& tgt_embed() { return embeddings_[config_.tie_embeddings ? 0 : 1]; }
  nn::Param<S>& out_embed() { return embeddings_[config_.tie_embeddings ? 0 : 2]; }
  const nn::Param<S>& src_embed() const { return embeddings_[0]; }
  const nn::Param<S>& tgt_embed() const { return embeddings_[config_.tie_embeddings ? 0 : 1]; }
  const nn::Param<S>& out_embed() const { return embeddings_[config_.tie_embeddings ? 0 : 2]; }

  Matrix embed(const nn::Param<S>& table, std::span<const TokenId> tokens, Eigen::Index first_pos) const;
  void run_forward(Forward& f, std::span<const SequencePair> batch, std::mt19937_64* rng) const;

  ModelConfig config_;
  std::vector<nn::Param<S>> embeddings_;  // 1 when tied, else source/target/output
  nn::Param<S> out_bias_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Matrix positions_;  // max_positions x model_dim sinusoidal table
};

extern template class Transformer<float>;
extern template class Transformer<double>;

using AttentionTrace = AttentionTraceT<float>;

}  // namespace styleap
