#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "styleap/translator.hpp"

namespace styleap {

struct TrainConfig {
  std::size_t batch_tokens = 2048;  // source + target tokens per update
  std::size_t max_steps = 2000;
  std::size_t checkpoint_every = 250;  // dev evaluation interval
  double learning_rate = 2e-3;         // peak, reached at the end of warmup
  std::size_t warmup_steps = 200;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct TrainingExample {
  std::vector<TokenId> source;
  std::vector<TokenId> target;
};

struct CurvePoint {
  std::size_t step = 0;
  double loss = 0.0;      // mean training loss since the previous point
  double dev_loss = 0.0;  // NaN when no dev set was given
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::size_t best_step = 0;
  double best_dev_loss = 0.0;
  std::size_t steps = 0;

  /// CSV with header step,loss,dev_loss.
  std::string curve_csv() const;
};

/// Learning rate at a 1-based step: linear warmup, then inverse square root decay.
double learning_rate_at(const TrainConfig& config, std::size_t step);

/// Deterministic batches: examples are shuffled per epoch with a seed derived
/// from config.seed and packed greedily up to batch_tokens.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<TrainingExample>& data, std::size_t batch_tokens,
                                                   std::uint64_t seed);

using TrainLogger = std::function<void(const CurvePoint&)>;

/// Adam training of model in place. When dev is non-empty the parameters of the
/// checkpoint with the lowest dev loss are restored at the end. Throws
/// Error(Runtime) naming the step and batch on a non-finite loss, and
/// Error(Config) on an empty dataset.
TrainResult train(TranslationModel& model, const std::vector<TrainingExample>& data,
                  const std::vector<TrainingExample>& dev, const TrainConfig& config, const TrainLogger& log = {});

/// Mean per-token label-smoothed loss without dropout.
double evaluate_loss(const TranslationModel& model, const std::vector<TrainingExample>& data,
                     std::size_t batch_tokens = 4096);

}  // namespace styleap
