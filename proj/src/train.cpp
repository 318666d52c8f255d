#include "styleap/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, "train config: " + m); };
  if (batch_tokens == 0) fail("batch_tokens must be positive");
  if (checkpoint_every == 0) fail("checkpoint_every must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must be in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_tokens", batch_tokens}, {"max_steps", max_steps},       {"checkpoint_every", checkpoint_every},
          {"learning_rate", learning_rate}, {"warmup_steps", warmup_steps}, {"beta1", beta1},
          {"beta2", beta2},               {"adam_eps", adam_eps},         {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_tokens = j.value("batch_tokens", c.batch_tokens);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string TrainResult::curve_csv() const {
  std::ostringstream out;
  out.precision(6);
  out << "step,loss,dev_loss\n";
  for (const auto& p : curve) out << p.step << ',' << std::fixed << p.loss << ',' << p.dev_loss << '\n';
  return out.str();
}

double learning_rate_at(const TrainConfig& config, std::size_t step) {
  const double s = static_cast<double>(std::max<std::size_t>(step, 1));
  if (config.warmup_steps == 0) return config.learning_rate;
  const double w = static_cast<double>(config.warmup_steps);
  return config.learning_rate * std::min(s / w, std::sqrt(w / s));
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<TrainingExample>& data, std::size_t batch_tokens,
                                                   std::uint64_t seed) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  std::size_t tokens = 0;
  for (std::size_t i : order) {
    const std::size_t n = data[i].source.size() + data[i].target.size() + 2;
    if (!cur.empty() && tokens + n > batch_tokens) {
      batches.push_back(std::move(cur));
      cur.clear();
      tokens = 0;
    }
    cur.push_back(i);
    tokens += n;
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

namespace {

std::vector<SequencePair> views(const std::vector<TrainingExample>& data, const std::vector<std::size_t>& idx) {
  std::vector<SequencePair> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back({data[i].source, data[i].target});
  return out;
}

}  // namespace

double evaluate_loss(const TranslationModel& model, const std::vector<TrainingExample>& data, std::size_t batch_tokens) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  // The network is only read: forward_backward with backward=false touches no state.
  auto& net = const_cast<TranslationModel&>(model).network();
  LossStats total;
  std::vector<std::size_t> idx;
  std::size_t tokens = 0;
  auto flush = [&] {
    const auto batch = views(data, idx);
    total += net.forward_backward(batch, nullptr, false);
    idx.clear();
    tokens = 0;
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t n = data[i].source.size() + data[i].target.size() + 2;
    if (!idx.empty() && tokens + n > batch_tokens) flush();
    idx.push_back(i);
    tokens += n;
  }
  if (!idx.empty()) flush();
  return total.mean_loss();
}

TrainResult train(TranslationModel& model, const std::vector<TrainingExample>& data,
                  const std::vector<TrainingExample>& dev, const TrainConfig& config, const TrainLogger& log) {
  config.validate();
  if (data.empty()) throw Error(ErrorKind::Config, "training data is empty");
  auto& net = model.network();
  auto params = net.parameters();

  std::vector<nn::Matrix<float>> m, v, best;
  for (auto* p : params) {
    m.push_back(nn::Matrix<float>::Zero(p->value.rows(), p->value.cols()));
    v.push_back(nn::Matrix<float>::Zero(p->value.rows(), p->value.cols()));
  }
  auto snapshot = [&] {
    best.clear();
    for (auto* p : params) best.push_back(p->value);
  };

  TrainResult result;
  result.best_dev_loss = std::numeric_limits<double>::infinity();
  if (!dev.empty()) {
    result.best_dev_loss = evaluate_loss(model, dev);
    snapshot();
  }

  std::mt19937_64 dropout_rng(derive_seed(config.seed, "dropout"));
  std::vector<std::vector<std::size_t>> batches;
  std::size_t epoch = 0, cursor = 0;
  LossStats window;
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  const auto eps = static_cast<float>(config.adam_eps);

  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    if (cursor == batches.size()) {
      batches = make_batches(data, config.batch_tokens, derive_seed(derive_seed(config.seed, "order"), epoch++));
      cursor = 0;
    }
    const std::size_t batch_id = cursor;
    const auto batch = views(data, batches[cursor++]);
    net.zero_grad();
    const LossStats stats = net.forward_backward(batch, &dropout_rng, true);
    if (!std::isfinite(stats.loss_sum)) {
      throw Error(ErrorKind::Runtime, "non-finite loss at step " + std::to_string(step) + ", batch " +
                                          std::to_string(batch_id) + " of epoch " + std::to_string(epoch - 1));
    }
    window += stats;

    const double lr = learning_rate_at(config, step);
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    const auto step_size = static_cast<float>(lr / bc1);
    const auto inv_bc2 = static_cast<float>(1.0 / bc2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& g = params[i]->grad;
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g.cwiseProduct(g);
      params[i]->value.array() -= step_size * m[i].array() / ((v[i].array() * inv_bc2).sqrt() + eps);
    }
    result.steps = step;

    if (step % config.checkpoint_every == 0 || step == config.max_steps) {
      CurvePoint point{step, window.mean_loss(), std::numeric_limits<double>::quiet_NaN()};
      window = LossStats{};
      if (!dev.empty()) {
        point.dev_loss = evaluate_loss(model, dev);
        if (point.dev_loss < result.best_dev_loss) {
          result.best_dev_loss = point.dev_loss;
          result.best_step = step;
          snapshot();
        }
      }
      result.curve.push_back(point);
      if (log) log(point);
    }
  }
  net.zero_grad();
  if (!dev.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  } else {
    result.best_step = result.steps;
    result.best_dev_loss = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

}  // namespace styleap
