#include "styleap/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "styleap/error.hpp"

namespace styleap {

GradCheckResult gradient_check(const ModelConfig& config, const std::vector<std::vector<TokenId>>& sources,
                               const std::vector<std::vector<TokenId>>& targets, const GradCheckOptions& options) {
  if (sources.size() != targets.size() || sources.empty()) {
    throw Error(ErrorKind::Config, "gradient check needs a non-empty batch with matching sides");
  }
  Transformer<double> net(config, options.seed);
  std::vector<SequencePair> batch;
  for (std::size_t i = 0; i < sources.size(); ++i) batch.push_back({sources[i], targets[i]});

  auto mean_loss = [&] {
    const LossStats s = net.forward_backward(batch, nullptr, false);
    return s.loss_sum / static_cast<double>(s.tokens);
  };

  net.zero_grad();
  net.forward_backward(batch, nullptr, true);
  GradCheckResult result;
  for (auto* p : net.parameters()) {
    const nn::Matrix<double> analytic = p->grad;
    if (!analytic.allFinite()) result.finite = false;
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double saved = w;
      w = saved + options.step;
      const double up = mean_loss();
      w = saved - options.step;
      const double down = mean_loss();
      w = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      const double err = std::abs(a - numeric) / denom;
      ++result.checked;
      if (!(err <= result.max_relative_error)) {
        result.max_relative_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
        result.worst_parameter = p->name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult require_gradients(const ModelConfig& config, const std::vector<std::vector<TokenId>>& sources,
                                  const std::vector<std::vector<TokenId>>& targets, double tolerance,
                                  const GradCheckOptions& options) {
  GradCheckResult r = gradient_check(config, sources, targets, options);
  if (!(r.max_relative_error < tolerance) || !r.finite) {
    std::ostringstream msg;
    msg << "gradient check failed for parameter '" << r.worst_parameter << "' entry " << r.worst_index
        << ": relative error " << r.max_relative_error << " (analytic " << r.analytic << ", numeric " << r.numeric
        << ")";
    throw Error(ErrorKind::Runtime, msg.str());
  }
  return r;
}

}  // namespace styleap
