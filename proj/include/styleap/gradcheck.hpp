#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styleap/model.hpp"

namespace styleap {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  bool finite = true;  // every analytic gradient entry is finite
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor of |a - n| / max(|a|, |n|, floor); keeps entries whose
  /// true gradient is ~0 from dividing rounding noise by itself.
  double floor = 1e-6;
  std::uint64_t seed = 7;
};

/// Analytic gradients of the mean loss on batch against central finite
/// differences for every parameter entry, dropout disabled, in double precision.
GradCheckResult gradient_check(const ModelConfig& config, const std::vector<std::vector<TokenId>>& sources,
                               const std::vector<std::vector<TokenId>>& targets, const GradCheckOptions& options = {});

/// As gradient_check, but throws Error(Runtime) naming the worst parameter
/// tensor when the error reaches tolerance.
GradCheckResult require_gradients(const ModelConfig& config, const std::vector<std::vector<TokenId>>& sources,
                                  const std::vector<std::vector<TokenId>>& targets, double tolerance,
                                  const GradCheckOptions& options = {});

}  // namespace styleap
