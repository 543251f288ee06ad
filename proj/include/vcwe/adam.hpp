// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "vcwe/autodiff.hpp"

namespace vcwe::ad {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
};

/// Adam with bias correction. Dense gradients update the whole parameter;
/// row-sparse gradients update (and advance the moments of) only their rows.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(const Gradients& grads);

  std::uint64_t step_count() const noexcept { return steps_; }
  void set_step_count(std::uint64_t steps) noexcept { steps_ = steps; }
  const AdamOptions& options() const noexcept { return options_; }

  /// Moments keyed by parameter name; created lazily on first update.
  std::map<std::string, AdamMoments>& moments() noexcept { return moments_; }
  const std::map<std::string, AdamMoments>& moments() const noexcept { return moments_; }

 private:
  AdamMoments& moments_for(const Parameter& p);

  AdamOptions options_;
  std::uint64_t steps_ = 0;
  std::map<std::string, AdamMoments> moments_;
};

}  // namespace vcwe::ad
