// SPDX-License-Identifier: Apache-2.0
#include "vcwe/adam.hpp"

#include <cmath>

#include "vcwe/error.hpp"

namespace vcwe::ad {

AdamMoments& Adam::moments_for(const Parameter& p) {
  auto [it, inserted] = moments_.try_emplace(p.name());
  if (inserted) {
    it->second.m = Tensor(p.value().shape());
    it->second.v = Tensor(p.value().shape());
  } else if (it->second.m.shape() != p.value().shape()) {
    throw ShapeError("adam: moment shape mismatch for " + p.name());
  }
  return it->second;
}

void Adam::step(const Gradients& grads) {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  auto update = [&](double& param, double& m, double& v, double g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param -= options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon);
  };

  for (const auto& [param, grad] : grads.dense) {
    if (grad.shape() != param->value().shape()) throw ShapeError("adam: gradient shape mismatch for " + param->name());
    AdamMoments& mom = moments_for(*param);
    auto values = param->value().data();
    for (std::size_t i = 0; i < values.size(); ++i) update(values[i], mom.m[i], mom.v[i], grad[i]);
  }
  for (const auto& [param, rows] : grads.sparse) {
    AdamMoments& mom = moments_for(*param);
    const std::size_t width = param->value().dim(1);
    auto values = param->value().data();
    for (const auto& [r, g] : rows) {
      if (g.size() != width) throw ShapeError("adam: row gradient width mismatch for " + param->name());
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t i = r * width + j;
        update(values[i], mom.m[i], mom.v[i], g[j]);
      }
    }
  }
}

}  // namespace vcwe::ad
