// SPDX-License-Identifier: Apache-2.0
#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "vcwe/rng.hpp"

namespace vcwe::testkit {

GradCheckResult check_gradients(const std::vector<ad::Parameter*>& params, const LossBuilder& build, double h) {
  std::vector<ad::Tensor> analytic;
  {
    ad::Graph g(true);
    ad::Var loss = build(g);
    const ad::Gradients grads = g.backward(loss);
    for (const ad::Parameter* p : params) analytic.push_back(grads.to_dense(*p));
  }
  auto eval = [&] {
    ad::Graph g(false);
    return build(g).value().item();
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ad::Tensor& value = params[pi]->value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = eval();
      value[i] = saved - h;
      const double down = eval();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (err > result.max_error || !std::isfinite(err)) {
        result.max_error = std::isfinite(err) ? err : INFINITY;
        result.worst = params[pi]->name() + "[" + std::to_string(i) + "]";
      }
      ++result.checked;
    }
  }
  return result;
}

ad::Tensor random_tensor(ad::Shape shape, std::uint64_t seed, double lo, double hi) {
  Rng rng(seed);
  ad::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace vcwe::testkit
