#pragma once

// Central finite-difference oracle for reverse-mode gradients, run at double
// precision. Checks every coordinate by default, or a deterministic sample
// per tensor for large parameter sets.

#include <functional>

#include "uigroup/rng.hpp"
#include "uigroup/tensor.hpp"

namespace uigroup::testutil {

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t checked = 0;
};

// make_loss() must rebuild the loss from the current parameter values (and be
// deterministic). coords_per_tensor <= 0 checks everything.
inline GradCheckResult finite_difference_check(std::vector<TensorD>& params,
                                               const std::function<TensorD()>& make_loss,
                                               double h = 1e-5, int coords_per_tensor = -1,
                                               std::uint64_t sample_seed = 1234) {
  for (auto& p : params) p.zero_grad();
  backward(make_loss());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  const auto eval = [&make_loss]() {
    NoGradGuard no_grad;
    return make_loss().item();
  };

  GradCheckResult result;
  Rng rng(sample_seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k].raw_value();
    std::vector<std::size_t> coords;
    if (coords_per_tensor <= 0 || static_cast<std::size_t>(coords_per_tensor) >= value.size()) {
      coords.resize(value.size());
      for (std::size_t i = 0; i < value.size(); ++i) coords[i] = i;
    } else {
      for (int c = 0; c < coords_per_tensor; ++c)
        coords.push_back(static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(value.size()) - 1)));
    }
    for (std::size_t i : coords) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = eval();
      value[i] = saved - h;
      const double down = eval();
      value[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ad = analytic[k][i];
      const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-3});
      result.max_rel_error = std::max(result.max_rel_error, rel);
      ++result.checked;
    }
  }
  return result;
}

// Values bounded away from zero so relu kinks stay clear of the probe step.
inline TensorD random_signed(Shape shape, Rng& rng, bool requires_grad = true) {
  std::vector<double> vals(static_cast<std::size_t>(shape_numel(shape)));
  for (double& v : vals) {
    const double mag = rng.uniform(0.1, 1.0);
    v = rng.bernoulli(0.5) ? mag : -mag;
  }
  return TensorD::from(std::move(shape), std::move(vals), requires_grad);
}

}  // namespace uigroup::testutil
