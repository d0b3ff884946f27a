#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mmui/ops.hpp"

namespace mmui {

/// Central-difference check of an op built from differentiable kernels.
///
/// `op` maps a vector of 64-bit input tensors to any output tensor. The output
/// is reduced to a scalar with a fixed random projection so every output
/// element contributes. Inputs are drawn uniformly from [-1, 1] with `seed`.
/// Returns max_i |analytic_i - numeric_i| / max(|analytic_i|, |numeric_i|, 1e-4)
/// over every element of every input.
template <class Op>
double grad_check(Op&& op, const std::vector<Shape>& input_sizes, std::uint64_t seed, double step = 1e-5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<Tensor<double>> inputs;
  for (const auto& s : input_sizes) {
    Tensor<double> t(s);
    for (auto& v : t.data()) v = uni(rng);
    t.set_requires_grad(true);
    inputs.push_back(t);
  }

  std::vector<double> proj;
  auto project = [&](const Tensor<double>& out) {
    if (proj.empty()) {
      std::uniform_real_distribution<double> pw(0.5, 1.5);
      proj.resize(out.numel());
      for (auto& p : proj) p = pw(rng);
    }
    return Tensor<double>(out.shape(), proj);
  };

  {
    auto out = op(inputs);
    auto loss = sum(mul(out, project(out)));
    backward(loss);
  }

  double worst = 0.0;
  for (auto& in : inputs) {
    const std::vector<double> analytic(in.grad().begin(), in.grad().end());
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const double saved = in[i];
      in[i] = saved + step;
      double up = 0.0;
      {
        auto out = op(inputs);
        auto p = project(out);
        for (std::size_t j = 0; j < out.numel(); ++j) up += out[j] * p[j];
      }
      in[i] = saved - step;
      double down = 0.0;
      {
        auto out = op(inputs);
        auto p = project(out);
        for (std::size_t j = 0; j < out.numel(); ++j) down += out[j] * p[j];
      }
      in[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace mmui
