#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mmui/blocks.hpp"

namespace mmui {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept in double and indexed by
/// registry position, so the registry must not change between steps.
template <class T>
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

  const AdamOptions& options() const { return opt_; }
  void set_lr(double lr) { opt_.lr = lr; }
  std::size_t steps() const { return t_; }

  /// Applies one update from the accumulated gradients. A non-finite gradient aborts
  /// before any parameter changes.
  void step(ParameterRegistry<T>& reg) {
    auto& entries = reg.entries();
    if (m_.empty()) {
      for (auto& [_, p] : entries) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
      }
    }
    if (m_.size() != entries.size()) throw ContractError("Adam: parameter set changed between steps");
    for (auto& [name, p] : entries) {
      for (T g : p.grad()) {
        if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in parameter '" + name + "'");
      }
    }
    ++t_;
    const double bc1 = 1 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < entries.size(); ++k) {
      auto& p = entries[k].second;
      auto data = p.data();
      const auto grad = p.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = opt_.beta1 * m[i] + (1 - opt_.beta1) * g;
        v[i] = opt_.beta2 * v[i] + (1 - opt_.beta2) * g * g;
        const double mh = m[i] / bc1, vh = v[i] / bc2;
        data[i] = static_cast<T>(static_cast<double>(data[i]) - opt_.lr * mh / (std::sqrt(vh) + opt_.eps));
      }
    }
  }

 private:
  AdamOptions opt_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace mmui
