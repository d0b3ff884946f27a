#pragma once

// YOLOv5-style building blocks: Conv (conv + per-channel affine + SiLU),
// Bottleneck, C3 and SPPF, plus the parameter registry they register into.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mmui/ops.hpp"
#include "mmui/rng.hpp"

namespace mmui {

/// Ordered, uniquely named set of trainable tensors.
template <class T>
class ParameterRegistry {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> t) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    t.set_requires_grad(true);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(t));
    return entries_.back().second;
  }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }
  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }

  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void zero_grad() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Creates parameters under a name prefix. Each tensor's initial values come
/// from its own stream seeded by (model seed, full name), so a parameter name
/// gets the same initial values in every model variant built from one seed.
template <class T>
class ParamFactory {
 public:
  ParamFactory(ParameterRegistry<T>& reg, std::uint64_t seed, std::string prefix = "")
      : reg_(reg), seed_(seed), prefix_(std::move(prefix)) {}

  ParamFactory sub(const std::string& name) const { return ParamFactory(reg_, seed_, join(name)); }

  /// Normal(0, gain/sqrt(fan_in)).
  Tensor<T> normal(const std::string& name, Shape shape, std::size_t fan_in, double gain) {
    const std::string full = join(name);
    Rng rng(derive_seed(seed_, full));
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
    return reg_.add(full, t);
  }

  Tensor<T> constant(const std::string& name, Shape shape, T value) {
    return reg_.add(join(name), Tensor<T>(std::move(shape), value));
  }

  Tensor<T> tensor(const std::string& name, Tensor<T> t) { return reg_.add(join(name), std::move(t)); }

  std::uint64_t stream_seed(const std::string& name) const { return derive_seed(seed_, join(name)); }

 private:
  std::string join(const std::string& name) const { return prefix_.empty() ? name : prefix_ + "." + name; }

  ParameterRegistry<T>& reg_;
  std::uint64_t seed_;
  std::string prefix_;
};

/// Conv(k, stride, pad=k/2) -> per-channel affine -> SiLU.
template <class T>
struct ConvBlock {
  Tensor<T> w, b, scale, shift;
  std::size_t stride = 1;

  ConvBlock() = default;
  ConvBlock(ParamFactory<T> f, std::size_t cin, std::size_t cout, std::size_t k, std::size_t s) : stride(s) {
    if (k % 2 == 0) throw ConfigError("ConvBlock: kernel must be odd");
    w = f.normal("w", {cout, cin, k, k}, cin * k * k, std::sqrt(2.0));
    b = f.constant("b", {cout}, T{0});
    scale = f.constant("scale", {cout}, T{1});
    shift = f.constant("shift", {cout}, T{0});
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return silu(affine_channels(conv2d(x, w, b, stride, w.dim(2) / 2), scale, shift));
  }
};

template <class T>
struct Bottleneck {
  ConvBlock<T> cv1, cv2;
  bool shortcut = false;

  Bottleneck() = default;
  Bottleneck(ParamFactory<T> f, std::size_t cin, std::size_t cout, bool use_shortcut)
      : cv1(f.sub("cv1"), cin, cout, 1, 1), cv2(f.sub("cv2"), cout, cout, 3, 1), shortcut(use_shortcut && cin == cout) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = cv2(cv1(x));
    return shortcut ? add(x, y) : y;
  }
};

/// Cross-stage partial block: cv1 -> n bottlenecks, cv2 bypass, cv3 merges the concat.
template <class T>
struct C3Block {
  ConvBlock<T> cv1, cv2, cv3;
  std::vector<Bottleneck<T>> m;

  C3Block() = default;
  C3Block(ParamFactory<T> f, std::size_t cin, std::size_t cout, std::size_t n, bool shortcut) {
    const std::size_t hidden = hidden_channels(cout);
    cv1 = ConvBlock<T>(f.sub("cv1"), cin, hidden, 1, 1);
    cv2 = ConvBlock<T>(f.sub("cv2"), cin, hidden, 1, 1);
    cv3 = ConvBlock<T>(f.sub("cv3"), 2 * hidden, cout, 1, 1);
    for (std::size_t i = 0; i < n; ++i) m.emplace_back(f.sub("m." + std::to_string(i)), hidden, hidden, shortcut);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto a = cv1(x);
    for (const auto& b : m) a = b(a);
    return cv3(concat_channels(a, cv2(x)));
  }

  static std::size_t hidden_channels(std::size_t cout) { return std::max<std::size_t>(1, cout / 2); }

};

/// Fast spatial pyramid pooling: three chained 5×5 max-pools (stride 1, pad 2).
template <class T>
struct SPPFBlock {
  ConvBlock<T> cv1, cv2;

  SPPFBlock() = default;
  SPPFBlock(ParamFactory<T> f, std::size_t cin, std::size_t cout)
      : cv1(f.sub("cv1"), cin, cin / 2, 1, 1), cv2(f.sub("cv2"), (cin / 2) * 4, cout, 1, 1) {}

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto a = cv1(x);
    auto y1 = maxpool2d(a, 5, 1, 2);
    auto y2 = maxpool2d(y1, 5, 1, 2);
    auto y3 = maxpool2d(y2, 5, 1, 2);
    return cv2(concat_channels<T>({a, y1, y2, y3}));
  }
};

}  // namespace mmui
