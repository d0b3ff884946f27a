#pragma once

// Desk-scale YOLOv5-style detector: CSP backbone with SPPF, PANet neck with
// four C3 blocks, and one 1×1 head conv per stride {8, 16, 32}. Optional
// cross-attention fusion modules sit at the insertion points selected by
// xattn_count.
//
// Parameter naming (stable, used by checkpoints):
//   backbone.stem.*, backbone.s{1..4}.conv.*, backbone.s{1..4}.c3.*, backbone.sppf.*
//   neck.lat5.*, neck.c3_1.*, neck.lat4.*, neck.c3_2.*, neck.down3.*, neck.c3_3.*,
//   neck.down4.*, neck.c3_4.*
//   head.p3.{w,b}, head.p4.{w,b}, head.p5.{w,b}
//   xattn.<i>.{wq,wk,wv,alpha,beta,fuse_w,fuse_b}
// ConvBlock members are {w,b,scale,shift}; C3 members cv1/cv2/cv3 and m.<j>.cv{1,2}.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmui/blocks.hpp"
#include "mmui/fusion.hpp"

namespace mmui {

struct Anchor {
  float w = 0;
  float h = 0;
  bool operator==(const Anchor&) const = default;
};

/// Insertion points in the order xattn_count takes them as a prefix.
enum class InsertionPoint { NeckC3_1, NeckC3_2, NeckC3_3, BackboneC3_4, BackboneC3_3 };
inline constexpr std::array<InsertionPoint, 5> kInsertionOrder = {
    InsertionPoint::NeckC3_1, InsertionPoint::NeckC3_2, InsertionPoint::NeckC3_3, InsertionPoint::BackboneC3_4,
    InsertionPoint::BackboneC3_3};

inline constexpr std::array<std::size_t, 3> kStrides = {8, 16, 32};

/// Nine anchors (w, h in pixels at 256×256) from k-means over 1,000 generated
/// scenes, sorted by area; three per stride. Reproduced by default_anchors_kmeans()
/// in anchors.hpp.
inline std::array<std::vector<Anchor>, 3> default_anchors() {
  return {std::vector<Anchor>{{13.0f, 13.0f}, {16.0f, 16.0f}, {22.0f, 22.0f}},
          std::vector<Anchor>{{54.0f, 22.0f}, {111.0f, 11.0f}, {11.0f, 121.0f}},
          std::vector<Anchor>{{86.0f, 18.0f}, {84.0f, 25.0f}, {54.0f, 61.0f}}};
}

struct DetectorConfig {
  std::size_t input_size = 256;
  std::vector<std::size_t> channels = {16, 32, 64, 128};
  std::size_t c3_depth = 1;
  std::size_t num_classes = 12;
  std::array<std::vector<Anchor>, 3> anchors = default_anchors();
  FusionStrategy fusion = FusionStrategy::None;
  std::size_t xattn_count = 0;
  std::size_t text_dim = 64;
  std::uint64_t seed = 0;
  bool scale_scores = true;

  std::size_t anchors_per_scale() const { return anchors[0].size(); }
  std::size_t outputs_per_anchor() const { return 5 + num_classes; }

  void validate() const {
    if (input_size == 0 || input_size % 32 != 0) {
      throw ConfigError("input_size must be a positive multiple of 32, got " + std::to_string(input_size));
    }
    if (channels.size() != 4) throw ConfigError("channel schedule must have 4 entries");
    for (auto c : channels) {
      if (c < 2 || c % 2 != 0) throw ConfigError("channel counts must be even and >= 2");
    }
    if (c3_depth == 0) throw ConfigError("c3_depth must be >= 1");
    if (num_classes == 0) throw ConfigError("num_classes must be >= 1");
    if (text_dim == 0) throw ConfigError("text_dim must be >= 1");
    for (const auto& a : anchors) {
      if (a.empty() || a.size() != anchors[0].size()) throw ConfigError("every scale needs the same number of anchors");
      for (const auto& an : a) {
        if (!(an.w > 0 && an.h > 0)) throw ConfigError("anchor sizes must be positive");
      }
    }
    if (xattn_count != 0 && xattn_count != 3 && xattn_count != 4 && xattn_count != 5) {
      throw ConfigError("xattn_count must be one of 0, 3, 4, 5");
    }
    if ((xattn_count == 0) != (fusion == FusionStrategy::None)) {
      throw ConfigError("xattn_count must be 0 exactly when fusion is none");
    }
  }
};

inline std::size_t insertion_channels(const DetectorConfig& cfg, InsertionPoint p) {
  const auto& c = cfg.channels;
  switch (p) {
    case InsertionPoint::NeckC3_1: return c[2];
    case InsertionPoint::NeckC3_2: return c[1];
    case InsertionPoint::NeckC3_3: return c[2];
    case InsertionPoint::BackboneC3_4: return c[3];
    case InsertionPoint::BackboneC3_3: return c[2];
  }
  return 0;
}

template <class T>
struct HeadOutputs {
  std::array<Tensor<T>, 3> maps;  // [A·(5+C), S, S] for strides 8, 16, 32
};

struct ParameterCounts {
  std::size_t backbone = 0;
  std::size_t neck = 0;
  std::size_t head = 0;
  std::size_t fusion = 0;
  std::size_t total = 0;
};

template <class T>
class DetectorModel {
 public:
  explicit DetectorModel(DetectorConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build();
  }
  DetectorModel(const DetectorModel&) = delete;
  DetectorModel& operator=(const DetectorModel&) = delete;
  DetectorModel(DetectorModel&&) = default;
  DetectorModel& operator=(DetectorModel&&) = default;

  const DetectorConfig& config() const { return cfg_; }
  ParameterRegistry<T>& params() { return reg_; }
  const ParameterRegistry<T>& params() const { return reg_; }
  bool has_fusion() const { return !fusion_.empty(); }
  std::size_t fusion_count() const { return fusion_.size(); }
  FusionModule<T>& fusion_module(std::size_t i) { return fusion_.at(i); }

  /// Set once shared weights have been copied from a trained baseline; fine-tuning requires it.
  bool baseline_initialized() const { return baseline_initialized_; }
  void set_baseline_initialized(bool v) { baseline_initialized_ = v; }

  /// Raw head maps for one image [3,H,W]. `text` is [T,D] and must be given
  /// exactly when the model has fusion modules. `attention`, when non-null,
  /// receives the attention state of each fusion module by insertion index.
  HeadOutputs<T> forward(const Tensor<T>& image, const std::optional<Tensor<T>>& text,
                         std::map<std::size_t, AttentionState<T>>* attention = nullptr) const {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != cfg_.input_size ||
        image.dim(2) != cfg_.input_size) {
      throw ShapeError("forward: expected image [3," + std::to_string(cfg_.input_size) + "," +
                       std::to_string(cfg_.input_size) + "], got " + shape_str(image.shape()));
    }
    if (has_fusion() && !text) throw UsageError("forward: fusion model requires text embeddings");
    if (!has_fusion() && text) throw UsageError("forward: baseline model does not accept text embeddings");
    if (text && (text->rank() != 2 || text->dim(1) != cfg_.text_dim)) {
      throw ShapeError("forward: text must be [T," + std::to_string(cfg_.text_dim) + "], got " +
                       shape_str(text->shape()));
    }

    auto fuse = [&](InsertionPoint p, Tensor<T> x) {
      for (std::size_t i = 0; i < fusion_.size(); ++i) {
        if (kInsertionOrder[i] != p) continue;
        AttentionState<T> st;
        x = fusion_forward(x, *text, fusion_[i], attention ? &st : nullptr);
        if (attention) (*attention)[i] = st;
      }
      return x;
    };

    auto x = stem_(image);
    x = s1_c3_(s1_conv_(x));
    const auto p3b = s2_c3_(s2_conv_(x));
    const auto p4b = fuse(InsertionPoint::BackboneC3_3, s3_c3_(s3_conv_(p3b)));
    const auto p5b = fuse(InsertionPoint::BackboneC3_4, s4_c3_(s4_conv_(p4b)));
    const auto top = sppf_(p5b);

    const auto l5 = lat5_(top);
    const auto n1 = fuse(InsertionPoint::NeckC3_1, c3_1_(concat_channels(upsample_nearest2x(l5), p4b)));
    const auto l4 = lat4_(n1);
    const auto p3 = fuse(InsertionPoint::NeckC3_2, c3_2_(concat_channels(upsample_nearest2x(l4), p3b)));
    const auto p4 = fuse(InsertionPoint::NeckC3_3, c3_3_(concat_channels(down3_(p3), l4)));
    const auto p5 = c3_4_(concat_channels(down4_(p4), l5));

    HeadOutputs<T> out;
    const std::array<const Tensor<T>*, 3> feats = {&p3, &p4, &p5};
    for (std::size_t s = 0; s < 3; ++s) out.maps[s] = conv2d(*feats[s], head_w_[s], head_b_[s], 1, 0);
    return out;
  }

  ParameterCounts count_parameters() const {
    ParameterCounts c;
    for (const auto& [name, t] : reg_.entries()) {
      const std::size_t n = t.numel();
      if (name.rfind("backbone.", 0) == 0) c.backbone += n;
      else if (name.rfind("neck.", 0) == 0) c.neck += n;
      else if (name.rfind("head.", 0) == 0) c.head += n;
      else c.fusion += n;
      c.total += n;
    }
    return c;
  }

 private:
  void build() {
    const auto& ch = cfg_.channels;
    const std::size_t n = cfg_.c3_depth;
    ParamFactory<T> root(reg_, cfg_.seed);
    auto bb = root.sub("backbone");
    stem_ = ConvBlock<T>(bb.sub("stem"), 3, ch[0] / 2, 3, 2);
    s1_conv_ = ConvBlock<T>(bb.sub("s1.conv"), ch[0] / 2, ch[0], 3, 2);
    s1_c3_ = C3Block<T>(bb.sub("s1.c3"), ch[0], ch[0], n, true);
    s2_conv_ = ConvBlock<T>(bb.sub("s2.conv"), ch[0], ch[1], 3, 2);
    s2_c3_ = C3Block<T>(bb.sub("s2.c3"), ch[1], ch[1], n, true);
    s3_conv_ = ConvBlock<T>(bb.sub("s3.conv"), ch[1], ch[2], 3, 2);
    s3_c3_ = C3Block<T>(bb.sub("s3.c3"), ch[2], ch[2], n, true);
    s4_conv_ = ConvBlock<T>(bb.sub("s4.conv"), ch[2], ch[3], 3, 2);
    s4_c3_ = C3Block<T>(bb.sub("s4.c3"), ch[3], ch[3], n, true);
    sppf_ = SPPFBlock<T>(bb.sub("sppf"), ch[3], ch[3]);

    auto nk = root.sub("neck");
    lat5_ = ConvBlock<T>(nk.sub("lat5"), ch[3], ch[2], 1, 1);
    c3_1_ = C3Block<T>(nk.sub("c3_1"), 2 * ch[2], ch[2], n, false);
    lat4_ = ConvBlock<T>(nk.sub("lat4"), ch[2], ch[1], 1, 1);
    c3_2_ = C3Block<T>(nk.sub("c3_2"), 2 * ch[1], ch[1], n, false);
    down3_ = ConvBlock<T>(nk.sub("down3"), ch[1], ch[1], 3, 2);
    c3_3_ = C3Block<T>(nk.sub("c3_3"), 2 * ch[1], ch[2], n, false);
    down4_ = ConvBlock<T>(nk.sub("down4"), ch[2], ch[2], 3, 2);
    c3_4_ = C3Block<T>(nk.sub("c3_4"), 2 * ch[2], ch[3], n, false);

    auto hd = root.sub("head");
    const std::array<std::size_t, 3> head_in = {ch[1], ch[2], ch[3]};
    const std::size_t a = cfg_.anchors_per_scale(), per = cfg_.outputs_per_anchor();
    for (std::size_t s = 0; s < 3; ++s) {
      auto f = hd.sub("p" + std::to_string(s + 3));
      head_w_[s] = f.normal("w", {a * per, head_in[s], 1, 1}, head_in[s], 0.1);
      // Priors: ~8 objects per 256² image, ~0.6 class mass spread over the classes.
      Tensor<T> bias({a * per});
      const double cells = std::pow(static_cast<double>(cfg_.input_size / kStrides[s]), 2.0);
      for (std::size_t k = 0; k < a; ++k) {
        bias[k * per + 4] = static_cast<T>(std::log(8.0 / cells));
        for (std::size_t c = 0; c < cfg_.num_classes; ++c) {
          bias[k * per + 5 + c] = static_cast<T>(std::log(0.6 / (static_cast<double>(cfg_.num_classes) - 0.99)));
        }
      }
      head_b_[s] = f.tensor("b", bias);
    }

    for (std::size_t i = 0; i < cfg_.xattn_count; ++i) {
      fusion_.push_back(make_fusion(root.sub("xattn." + std::to_string(i)), insertion_channels(cfg_, kInsertionOrder[i])));
    }
  }

  FusionModule<T> make_fusion(ParamFactory<T> f, std::size_t c) {
    FusionModule<T> m;
    m.strategy = cfg_.fusion;
    m.scale_scores = cfg_.scale_scores;
    const std::size_t d = c, dt = cfg_.text_dim;
    m.attn.wq = f.normal("wq", {c, d}, c, 1.0);
    m.attn.wk = f.normal("wk", {dt, d}, dt, 1.0);
    m.attn.wv = f.normal("wv", {dt, c}, dt, 1.0);
    if (m.strategy == FusionStrategy::WeightedSum) {
      m.alpha = f.constant("alpha", {1}, T{1});
      m.beta = f.constant("beta", {1}, T{1});
    } else if (m.strategy == FusionStrategy::ConvFusion) {
      // Passthrough [0 | I] plus small noise.
      Rng rng(f.stream_seed("fuse_w"));
      std::normal_distribution<double> noise(0.0, 1e-3);
      Tensor<T> w({c, 2 * c, 1, 1});
      for (std::size_t o = 0; o < c; ++o) {
        for (std::size_t i = 0; i < 2 * c; ++i) {
          w[o * 2 * c + i] = static_cast<T>((i == c + o ? 1.0 : 0.0) + noise(rng));
        }
      }
      m.fuse_w = f.tensor("fuse_w", w);
      m.fuse_b = f.constant("fuse_b", {c}, T{0});
    }
    return m;
  }

  DetectorConfig cfg_;
  ParameterRegistry<T> reg_;
  ConvBlock<T> stem_, s1_conv_, s2_conv_, s3_conv_, s4_conv_;
  C3Block<T> s1_c3_, s2_c3_, s3_c3_, s4_c3_;
  SPPFBlock<T> sppf_;
  ConvBlock<T> lat5_, lat4_, down3_, down4_;
  C3Block<T> c3_1_, c3_2_, c3_3_, c3_4_;
  std::array<Tensor<T>, 3> head_w_, head_b_;
  std::vector<FusionModule<T>> fusion_;
  bool baseline_initialized_ = false;
};

template <class T>
DetectorModel<T> build_model(const DetectorConfig& cfg) {
  return DetectorModel<T>(cfg);
}

struct TransferReport {
  std::vector<std::string> copied;       // names present in both, values taken from the source
  std::vector<std::string> initialized;  // names only in the destination, left at their init values
  std::vector<std::string> ignored;      // names only in the source
};

/// Copies every same-named, same-shaped parameter from `src` into `dst`.
template <class T>
TransferReport transfer_parameters(const ParameterRegistry<T>& src, ParameterRegistry<T>& dst) {
  TransferReport r;
  for (auto& [name, t] : dst.entries()) {
    const auto* s = src.find(name);
    if (!s) {
      r.initialized.push_back(name);
      continue;
    }
    if (s->shape() != t.shape()) {
      throw ShapeError("parameter '" + name + "' is " + shape_str(s->shape()) + " in the source but " +
                       shape_str(t.shape()) + " in the model");
    }
    std::copy(s->data().begin(), s->data().end(), t.data().begin());
    r.copied.push_back(name);
  }
  for (const auto& [name, _] : src.entries()) {
    if (!dst.find(name)) r.ignored.push_back(name);
  }
  return r;
}

/// Independent model with the same configuration and parameter values.
template <class T>
DetectorModel<T> clone_model(const DetectorModel<T>& m) {
  auto c = build_model<T>(m.config());
  transfer_parameters(m.params(), c.params());
  c.set_baseline_initialized(m.baseline_initialized());
  return c;
}

}  // namespace mmui
