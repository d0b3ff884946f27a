#pragma once

// Box geometry, target assignment, the composite detection loss and decoding
// of head maps into detections with per-class NMS.
//
// Head layout per scale: channel k·(5+C)+j at anchor k, where j = 0..3 are the
// box logits (tx, ty, tw, th), 4 is objectness and 5.. are class logits.
// Decoding: x = (2σ(tx) − 0.5 + gx)·stride, w = 4σ(tw)²·anchor_w (same for y, h).

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <tuple>
#include <vector>

#include "mmui/detector.hpp"
#include "mmui/synth.hpp"

namespace mmui {

/// Axis-aligned box, corners in pixels.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool operator==(const Box&) const = default;
};

inline Box box_from_center(double cx, double cy, double w, double h) {
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

inline double iou(const Box& a, const Box& b) {
  if (!(a.x2 > a.x1 && a.y2 > a.y1 && b.x2 > b.x1 && b.y2 > b.y1)) throw ContractError("iou: degenerate box");
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

struct GroundTruth {
  Box box;
  std::size_t class_id = 0;
};

inline std::vector<GroundTruth> ground_truth(const std::vector<Annotation>& anns, double image_size) {
  std::vector<GroundTruth> out;
  for (const auto& a : anns) {
    out.push_back({box_from_center(a.cx * image_size, a.cy * image_size, a.w * image_size, a.h * image_size),
                   a.class_id});
  }
  return out;
}

struct Detection {
  Box box;
  std::size_t class_id = 0;
  double confidence = 0;
};

// ---- targets ----

struct Positive {
  std::size_t scale = 0, anchor = 0, gy = 0, gx = 0;
  std::size_t class_id = 0;
  std::size_t gt_index = 0;
  double anchor_iou = 0;
  double cx = 0, cy = 0, w = 0, h = 0;  // target box, pixels
  bool class_known = true;              // false: box and objectness only, every class target 0
};

struct Targets {
  std::vector<Positive> positives;
  std::size_t unassigned_gt = 0;  // no anchor above the threshold at any scale
  std::size_t displaced_gt = 0;   // lost every slot to a better-matching GT
};

inline constexpr double kAnchorIouThreshold = 0.2;

/// Single-cell assignment: at each scale, the GT's centre cell and the anchor with the
/// best shape IoU (lowest index on ties) when that IoU exceeds 0.2. A slot claimed twice
/// keeps the higher IoU, then the lower GT index.
inline Targets assign_targets(const std::vector<GroundTruth>& gts, const std::array<std::vector<Anchor>, 3>& anchors,
                              std::size_t input_size) {
  Targets t;
  std::vector<std::size_t> slots_won(gts.size(), 0), slots_tried(gts.size(), 0);
  for (std::size_t g = 0; g < gts.size(); ++g) {
    const auto& b = gts[g].box;
    const double w = b.width(), h = b.height(), cx = (b.x1 + b.x2) / 2, cy = (b.y1 + b.y2) / 2;
    for (std::size_t s = 0; s < 3; ++s) {
      const double stride = static_cast<double>(kStrides[s]);
      const std::size_t grid = input_size / kStrides[s];
      std::size_t best = 0;
      double best_iou = -1;
      for (std::size_t k = 0; k < anchors[s].size(); ++k) {
        const double inter = std::min(w, static_cast<double>(anchors[s][k].w)) *
                             std::min(h, static_cast<double>(anchors[s][k].h));
        const double v = inter / (w * h + static_cast<double>(anchors[s][k].w) * anchors[s][k].h - inter);
        if (v > best_iou) {
          best_iou = v;
          best = k;
        }
      }
      if (best_iou <= kAnchorIouThreshold) continue;
      ++slots_tried[g];
      Positive p;
      p.scale = s;
      p.anchor = best;
      p.gx = std::min(grid - 1, static_cast<std::size_t>(std::max(0.0, std::floor(cx / stride))));
      p.gy = std::min(grid - 1, static_cast<std::size_t>(std::max(0.0, std::floor(cy / stride))));
      p.class_id = gts[g].class_id;
      p.gt_index = g;
      p.anchor_iou = best_iou;
      p.cx = cx;
      p.cy = cy;
      p.w = w;
      p.h = h;
      auto clash = std::find_if(t.positives.begin(), t.positives.end(), [&](const Positive& q) {
        return q.scale == p.scale && q.anchor == p.anchor && q.gy == p.gy && q.gx == p.gx;
      });
      if (clash == t.positives.end()) {
        t.positives.push_back(p);
        ++slots_won[g];
      } else if (p.anchor_iou > clash->anchor_iou) {
        --slots_won[clash->gt_index];
        *clash = p;
        ++slots_won[g];
      }
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (slots_tried[g] == 0) ++t.unassigned_gt;
    else if (slots_won[g] == 0) ++t.displaced_gt;
  }
  return t;
}

// ---- loss ----

struct LossWeights {
  double box = 0.05;
  double obj = 1.0;
  double cls = 0.5;
};

struct LossComponents {
  double box = 0, obj = 0, cls = 0, total = 0;
};

namespace detail {

/// Forward-mode dual number with N tangent directions.
template <std::size_t N>
struct Dual {
  double v = 0;
  std::array<double, N> d{};

  static Dual constant(double x) { return {x, {}}; }
  static Dual variable(double x, std::size_t i) {
    Dual r{x, {}};
    r.d[i] = 1;
    return r;
  }
  friend Dual operator+(Dual a, const Dual& b) {
    a.v += b.v;
    for (std::size_t i = 0; i < N; ++i) a.d[i] += b.d[i];
    return a;
  }
  friend Dual operator-(Dual a, const Dual& b) {
    a.v -= b.v;
    for (std::size_t i = 0; i < N; ++i) a.d[i] -= b.d[i];
    return a;
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    Dual r{a.v * b.v, {}};
    for (std::size_t i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    Dual r{a.v / b.v, {}};
    for (std::size_t i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) / (b.v * b.v);
    return r;
  }
  friend Dual operator+(Dual a, double b) { return a + constant(b); }
  friend Dual operator-(Dual a, double b) { return a - constant(b); }
  friend Dual operator*(Dual a, double b) { return a * constant(b); }
};

template <std::size_t N>
Dual<N> dmin(const Dual<N>& a, const Dual<N>& b) { return a.v <= b.v ? a : b; }
template <std::size_t N>
Dual<N> dmax(const Dual<N>& a, const Dual<N>& b) { return a.v >= b.v ? a : b; }

template <std::size_t N>
Dual<N> dsigmoid(const Dual<N>& x) {
  const double s = stable_sigmoid(x.v);
  Dual<N> r{s, {}};
  for (std::size_t i = 0; i < N; ++i) r.d[i] = x.d[i] * s * (1 - s);
  return r;
}

template <std::size_t N>
Dual<N> datan(const Dual<N>& x) {
  Dual<N> r{std::atan(x.v), {}};
  for (std::size_t i = 0; i < N; ++i) r.d[i] = x.d[i] / (1 + x.v * x.v);
  return r;
}

inline double bce_logit(double z, double t) { return std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z))); }

}  // namespace detail

/// Complete IoU of two centre-format boxes: IoU − ρ²/c² − α·v.
template <class V>
V ciou(const V& px, const V& py, const V& pw, const V& ph, double gx, double gy, double gw, double gh) {
  using detail::dmax;
  using detail::dmin;
  const double eps = 1e-9;
  const V px1 = px - pw * 0.5, px2 = px + pw * 0.5, py1 = py - ph * 0.5, py2 = py + ph * 0.5;
  const V gx1 = V::constant(gx - gw / 2), gx2 = V::constant(gx + gw / 2);
  const V gy1 = V::constant(gy - gh / 2), gy2 = V::constant(gy + gh / 2);
  const V zero = V::constant(0);
  const V iw = dmax(dmin(px2, gx2) - dmax(px1, gx1), zero);
  const V ih = dmax(dmin(py2, gy2) - dmax(py1, gy1), zero);
  const V inter = iw * ih;
  const V uni = pw * ph + V::constant(gw * gh) - inter + eps;
  const V io = inter / uni;
  const V cw = dmax(px2, gx2) - dmin(px1, gx1);
  const V ch = dmax(py2, gy2) - dmin(py1, gy1);
  const V c2 = cw * cw + ch * ch + eps;
  const V dx = px - gx, dy = py - gy;
  const V rho2 = dx * dx + dy * dy;
  const V dv = V::constant(std::atan(gw / gh)) - detail::datan(pw / ph);
  const V v = dv * dv * (4.0 / (std::numbers::pi * std::numbers::pi));
  const V alpha = v / (v - io + (1.0 + eps));
  return io - rho2 / c2 - alpha * v;
}

struct HeadGeometry {
  std::size_t input_size = 256;
  std::size_t num_classes = 12;
  std::array<std::vector<Anchor>, 3> anchors;

  static HeadGeometry of(const DetectorConfig& c) { return {c.input_size, c.num_classes, c.anchors}; }
  std::size_t grid(std::size_t s) const { return input_size / kStrides[s]; }
  std::size_t per_anchor() const { return 5 + num_classes; }
  std::size_t anchor_count() const { return anchors[0].size(); }
};

/// λ_box·mean(1 − CIoU) over positives + λ_obj·mean BCE(objectness) over every anchor
/// slot + λ_cls·mean BCE(class logits) over positives and classes. One fused op with a
/// hand-written backward; the box term is differentiated with dual numbers.
template <class T>
Tensor<T> detection_loss(const HeadOutputs<T>& out, const Targets& targets, const HeadGeometry& geo,
                         const LossWeights& w, LossComponents* components = nullptr) {
  const std::size_t A = geo.anchor_count(), per = geo.per_anchor(), C = geo.num_classes;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t g = geo.grid(s);
    if (out.maps[s].shape() != Shape{A * per, g, g}) {
      throw ShapeError("detection_loss: scale " + std::to_string(s) + " map " + shape_str(out.maps[s].shape()));
    }
  }
  std::size_t slots = 0;
  for (std::size_t s = 0; s < 3; ++s) slots += A * geo.grid(s) * geo.grid(s);
  const std::size_t npos = targets.positives.size();

  // Gradients w.r.t. every map element, filled alongside the forward value.
  std::array<std::vector<double>, 3> grads;
  for (std::size_t s = 0; s < 3; ++s) grads[s].assign(out.maps[s].numel(), 0.0);

  std::array<std::vector<char>, 3> positive_slot;
  for (std::size_t s = 0; s < 3; ++s) positive_slot[s].assign(A * geo.grid(s) * geo.grid(s), 0);
  for (const auto& p : targets.positives) {
    const std::size_t g = geo.grid(p.scale);
    positive_slot[p.scale][(p.anchor * g + p.gy) * g + p.gx] = 1;
  }

  LossComponents lc;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t g = geo.grid(s), hw = g * g;
    const auto& m = out.maps[s];
    for (std::size_t k = 0; k < A; ++k) {
      for (std::size_t cell = 0; cell < hw; ++cell) {
        const std::size_t idx = (k * per + 4) * hw + cell;
        const double z = static_cast<double>(m[idx]);
        const double t = positive_slot[s][k * hw + cell];
        lc.obj += detail::bce_logit(z, t);
        grads[s][idx] += w.obj * (detail::stable_sigmoid(z) - t) / static_cast<double>(slots);
      }
    }
  }
  lc.obj *= w.obj / static_cast<double>(slots);

  using D4 = detail::Dual<4>;
  for (const auto& p : targets.positives) {
    const std::size_t g = geo.grid(p.scale), hw = g * g, cell = p.gy * g + p.gx;
    const auto& m = out.maps[p.scale];
    const double stride = static_cast<double>(kStrides[p.scale]);
    const auto& an = geo.anchors[p.scale][p.anchor];
    auto at = [&](std::size_t j) { return (p.anchor * per + j) * hw + cell; };

    std::array<D4, 4> v;
    for (std::size_t j = 0; j < 4; ++j) v[j] = D4::variable(static_cast<double>(m[at(j)]), j);
    const D4 sx = detail::dsigmoid(v[0]), sy = detail::dsigmoid(v[1]);
    const D4 sw = detail::dsigmoid(v[2]), sh = detail::dsigmoid(v[3]);
    const D4 px = (sx * 2.0 - 0.5 + static_cast<double>(p.gx)) * stride;
    const D4 py = (sy * 2.0 - 0.5 + static_cast<double>(p.gy)) * stride;
    const D4 pw = sw * sw * (4.0 * an.w);
    const D4 ph = sh * sh * (4.0 * an.h);
    const D4 c = ciou(px, py, pw, ph, p.cx, p.cy, p.w, p.h);
    lc.box += 1.0 - c.v;
    for (std::size_t j = 0; j < 4; ++j) grads[p.scale][at(j)] -= w.box * c.d[j] / static_cast<double>(npos);

    for (std::size_t cls = 0; cls < C; ++cls) {
      const double z = static_cast<double>(m[at(5 + cls)]);
      const double t = (cls == p.class_id && p.class_known) ? 1.0 : 0.0;
      lc.cls += detail::bce_logit(z, t);
      grads[p.scale][at(5 + cls)] += w.cls * (detail::stable_sigmoid(z) - t) / static_cast<double>(npos * C);
    }
  }
  if (npos > 0) {
    lc.box *= w.box / static_cast<double>(npos);
    lc.cls *= w.cls / static_cast<double>(npos * C);
  }
  lc.total = lc.box + lc.obj + lc.cls;
  if (components) *components = lc;

  auto result = make_result<T>({1}, {out.maps[0], out.maps[1], out.maps[2]});
  result[0] = static_cast<T>(lc.total);
  if (result.requires_grad()) {
    result.node()->backward_fn = [grads = std::move(grads)](TensorNode<T>& self) {
      const double up = static_cast<double>(self.grad[0]);
      for (std::size_t s = 0; s < 3; ++s) {
        auto& p = *self.parents[s];
        if (!p.requires_grad) continue;
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += static_cast<T>(up * grads[s][i]);
      }
    };
  }
  return result;
}

// ---- decoding and NMS ----

/// Same-class boxes overlapping a kept box by more than `iou_threshold` are dropped.
/// Processing order: confidence descending, then class, then corners ascending.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold = 0.45) {
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return std::tie(b.confidence, a.class_id, a.box.x1, a.box.y1, a.box.x2, a.box.y2) <
           std::tie(a.confidence, b.class_id, b.box.x1, b.box.y1, b.box.x2, b.box.y2);
  });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

struct DecodeOptions {
  double conf_threshold = 0.001;
  double nms_iou = 0.45;
  std::size_t max_detections = 300;
  std::size_t max_candidates = 3000;  // before NMS
};

/// One detection per anchor slot, labelled with its best class; confidence is
/// σ(objectness)·σ(best class logit). Boxes are clipped to the image.
template <class T>
std::vector<Detection> decode_detections(const HeadOutputs<T>& out, const HeadGeometry& geo,
                                         const DecodeOptions& opt = {}) {
  const std::size_t A = geo.anchor_count(), per = geo.per_anchor();
  const double size = static_cast<double>(geo.input_size);
  std::vector<Detection> cand;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t g = geo.grid(s), hw = g * g;
    const double stride = static_cast<double>(kStrides[s]);
    const auto& m = out.maps[s];
    for (std::size_t k = 0; k < A; ++k) {
      for (std::size_t cell = 0; cell < hw; ++cell) {
        auto at = [&](std::size_t j) { return static_cast<double>(m[(k * per + j) * hw + cell]); };
        const double obj = detail::stable_sigmoid(at(4));
        if (obj < opt.conf_threshold) continue;
        std::size_t best = 0;
        for (std::size_t c = 1; c < geo.num_classes; ++c) {
          if (at(5 + c) > at(5 + best)) best = c;
        }
        const double conf = obj * detail::stable_sigmoid(at(5 + best));
        if (conf < opt.conf_threshold) continue;
        const double gx = static_cast<double>(cell % g), gy = static_cast<double>(cell / g);
        const double sw = detail::stable_sigmoid(at(2)), sh = detail::stable_sigmoid(at(3));
        const double cx = (2 * detail::stable_sigmoid(at(0)) - 0.5 + gx) * stride;
        const double cy = (2 * detail::stable_sigmoid(at(1)) - 0.5 + gy) * stride;
        const double w = 4 * sw * sw * geo.anchors[s][k].w, h = 4 * sh * sh * geo.anchors[s][k].h;
        Box b = box_from_center(cx, cy, w, h);
        b.x1 = std::clamp(b.x1, 0.0, size);
        b.y1 = std::clamp(b.y1, 0.0, size);
        b.x2 = std::clamp(b.x2, 0.0, size);
        b.y2 = std::clamp(b.y2, 0.0, size);
        if (!(b.x2 > b.x1 && b.y2 > b.y1)) continue;
        cand.push_back({b, best, conf});
      }
    }
  }
  if (cand.size() > opt.max_candidates) {
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(opt.max_candidates), cand.end(),
                      [](const Detection& a, const Detection& b) {
                        return std::tie(b.confidence, a.class_id, a.box.x1, a.box.y1, a.box.x2, a.box.y2) <
                               std::tie(a.confidence, b.class_id, b.box.x1, b.box.y1, b.box.x2, b.box.y2);
                      });
    cand.resize(opt.max_candidates);
  }
  auto kept = nms(std::move(cand), opt.nms_iou);
  if (kept.size() > opt.max_detections) kept.resize(opt.max_detections);
  return kept;
}

}  // namespace mmui
