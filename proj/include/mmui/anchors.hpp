#pragma once

// Anchor shapes from k-means over generated box sizes, using 1 - IoU of
// origin-aligned boxes as the distance.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "mmui/detector.hpp"
#include "mmui/synth.hpp"

namespace mmui {

inline double shape_iou(double w1, double h1, double w2, double h2) {
  const double inter = std::min(w1, w2) * std::min(h1, h2);
  return inter / (w1 * h1 + w2 * h2 - inter);
}

/// k-means++ seeding then Lloyd iterations until assignments stop changing.
/// Centroids are per-cluster means; result sorted by area.
inline std::vector<Anchor> kmeans_anchors(const std::vector<Anchor>& boxes, std::size_t k, std::uint64_t seed,
                                          std::size_t max_iter = 300) {
  if (boxes.size() < k || k == 0) throw ConfigError("kmeans_anchors: need at least k boxes");
  Rng rng(seed);
  std::vector<Anchor> cent;
  cent.push_back(boxes[std::uniform_int_distribution<std::size_t>(0, boxes.size() - 1)(rng)]);
  std::vector<double> d(boxes.size());
  while (cent.size() < k) {
    double total = 0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : cent) best = std::min(best, 1.0 - shape_iou(boxes[i].w, boxes[i].h, c.w, c.h));
      d[i] = best * best;
      total += d[i];
    }
    double r = std::uniform_real_distribution<double>(0, total)(rng);
    std::size_t pick = boxes.size() - 1;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      r -= d[i];
      if (r <= 0) {
        pick = i;
        break;
      }
    }
    cent.push_back(boxes[pick]);
  }
  std::vector<std::size_t> assign(boxes.size(), k);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      std::size_t best = 0;
      double best_iou = -1;
      for (std::size_t j = 0; j < k; ++j) {
        const double v = shape_iou(boxes[i].w, boxes[i].h, cent[j].w, cent[j].h);
        if (v > best_iou) {
          best_iou = v;
          best = j;
        }
      }
      changed |= assign[i] != best;
      assign[i] = best;
    }
    if (!changed) break;
    std::vector<double> sw(k, 0), sh(k, 0), n(k, 0);
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      sw[assign[i]] += boxes[i].w;
      sh[assign[i]] += boxes[i].h;
      n[assign[i]] += 1;
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (n[j] > 0) cent[j] = {static_cast<float>(sw[j] / n[j]), static_cast<float>(sh[j] / n[j])};
    }
  }
  std::sort(cent.begin(), cent.end(), [](const Anchor& a, const Anchor& b) {
    return a.w * a.h < b.w * b.h || (a.w * a.h == b.w * b.h && a.w < b.w);
  });
  return cent;
}

/// Recomputes the frozen default anchors: 1,000 twin12 scenes at 256 px,
/// nine clusters rounded to whole pixels, three per stride in area order.
inline std::array<std::vector<Anchor>, 3> default_anchors_kmeans() {
  const auto catalog = twin12_catalog();
  Rng rng(derive_seed(0xA5C0ULL, std::string_view("anchors")));
  std::vector<Anchor> boxes;
  for (int i = 0; i < 1000; ++i) {
    for (const auto& c : sample_scene(catalog, 256, rng).controls) {
      boxes.push_back({static_cast<float>(c.box.w), static_cast<float>(c.box.h)});
    }
  }
  const auto cent = kmeans_anchors(boxes, 9, 1);
  std::array<std::vector<Anchor>, 3> out;
  for (std::size_t j = 0; j < 9; ++j) out[j / 3].push_back({std::round(cent[j].w), std::round(cent[j].h)});
  return out;
}

}  // namespace mmui
