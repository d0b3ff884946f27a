#pragma once

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "mmui/metrics.hpp"

namespace mmui::testdata {

// Brute force: every confidence threshold gives one (P, R); interpolated precision at
// each distinct recall is the best precision at any threshold reaching that recall.
inline double brute_force_ap(const std::vector<ScoredMatch>& dets, std::size_t gt) {
  std::set<double> thresholds;
  for (const auto& d : dets) thresholds.insert(d.confidence);
  std::vector<std::pair<double, double>> pr;  // recall, precision
  for (double t : thresholds) {
    std::size_t kept = 0, tp = 0;
    for (const auto& d : dets) {
      if (d.confidence >= t) {
        ++kept;
        tp += d.true_positive;
      }
    }
    pr.emplace_back(static_cast<double>(tp) / gt, static_cast<double>(tp) / kept);
  }
  std::set<double> recalls;
  for (const auto& [r, _] : pr) recalls.insert(r);
  double ap = 0, prev = 0;
  for (double r : recalls) {
    double best = 0;
    for (const auto& [rr, p] : pr) {
      if (rr >= r) best = std::max(best, p);
    }
    ap += (r - prev) * best;
    prev = r;
  }
  return ap;
}

/// Random instance: at most 10 detections on coarse confidence levels (ties are
/// common), 1 to 5 GT, sorted by descending confidence.
template <class Rng>
std::pair<std::vector<ScoredMatch>, std::size_t> random_ap_instance(Rng& rng) {
  const std::size_t gt = 1 + rng() % 5;
  const std::size_t n = rng() % 11;
  std::vector<ScoredMatch> dets;
  std::size_t tps = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool tp = tps < gt && rng() % 2 == 0;
    tps += tp;
    dets.push_back({static_cast<double>(1 + rng() % 6) / 6.0, tp});
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) { return a.confidence > b.confidence; });
  return {dets, gt};
}

}  // namespace mmui::testdata
