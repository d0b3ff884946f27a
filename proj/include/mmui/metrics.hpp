#pragma once

// Detection matching, precision/recall curves, all-point AP and the per-class
// report with its macro "all" row.

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmui/detect.hpp"

namespace mmui {

inline double f1_score(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

struct PrPoint {
  double confidence = 0;  // threshold: detections with confidence >= this are kept
  double precision = 0;
  double recall = 0;
};

/// One detection of a class, flagged by matching.
struct ScoredMatch {
  double confidence = 0;
  bool true_positive = false;
};

/// PR points after each group of equal confidence, in descending confidence.
inline std::vector<PrPoint> pr_curve(std::vector<ScoredMatch> dets, std::size_t gt_count) {
  std::stable_sort(dets.begin(), dets.end(),
                   [](const ScoredMatch& a, const ScoredMatch& b) { return a.confidence > b.confidence; });
  std::vector<PrPoint> pts;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    tp += dets[i].true_positive;
    if (i + 1 < dets.size() && dets[i + 1].confidence == dets[i].confidence) continue;
    const double n = static_cast<double>(i + 1);
    pts.push_back({dets[i].confidence, tp / n, gt_count ? tp / static_cast<double>(gt_count) : 0.0});
  }
  return pts;
}

/// Exact area under the monotone precision envelope: Σ (r_i − r_{i−1})·max_{j≥i} p_j.
inline double average_precision(const std::vector<PrPoint>& pts) {
  double ap = 0, prev_r = 0;
  std::vector<double> env(pts.size());
  double run = 0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    run = std::max(run, pts[i].precision);
    env[i] = run;
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ap += (pts[i].recall - prev_r) * env[i];
    prev_r = pts[i].recall;
  }
  return ap;
}

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0, ap50 = 0;
  std::size_t gt_count = 0;
  double threshold = 1;  // confidence at the max-F1 point
};

/// P, R, F1 at the first point of maximum F1 along the curve; AP over all points.
inline ClassMetrics summarize(const std::vector<PrPoint>& pts, std::size_t gt_count) {
  ClassMetrics m;
  m.gt_count = gt_count;
  double best = -1;
  for (const auto& p : pts) {
    const double f = f1_score(p.precision, p.recall);
    if (f > best) {
      best = f;
      m.precision = p.precision;
      m.recall = p.recall;
      m.f1 = f;
      m.threshold = p.confidence;
    }
  }
  m.ap50 = average_precision(pts);
  return m;
}

/// Greedy matching for one image and class: detections by descending confidence take the
/// unmatched GT of highest IoU (lower index on ties) when that IoU is at least `iou_threshold`.
inline std::vector<bool> match_detections(const std::vector<Detection>& dets, const std::vector<Box>& gts,
                                          double iou_threshold = 0.5) {
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = dets[a];
    const auto& y = dets[b];
    return std::tie(y.confidence, x.box.x1, x.box.y1, x.box.x2, x.box.y2, a) <
           std::tie(x.confidence, y.box.x1, y.box.y1, y.box.x2, y.box.y2, b);
  });
  std::vector<bool> tp(dets.size(), false), used(gts.size(), false);
  for (std::size_t i : order) {
    double best = -1;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g]) continue;
      const double v = iou(dets[i].box, gts[g]);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best >= iou_threshold) {
      used[best_g] = true;
      tp[i] = true;
    }
  }
  return tp;
}

struct MetricsReport {
  std::vector<std::string> class_names;
  std::vector<ClassMetrics> classes;
  ClassMetrics all;  // unweighted mean over classes with gt_count > 0; ap50 holds mAP@0.5
  std::size_t images = 0;
};

/// Per-image detections and ground truth in, report out. Order of images and of
/// detections within an image does not matter.
inline MetricsReport compute_metrics(const std::vector<std::vector<Detection>>& detections,
                                     const std::vector<std::vector<GroundTruth>>& truths,
                                     const std::vector<std::string>& class_names) {
  if (detections.size() != truths.size()) throw ContractError("compute_metrics: detection/GT image counts differ");
  if (detections.empty()) throw UsageError("evaluation split is empty");
  const std::size_t C = class_names.size();
  std::vector<std::vector<ScoredMatch>> scored(C);
  std::vector<std::size_t> gt_count(C, 0);
  for (std::size_t img = 0; img < detections.size(); ++img) {
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<Detection> d;
      std::vector<Box> g;
      for (const auto& x : detections[img]) {
        if (x.class_id == c) d.push_back(x);
      }
      for (const auto& x : truths[img]) {
        if (x.class_id == c) g.push_back(x.box);
      }
      gt_count[c] += g.size();
      const auto tp = match_detections(d, g);
      for (std::size_t i = 0; i < d.size(); ++i) scored[c].push_back({d[i].confidence, tp[i]});
    }
  }
  MetricsReport r;
  r.class_names = class_names;
  r.images = detections.size();
  std::size_t counted = 0;
  for (std::size_t c = 0; c < C; ++c) {
    // Sort by (confidence, TP first) so ties do not depend on input order.
    std::sort(scored[c].begin(), scored[c].end(), [](const ScoredMatch& a, const ScoredMatch& b) {
      return a.confidence != b.confidence ? a.confidence > b.confidence : a.true_positive > b.true_positive;
    });
    const auto m = summarize(pr_curve(scored[c], gt_count[c]), gt_count[c]);
    r.classes.push_back(m);
    r.all.gt_count += gt_count[c];
    if (gt_count[c] == 0) continue;
    ++counted;
    r.all.precision += m.precision;
    r.all.recall += m.recall;
    r.all.f1 += m.f1;
    r.all.ap50 += m.ap50;
  }
  if (counted) {
    r.all.precision /= counted;
    r.all.recall /= counted;
    r.all.f1 /= counted;
    r.all.ap50 /= counted;
  }
  return r;
}

inline std::optional<std::size_t> class_index(const MetricsReport& r, const std::string& name) {
  for (std::size_t i = 0; i < r.class_names.size(); ++i) {
    if (r.class_names[i] == name) return i;
  }
  return std::nullopt;
}

/// Mean AP over the given classes (e.g. the twin classes).
inline double mean_ap(const MetricsReport& r, const std::vector<std::size_t>& classes) {
  double s = 0;
  for (auto c : classes) s += r.classes.at(c).ap50;
  return classes.empty() ? 0.0 : s / static_cast<double>(classes.size());
}

// ---- JSON ----

inline nlohmann::ordered_json metrics_json(const ClassMetrics& m) {
  nlohmann::ordered_json j;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["ap50"] = m.ap50;
  j["gt_count"] = m.gt_count;
  return j;
}

inline nlohmann::ordered_json report_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["images"] = r.images;
  nlohmann::ordered_json cls = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < r.classes.size(); ++c) cls[r.class_names[c]] = metrics_json(r.classes[c]);
  j["classes"] = cls;
  j["all"] = metrics_json(r.all);
  return j;
}

template <class Json>
ClassMetrics metrics_from_json(const Json& j) {
  ClassMetrics m;
  m.precision = j.at("precision").template get<double>();
  m.recall = j.at("recall").template get<double>();
  m.f1 = j.at("f1").template get<double>();
  m.ap50 = j.at("ap50").template get<double>();
  m.gt_count = j.at("gt_count").template get<std::size_t>();
  return m;
}

/// Accepts nlohmann::json or ordered_json; the latter keeps the class order of the file.
template <class Json>
MetricsReport report_from_json(const Json& j) {
  MetricsReport r;
  r.images = j.at("images").template get<std::size_t>();
  for (const auto& [name, v] : j.at("classes").items()) {
    r.class_names.push_back(name);
    r.classes.push_back(metrics_from_json(v));
  }
  r.all = metrics_from_json(j.at("all"));
  return r;
}

/// Relative change (new − old)/old; null where the reference is 0.
inline nlohmann::ordered_json relative_change(double now, double ref) {
  if (ref == 0) return nullptr;
  return (now - ref) / ref;
}

inline nlohmann::ordered_json delta_json(const ClassMetrics& now, const ClassMetrics& ref) {
  nlohmann::ordered_json j;
  j["precision"] = relative_change(now.precision, ref.precision);
  j["recall"] = relative_change(now.recall, ref.recall);
  j["f1"] = relative_change(now.f1, ref.f1);
  j["ap50"] = relative_change(now.ap50, ref.ap50);
  return j;
}

/// Report plus a "deltas" object of relative changes against `ref`, matched by class name.
inline nlohmann::ordered_json report_with_deltas(const MetricsReport& now, const MetricsReport& ref) {
  auto j = report_json(now);
  nlohmann::ordered_json d, cls = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < now.classes.size(); ++c) {
    if (auto k = class_index(ref, now.class_names[c])) cls[now.class_names[c]] = delta_json(now.classes[c], ref.classes[*k]);
  }
  d["classes"] = cls;
  d["all"] = delta_json(now.all, ref.all);
  j["deltas"] = d;
  return j;
}

}  // namespace mmui
