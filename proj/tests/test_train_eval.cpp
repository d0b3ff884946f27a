#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "mmui/grad_check.hpp"
#include "mmui/train.hpp"
#include "oracles.hpp"
#include "reference_tables.hpp"

using namespace mmui;

namespace {

Detection det(double x1, double y1, double x2, double y2, double conf, std::size_t cls = 0) {
  return {{x1, y1, x2, y2}, cls, conf};
}

HeadGeometry toy_geometry() {
  HeadGeometry g;
  g.input_size = 32;
  g.num_classes = 2;
  g.anchors = {{{{10, 10}}, {{20, 20}}, {{30, 30}}}};
  return g;
}

}  // namespace

// ---- boxes, targets, loss ----

TEST(Iou, KnownOverlaps) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {0, 0, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
  EXPECT_THROW(iou({0, 0, 0, 1}, {0, 0, 1, 1}), ContractError);
}

double ciou_at(double px, double py, double pw, double ph) {
  using D = detail::Dual<1>;
  return ciou(D::constant(px), D::constant(py), D::constant(pw), D::constant(ph), 50, 40, 20, 10).v;
}

TEST(Ciou, OneAtExactTargetAndLowerElsewhere) {
  EXPECT_NEAR(ciou_at(50, 40, 20, 10), 1.0, 1e-9);  // union and diagonal carry a 1e-9 guard
  EXPECT_LT(ciou_at(52, 40, 20, 10), 1.0);
  EXPECT_LT(ciou_at(50, 40, 10, 20), ciou_at(50, 40, 18, 11));
}

TEST(Targets, CentreCellBestAnchorAndUnassigned) {
  const auto geo = toy_geometry();
  const std::vector<GroundTruth> gts = {{box_from_center(12, 20, 10, 10), 1}};
  const auto t = assign_targets(gts, geo.anchors, 32);
  ASSERT_EQ(t.positives.size(), 2u);  // 30x30 anchor at IoU 1/9 is below the threshold
  EXPECT_EQ(t.positives[0].scale, 0u);
  EXPECT_EQ(t.positives[0].gx, 1u);
  EXPECT_EQ(t.positives[0].gy, 2u);
  EXPECT_EQ(t.positives[1].scale, 1u);
  EXPECT_EQ(t.unassigned_gt, 0u);

  const auto none = assign_targets({{box_from_center(100, 100, 1, 200), 0}}, default_anchors(), 256);
  EXPECT_TRUE(none.positives.empty());
  EXPECT_EQ(none.unassigned_gt, 1u);
}

TEST(Targets, ClashKeepsBetterShapeMatch) {
  const auto geo = toy_geometry();
  // Same cell and anchor at stride 8; the exact 10x10 box wins over the 7x7 box.
  const std::vector<GroundTruth> gts = {{box_from_center(13, 13, 7, 7), 0}, {box_from_center(12, 12, 10, 10), 1}};
  const auto t = assign_targets(gts, geo.anchors, 32);
  std::size_t at_scale0 = 0;
  for (const auto& p : t.positives) {
    if (p.scale == 0) {
      ++at_scale0;
      EXPECT_EQ(p.gt_index, 1u);
    }
  }
  EXPECT_EQ(at_scale0, 1u);
}

TEST(DetectionLoss, GradientMatchesFiniteDifferences) {
  const auto geo = toy_geometry();
  const std::vector<GroundTruth> gts = {{box_from_center(12, 20, 10, 12), 1}, {box_from_center(24, 8, 18, 16), 0}};
  const auto targets = assign_targets(gts, geo.anchors, 32);
  ASSERT_GE(targets.positives.size(), 3u);
  const double err = grad_check(
      [&](const std::vector<Tensor<double>>& in) {
        HeadOutputs<double> out{{in[0], in[1], in[2]}};
        return detection_loss(out, targets, geo, LossWeights{});
      },
      {{7, 4, 4}, {7, 2, 2}, {7, 1, 1}}, 11);
  EXPECT_LT(err, 1e-3);
}

TEST(DetectionLoss, NoPositivesMeansOnlyObjectness) {
  const auto geo = toy_geometry();
  HeadOutputs<double> out{{Tensor<double>({7, 4, 4}, 0.3), Tensor<double>({7, 2, 2}, -0.2), Tensor<double>({7, 1, 1}, 1.0)}};
  LossComponents lc;
  detection_loss(out, Targets{}, geo, LossWeights{}, &lc);
  EXPECT_EQ(lc.box, 0.0);
  EXPECT_EQ(lc.cls, 0.0);
  EXPECT_GT(lc.obj, 0.0);
  EXPECT_DOUBLE_EQ(lc.total, lc.obj);
}

TEST(DetectionLoss, UnknownClassKeepsBoxAndObjectnessButNoClassTarget) {
  const auto geo = toy_geometry();
  const std::vector<GroundTruth> gts = {{box_from_center(12, 20, 10, 12), 1}};
  const auto known = assign_targets(gts, geo.anchors, 32);
  auto unknown = known;
  for (auto& p : unknown.positives) p.class_known = false;
  HeadOutputs<double> out{{Tensor<double>({7, 4, 4}, 0.3), Tensor<double>({7, 2, 2}, -0.2), Tensor<double>({7, 1, 1}, 1.0)}};
  LossComponents a, b;
  detection_loss(out, known, geo, LossWeights{}, &a);
  detection_loss(out, unknown, geo, LossWeights{}, &b);
  EXPECT_EQ(a.obj, b.obj);
  EXPECT_EQ(a.box, b.box);
  // BCE(z, 0) - BCE(z, 1) = z, and every logit of a scale shares one value.
  const double z[3] = {0.3, -0.2, 1.0};
  double diff = 0;
  for (const auto& p : known.positives) diff += z[p.scale];
  EXPECT_NEAR(b.cls - a.cls, LossWeights{}.cls * diff / static_cast<double>(known.positives.size() * 2), 1e-12);
}

TEST(Decode, RecoversEncodedBox) {
  const auto geo = toy_geometry();
  HeadOutputs<double> out{{Tensor<double>({7, 4, 4}, -20.0), Tensor<double>({7, 2, 2}, -20.0), Tensor<double>({7, 1, 1}, -20.0)}};
  // Scale 0, cell (gx=2, gy=1): zero box logits give centre (gx+0.5)*8 and size equal to the anchor.
  auto& m = out.maps[0];
  const std::size_t hw = 16, cell = 1 * 4 + 2;
  for (std::size_t j = 0; j < 4; ++j) m[j * hw + cell] = 0.0;
  m[4 * hw + cell] = 20.0;
  m[6 * hw + cell] = 20.0;
  const auto d = decode_detections(out, geo);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].class_id, 1u);
  EXPECT_NEAR(d[0].box.x1, 20 - 5, 1e-9);
  EXPECT_NEAR(d[0].box.y1, 12 - 5, 1e-9);
  EXPECT_NEAR(d[0].box.x2, 20 + 5, 1e-9);
  EXPECT_NEAR(d[0].confidence, 1.0, 1e-6);
}

// ---- NMS ----

TEST(Nms, SuppressesOnlyHeavySameClassOverlap) {
  // IoU 0.8: [0,0,10,10] vs [0,0,10,8]
  auto kept = nms({det(0, 0, 10, 10, 0.9), det(0, 0, 10, 8, 0.8)});
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].confidence, 0.9);
  // IoU 0.1: two 10x10 boxes overlapping by 20/11 px horizontally
  const double shift = 10 - 20.0 / 11.0;
  EXPECT_NEAR(iou({0, 0, 10, 10}, {shift, 0, shift + 10, 10}), 0.1, 1e-12);
  EXPECT_EQ(nms({det(0, 0, 10, 10, 0.9), det(shift, 0, shift + 10, 10, 0.8)}).size(), 2u);
  EXPECT_EQ(nms({det(0, 0, 10, 10, 0.9, 0), det(0, 0, 10, 10, 0.8, 1)}).size(), 2u);
}

TEST(Nms, InvariantUnderInputPermutation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0, 40), size(4, 20);
  std::uniform_int_distribution<int> conf_level(1, 4), cls(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Detection> dets;
    for (int i = 0; i < 12; ++i) {
      const double x = pos(rng), y = pos(rng);
      dets.push_back(det(x, y, x + size(rng), y + size(rng), conf_level(rng) / 4.0, cls(rng)));
    }
    const auto ref = nms(dets);
    for (int p = 0; p < 5; ++p) {
      std::shuffle(dets.begin(), dets.end(), rng);
      const auto got = nms(dets);
      ASSERT_EQ(got.size(), ref.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].box, ref[i].box);
        EXPECT_EQ(got[i].class_id, ref[i].class_id);
      }
    }
  }
}

// ---- metric arithmetic ----

TEST(MetricArithmetic, F1ColumnFromPrecisionAndRecall) {
  EXPECT_NEAR(f1_score(0.848, 0.902), 0.874, 0.0005);
  for (const auto& r : testdata::kBaselineClasses) {
    EXPECT_NEAR(f1_score(r.precision, r.recall), r.f1, 0.0015) << r.name;
  }
}

TEST(MetricArithmetic, AllRowIsMacroMean) {
  double p = 0, r = 0, f = 0;
  for (const auto& row : testdata::kBaselineClasses) {
    p += row.precision;
    r += row.recall;
    f += row.f1;
  }
  const double n = static_cast<double>(testdata::kBaselineClasses.size());
  EXPECT_NEAR(p / n, testdata::kBaselineAll.precision, 0.001);
  EXPECT_NEAR(r / n, testdata::kBaselineAll.recall, 0.001);
  EXPECT_NEAR(f / n, testdata::kBaselineAll.f1, 0.001);
}

TEST(MetricArithmetic, RelativeChangeMatchesAblationTable) {
  const auto d = relative_change(testdata::kMismatchIconPrecision, testdata::kBaselineIconPrecision);
  EXPECT_NEAR(d.get<double>(), -0.1656, 0.0001);
  EXPECT_TRUE(relative_change(0.3, 0.0).is_null());
}

TEST(AveragePrecision, WorkedExample) {
  const auto pts = pr_curve({{0.9, true}, {0.8, false}, {0.7, true}}, 2);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_DOUBLE_EQ(pts[0].recall, 0.5);
  EXPECT_DOUBLE_EQ(pts[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(pts[1].recall, 0.5);
  EXPECT_DOUBLE_EQ(pts[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(pts[2].recall, 1.0);
  EXPECT_DOUBLE_EQ(pts[2].precision, 2.0 / 3.0);
  EXPECT_NEAR(average_precision(pts), 0.5 + (2.0 / 3.0) * 0.5, 1e-12);
}

TEST(AveragePrecision, MatchesBruteForceOracle) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const auto [dets, gt] = testdata::random_ap_instance(rng);
    EXPECT_NEAR(average_precision(pr_curve(dets, gt)), testdata::brute_force_ap(dets, gt), 1e-9) << "trial " << trial;
  }
}

TEST(Matching, GreedyByConfidenceOneMatchPerGt) {
  const std::vector<Box> gts = {{0, 0, 10, 10}, {20, 0, 30, 10}};
  const auto tp = match_detections({det(0, 0, 10, 10, 0.5), det(1, 0, 11, 10, 0.9), det(20, 0, 30, 10, 0.7)}, gts);
  EXPECT_EQ(tp, (std::vector<bool>{false, true, true}));
  // Equal IoU to two GT boxes: the lower index is taken.
  const std::vector<Box> twin = {{0, 0, 10, 10}, {0, 0, 10, 10}};
  const auto t2 = match_detections({det(0, 0, 10, 10, 0.9), det(0, 0, 10, 10, 0.8)}, twin);
  EXPECT_EQ(t2, (std::vector<bool>{true, true}));
  EXPECT_EQ(match_detections({det(0, 0, 10, 4, 0.9)}, gts), (std::vector<bool>{false}));
}

TEST(Metrics, InvariantUnderDetectionOrderAndEmptySplitFails) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> pos(0, 60), size(5, 25), unit(0, 1);
  std::vector<std::vector<Detection>> dets(6);
  std::vector<std::vector<GroundTruth>> gts(6);
  for (std::size_t img = 0; img < 6; ++img) {
    for (int g = 0; g < 3; ++g) {
      const double x = pos(rng), y = pos(rng);
      gts[img].push_back({{x, y, x + size(rng), y + size(rng)}, static_cast<std::size_t>(rng() % 3)});
      const auto& b = gts[img].back().box;
      dets[img].push_back({{b.x1 + 1, b.y1, b.x2 + 1, b.y2}, gts[img].back().class_id, std::round(unit(rng) * 4) / 4});
    }
    for (int k = 0; k < 4; ++k) {
      const double x = pos(rng), y = pos(rng);
      dets[img].push_back(det(x, y, x + size(rng), y + size(rng), std::round(unit(rng) * 4) / 4, rng() % 3));
    }
  }
  const std::vector<std::string> names = {"a", "b", "c"};
  const auto ref = report_json(compute_metrics(dets, gts, names)).dump();
  for (int p = 0; p < 10; ++p) {
    auto shuffled = dets;
    for (auto& d : shuffled) std::shuffle(d.begin(), d.end(), rng);
    EXPECT_EQ(report_json(compute_metrics(shuffled, gts, names)).dump(), ref);
  }
  EXPECT_THROW(compute_metrics({}, {}, names), UsageError);
}

TEST(Metrics, MacroRowSkipsClassesWithoutGroundTruth) {
  const std::vector<std::vector<Detection>> dets = {{det(0, 0, 10, 10, 0.9, 0), det(30, 30, 40, 40, 0.8, 1)}};
  const std::vector<std::vector<GroundTruth>> gts = {{{{0, 0, 10, 10}, 0}}};
  const auto r = compute_metrics(dets, gts, {"a", "b"});
  EXPECT_EQ(r.classes[1].gt_count, 0u);
  EXPECT_DOUBLE_EQ(r.all.ap50, 1.0);
  EXPECT_DOUBLE_EQ(r.all.f1, 1.0);
}

TEST(MetricsJson, StableSchemaAndDeltas) {
  MetricsReport r;
  r.class_names = {"Icon", "Empty"};
  r.classes = {{0.924, 0.5, 0.6, 0.7, 10, 0.3}, {0, 0, 0, 0, 0, 1}};
  r.all = r.classes[0];
  r.images = 4;
  const auto j = report_json(r);
  std::vector<std::string> keys;
  for (const auto& [k, _] : j["classes"]["Icon"].items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"precision", "recall", "f1", "ap50", "gt_count"}));
  EXPECT_TRUE(j["all"].contains("ap50"));
  EXPECT_EQ(report_json(report_from_json(nlohmann::ordered_json::parse(j.dump()))).dump(), j.dump());

  auto now = r;
  now.classes[0].precision = 0.771;
  const auto d = report_with_deltas(now, r);
  EXPECT_NEAR(d["deltas"]["classes"]["Icon"]["precision"].get<double>(), -0.1656, 1e-4);
  EXPECT_DOUBLE_EQ(d["deltas"]["classes"]["Icon"]["recall"].get<double>(), 0.0);
  EXPECT_TRUE(d["deltas"]["classes"]["Empty"]["ap50"].is_null());
}

// ---- optimizer ----

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterRegistry<double> reg;
  auto& p = reg.add("p", Tensor<double>({3}, std::vector<double>{1.0, -2.0, 0.5}));
  p.grad()[0] = 4.0;
  p.grad()[1] = -0.001;
  p.grad()[2] = 0.0;
  Adam<double> adam(AdamOptions{0.1});
  adam.step(reg);
  EXPECT_NEAR(p[0], 1.0 - 0.1, 1e-7);
  EXPECT_NEAR(p[1], -2.0 + 0.1, 1e-4);
  EXPECT_DOUBLE_EQ(p[2], 0.5);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, MinimizesQuadratic) {
  ParameterRegistry<double> reg;
  auto& p = reg.add("p", Tensor<double>({2}, std::vector<double>{3.0, -4.0}));
  Adam<double> adam(AdamOptions{0.05});
  for (int i = 0; i < 2000; ++i) {
    reg.zero_grad();
    auto loss = sum(mul(p, p));
    backward(loss);
    adam.step(reg);
  }
  EXPECT_NEAR(p[0], 0.0, 1e-2);
  EXPECT_NEAR(p[1], 0.0, 1e-2);
}

TEST(Adam, NonFiniteGradientAbortsWithoutUpdating) {
  ParameterRegistry<double> reg;
  reg.add("a", Tensor<double>({1}, 1.0));
  reg.add("b", Tensor<double>({1}, 2.0));
  auto& a = *reg.find("a");  // looked up after both adds: the registry may reallocate
  auto& b = *reg.find("b");
  a.grad()[0] = 1.0;
  b.grad()[0] = std::nan("");
  Adam<double> adam;
  try {
    adam.step(reg);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(adam.steps(), 0u);
}

// ---- training loop, evaluation, ablations, bench ----

namespace {

DetectorConfig small_config(FusionStrategy f = FusionStrategy::None, std::size_t xattn = 0) {
  DetectorConfig c;
  c.input_size = 64;
  c.channels = {4, 8, 8, 16};
  c.fusion = f;
  c.xattn_count = xattn;
  c.text_dim = 16;
  c.seed = 5;
  return c;
}

// 10 training and 2 validation samples at 64x64.
Dataset small_dataset() {
  auto ds = generate_dataset(14, twin12_catalog(), 9, 64);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    ds.samples[i].split = i < 10 ? Split::Train : i < 12 ? Split::Val : Split::Test;
  }
  return ds;
}

std::vector<float> param_values(const DetectorModel<float>& m) {
  std::vector<float> v;
  for (const auto& [_, t] : m.params().entries()) v.insert(v.end(), t.data().begin(), t.data().end());
  return v;
}

struct ThreadsEnv {
  explicit ThreadsEnv(const char* v) { setenv("MMUI_THREADS", v, 1); }
  ~ThreadsEnv() { unsetenv("MMUI_THREADS"); }
};

}  // namespace

TEST(Train, TenSamplesBatchFiveIsTwoStepsWithFiniteLoss) {
  const auto ds = small_dataset();
  auto m = build_model<float>(small_config());
  TrainOptions opt;
  opt.epochs = 1;
  opt.batch = 5;
  const auto r = train(m, ds, opt);
  EXPECT_EQ(r.steps, 2u);
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.curve[0].loss));
  EXPECT_EQ(loss_curve_csv(r.curve).substr(0, 21), "epoch,loss,val_map50\n");
}

TEST(Train, SameSeedSameParameterBytes) {
  const auto ds = small_dataset();
  TrainOptions opt;
  opt.epochs = 2;
  opt.seed = 4;
  auto a = build_model<float>(small_config());
  auto b = build_model<float>(small_config());
  train(a, ds, opt);
  train(b, ds, opt);
  EXPECT_EQ(param_values(a), param_values(b));
  opt.seed = 5;
  auto c = build_model<float>(small_config());
  train(c, ds, opt);
  EXPECT_NE(param_values(a), param_values(c));
}

TEST(Train, BaselinePhaseIgnoresText) {
  const auto ds = small_dataset();
  auto no_text = ds;
  for (auto& s : no_text.samples) s.description = {};
  TrainOptions opt;
  opt.epochs = 1;
  auto a = build_model<float>(small_config());
  auto b = build_model<float>(small_config());
  train(a, ds, opt);
  train(b, no_text, opt);
  EXPECT_EQ(param_values(a), param_values(b));
}

TEST(Train, DeletingTextsDirectoryDoesNotChangeBaseline) {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "mmui_train_notext";
  fs::remove_all(dir);
  write_dataset(dir.string(), 12, twin12_catalog(), 9, 64);
  TrainOptions opt;
  opt.epochs = 1;
  auto a = build_model<float>(small_config());
  train(a, load_dataset(dir.string(), false), opt);
  fs::remove_all(dir / "texts");
  auto b = build_model<float>(small_config());
  train(b, load_dataset(dir.string(), false), opt);
  EXPECT_EQ(param_values(a), param_values(b));
  EXPECT_THROW(load_dataset(dir.string()), FormatError);
  fs::remove_all(dir);
}

TEST(Train, PhaseProtocolIsEnforced) {
  const auto ds = small_dataset();
  auto fused = build_model<float>(small_config(FusionStrategy::ConvFusion, 3));
  TrainOptions opt;
  opt.epochs = 1;
  opt.phase = Phase::Finetune;
  EXPECT_THROW(train(fused, ds, opt), UsageError);  // not initialised from a baseline
  opt.phase = Phase::Baseline;
  EXPECT_THROW(train(fused, ds, opt), UsageError);
  auto base = build_model<float>(small_config());
  opt.phase = Phase::Finetune;
  EXPECT_THROW(train(base, ds, opt), UsageError);
}

TEST(Train, FinetuneFromBaselineRunsAndKeepsBestEpoch) {
  const auto ds = small_dataset();
  auto base = build_model<float>(small_config());
  TrainOptions opt;
  opt.epochs = 1;
  train(base, ds, opt);
  auto fused = build_model<float>(small_config(FusionStrategy::WeightedSum, 3));
  transfer_parameters(base.params(), fused.params());
  fused.set_baseline_initialized(true);
  opt.phase = Phase::Finetune;
  opt.epochs = 3;
  opt.text_dropout = 0.3;
  std::vector<double> seen;
  opt.on_epoch = [&](const EpochLog& e) { seen.push_back(e.val_map50); };
  const auto r = train(fused, ds, opt);
  EXPECT_EQ(seen.size(), 3u);
  EXPECT_DOUBLE_EQ(r.best_val_map50, *std::max_element(seen.begin(), seen.end()));
  const auto val = ds.indices(Split::Val);
  TextSource src;
  src.dim = 16;
  EXPECT_DOUBLE_EQ(evaluate(fused, ds, val, src).all.ap50, r.best_val_map50);
}

TEST(Train, TwinAbstainActsOnlyThroughDroppedMentions) {
  const auto ds = small_dataset();
  auto base = build_model<float>(small_config());
  TrainOptions opt;
  opt.epochs = 1;
  train(base, ds, opt);
  auto finetune = [&](double dropout, bool abstain) {
    auto m = build_model<float>(small_config(FusionStrategy::ConvFusion, 3));
    transfer_parameters(base.params(), m.params());
    m.set_baseline_initialized(true);
    TrainOptions o;
    o.phase = Phase::Finetune;
    o.epochs = 2;
    o.text_dropout = dropout;
    o.twin_abstain = abstain;
    train(m, ds, o);
    return param_values(m);
  };
  EXPECT_EQ(finetune(0.0, false), finetune(0.0, true));
  EXPECT_NE(finetune(0.9, false), finetune(0.9, true));
}

TEST(Evaluate, EmptySplitFailsAndThreadsDoNotChangeReport) {
  const auto ds = small_dataset();
  auto m = build_model<float>(small_config());
  EXPECT_THROW(evaluate(m, ds, {}, TextSource{}), UsageError);
  const auto idx = ds.indices(Split::Train);
  const auto one = report_json(evaluate(m, ds, idx, TextSource{})).dump();
  ThreadsEnv env("3");
  EXPECT_EQ(thread_limit(), 3u);
  EXPECT_EQ(report_json(evaluate(m, ds, idx, TextSource{})).dump(), one);
}

TEST(Evaluate, ThreadLimitRejectsGarbage) {
  ThreadsEnv env("0");
  EXPECT_THROW(thread_limit(), UsageError);
  setenv("MMUI_THREADS", "2x", 1);
  EXPECT_THROW(thread_limit(), UsageError);
}

TEST(Ablation, DeterministicAndValidatesClass) {
  const auto ds = small_dataset();
  auto m = build_model<float>(small_config(FusionStrategy::ConvFusion, 3));
  const auto idx = ds.indices(Split::Train);
  const auto a = report_json(ablation_eval(m, ds, idx, AblationMode::Mismatch, "", 3, 16)).dump();
  const auto b = report_json(ablation_eval(m, ds, idx, AblationMode::Mismatch, "", 3, 16)).dump();
  EXPECT_EQ(a, b);
  EXPECT_THROW(ablation_eval(m, ds, idx, AblationMode::Partial, "Slider", 3, 16), ConfigError);
  auto base = build_model<float>(small_config());
  EXPECT_THROW(ablation_eval(base, ds, idx, AblationMode::Mismatch, "", 3, 16), UsageError);
  // Partial text keeps ground truth untouched, so GT counts are unchanged.
  const auto p = ablation_eval(m, ds, idx, AblationMode::Partial, "Button", 3, 16);
  const auto full = evaluate(m, ds, idx, TextSource{16});
  for (std::size_t c = 0; c < p.classes.size(); ++c) EXPECT_EQ(p.classes[c].gt_count, full.classes[c].gt_count);
}

TEST(Bench, TimingMethodologyAndParameterOrdering) {
  const auto ds = small_dataset();
  auto base = build_model<float>(small_config());
  const auto r = bench(base, ds, 1, 100);
  EXPECT_EQ(r.epochs_timed, 1u);
  EXPECT_GE(r.images_timed, 100u);
  EXPECT_GT(r.mean_epoch_seconds, 0.0);
  EXPECT_GT(r.mean_inference_seconds, 0.0);
  EXPECT_TRUE(std::isfinite(r.mean_inference_seconds));
  const auto j = bench_json(r);
  EXPECT_TRUE(j.contains("params") && j.contains("mean_epoch_seconds") && j.contains("mean_inference_seconds"));
  // Benchmarking trains a copy; the given model is untouched.
  auto fresh = build_model<float>(small_config());
  EXPECT_EQ(param_values(base), param_values(fresh));

  auto add = build_model<float>(small_config(FusionStrategy::ElementwiseAdd, 3));
  auto wsum = build_model<float>(small_config(FusionStrategy::WeightedSum, 3));
  auto conv = build_model<float>(small_config(FusionStrategy::ConvFusion, 3));
  const auto nb = base.count_parameters().total, na = add.count_parameters().total;
  const auto nw = wsum.count_parameters().total, nc = conv.count_parameters().total;
  EXPECT_GT(nc, nw);
  EXPECT_EQ(nw, na + 2 * 3);
  EXPECT_GT(na, nb);
}
