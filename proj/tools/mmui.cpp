// mmui: dataset generation, two-phase training, evaluation, text ablations,
// cost benchmarking and detection rendering.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data or format
// error, 4 numerical abort.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mmui/checkpoint.hpp"
#include "mmui/train.hpp"

namespace fs = std::filesystem;
using namespace mmui;

namespace {

constexpr int kUsage = 2, kData = 3, kNumeric = 4;

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw UsageError("unknown split '" + s + "' (valid: train, val, test)");
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) { detail::write_file(path, j.dump(2) + "\n"); }

nlohmann::ordered_json read_json(const std::string& path) {
  try {
    return nlohmann::ordered_json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// Fusion models need descriptions; the baseline never reads texts/.
Dataset load_for(const DetectorModel<float>& m, const std::string& dir) { return load_dataset(dir, m.has_fusion()); }

std::map<std::string, TextEmbeddingSeq> load_external(const std::string& path, std::size_t dim) {
  return path.empty() ? std::map<std::string, TextEmbeddingSeq>{} : load_external_embeddings(path, dim);
}

nlohmann::ordered_json model_json(const DetectorModel<float>& m) {
  nlohmann::ordered_json j;
  j["fusion"] = std::string(fusion_name(m.config().fusion));
  j["xattn_count"] = m.config().xattn_count;
  nlohmann::ordered_json names = nlohmann::ordered_json::array();
  for (const auto& [name, _] : m.params().entries()) {
    if (name.rfind("xattn.", 0) == 0) names.push_back(name);
  }
  j["fusion_parameters"] = names;
  return j;
}

// ---- commands ----

struct GenArgs {
  std::string out, catalog = "twin12";
  std::size_t count = 500;
  std::uint64_t seed = 7;
  int canvas = 256;
};

void cmd_gen(const GenArgs& a) {
  const auto catalog = catalog_by_name(a.catalog);
  if (a.canvas < 32) throw UsageError("--canvas must be at least 32");
  write_dataset(a.out, a.count, catalog, a.seed, a.canvas);
  const auto s = split_sizes(a.count);
  std::printf("wrote %zu samples to %s (catalog %s, seed %llu): train %zu, val %zu, test %zu\n", a.count,
              a.out.c_str(), catalog.name.c_str(), static_cast<unsigned long long>(a.seed), s.train, s.val, s.test);
}

struct TrainArgs {
  std::string data, config, fusion, init, out, external;
  int xattn = -1;
};

void cmd_train(const TrainArgs& a) {
  RunConfig rc = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (!a.data.empty()) rc.data_dir = a.data;
  if (!a.fusion.empty()) rc.model.fusion = parse_fusion(a.fusion);
  if (a.xattn >= 0) rc.model.xattn_count = static_cast<std::size_t>(a.xattn);
  if (!a.init.empty()) rc.init = a.init;
  if (!a.external.empty()) rc.external_text = a.external;
  if (rc.data_dir.empty()) throw UsageError("no dataset: pass --data or set data_dir in the config");

  const bool fused = rc.model.fusion != FusionStrategy::None;
  if (!fused && rc.model.xattn_count != 0) throw UsageError("--fusion none trains the baseline and requires --xattn 0");
  if (fused && rc.model.xattn_count == 0) throw UsageError("fusion " + std::string(fusion_name(rc.model.fusion)) + " needs --xattn 3, 4 or 5");
  if (fused && rc.init.empty()) {
    throw UsageError("fusion models are fine-tuned from a trained baseline: first run 'mmui train --fusion none "
                     "--xattn 0 --out base.ckpt', then pass --init base.ckpt");
  }
  if (!fused && !rc.init.empty()) throw UsageError("--init applies only to fusion models");
  rc.model.validate();

  const fs::path out(a.out);
  const fs::path dir = rc.output_dir.empty() ? (out.has_parent_path() ? out.parent_path() : fs::path(".")) : fs::path(rc.output_dir);
  rc.output_dir = dir.string();
  fs::create_directories(dir);
  const std::string stem = out.stem().string();
  write_json((dir / (stem + ".config.json")).string(), to_json(rc));

  std::optional<DetectorModel<float>> model;
  if (fused) {
    TransferReport rep;
    model.emplace(init_from_baseline<float>(rc.init, rc.model, &rep));
    std::printf("initialised from %s: %zu shared parameters copied, %zu cross-attention parameters fresh\n",
                rc.init.c_str(), rep.copied.size(), rep.initialized.size());
    for (const auto& n : rep.initialized) std::printf("  fresh %s\n", n.c_str());
  } else {
    model.emplace(build_model<float>(rc.model));
  }
  const auto ds = load_dataset(rc.data_dir, fused);
  const auto external = load_external(rc.external_text, rc.model.text_dim);

  TrainOptions opt;
  opt.phase = fused ? Phase::Finetune : Phase::Baseline;
  opt.epochs = rc.epochs;
  opt.batch = rc.batch;
  opt.lr = rc.lr;
  opt.seed = rc.seed;
  opt.loss = rc.loss;
  opt.text_dropout = fused ? rc.text_dropout : 0.0;
  opt.twin_abstain = rc.twin_abstain;
  opt.external_text = external.empty() ? nullptr : &external;
  opt.on_epoch = [&](const EpochLog& e) {
    std::printf("epoch %zu/%zu  loss %.5f  val mAP@0.5 %.4f  (%.1f s)\n", e.epoch, rc.epochs, e.loss, e.val_map50, e.seconds);
    std::fflush(stdout);
  };
  const auto res = train(*model, ds, opt);
  save_checkpoint(*model, rc, a.out);
  detail::write_file((dir / (stem + ".loss.csv")).string(), loss_curve_csv(res.curve));
  std::printf("best epoch %zu (val mAP@0.5 %.4f); wrote %s\n", res.best_epoch, res.best_val_map50, a.out.c_str());
  if (res.unassigned_gt) std::printf("note: %zu training boxes matched no anchor\n", res.unassigned_gt);
}

struct EvalArgs {
  std::string data, ckpt, split = "test", report, external;
};

void cmd_eval(const EvalArgs& a) {
  const auto loaded = load_checkpoint<float>(a.ckpt);
  const auto& m = loaded.model;
  const auto ds = load_for(m, a.data);
  const auto external = load_external(a.external, m.config().text_dim);
  TextSource src;
  src.dim = m.config().text_dim;
  src.external = external.empty() ? nullptr : &external;
  const auto rep = evaluate(m, ds, ds.indices(parse_split(a.split)), src);
  auto j = report_json(rep);
  j["model"] = model_json(m);
  write_json(a.report, j);
  std::printf("%s: mAP@0.5 %.4f  P %.4f  R %.4f  F1 %.4f over %zu images; wrote %s\n", a.split.c_str(), rep.all.ap50,
              rep.all.precision, rep.all.recall, rep.all.f1, rep.images, a.report.c_str());
}

struct AblateArgs {
  std::string mode, cls, ckpt, data, ref, report, split = "test";
  std::uint64_t seed = 0;
};

void cmd_ablate(const AblateArgs& a) {
  AblationMode mode;
  if (a.mode == "mismatch") mode = AblationMode::Mismatch;
  else if (a.mode == "partial") mode = AblationMode::Partial;
  else throw UsageError("unknown --mode '" + a.mode + "' (valid: mismatch, partial)");
  if (mode == AblationMode::Partial && a.cls.empty()) throw UsageError("--mode partial needs --class NAME");
  if (mode == AblationMode::Mismatch && !a.cls.empty()) throw UsageError("--class applies only to --mode partial");
  const auto loaded = load_checkpoint<float>(a.ckpt);
  const auto& m = loaded.model;
  if (!m.has_fusion()) throw UsageError("text ablations need a fusion checkpoint");
  const auto ref = report_from_json(read_json(a.ref));
  const auto ds = load_dataset(a.data);
  const auto rep = ablation_eval(m, ds, ds.indices(parse_split(a.split)), mode, a.cls, a.seed, m.config().text_dim);
  auto j = report_with_deltas(rep, ref);
  j["ablation"] = {{"mode", a.mode}, {"class", a.cls}, {"seed", a.seed}};
  write_json(a.report, j);
  std::printf("%s%s: mAP@0.5 %.4f (ref %.4f)  F1 %.4f (ref %.4f); wrote %s\n", a.mode.c_str(),
              a.cls.empty() ? "" : (" " + a.cls).c_str(), rep.all.ap50, ref.all.ap50, rep.all.f1, ref.all.f1,
              a.report.c_str());
}

struct BenchArgs {
  std::string ckpt, data, report;
  std::size_t epochs = 1, images = 100;
};

void cmd_bench(const BenchArgs& a) {
  const auto loaded = load_checkpoint<float>(a.ckpt);
  const auto ds = load_for(loaded.model, a.data);
  const auto r = bench(loaded.model, ds, a.epochs, a.images);
  write_json(a.report, bench_json(r));
  std::printf("%s: %zu parameters (%zu fusion), %.2f s/epoch over %zu epoch(s), %.2f ms/image over %zu images\n",
              r.variant.c_str(), r.params.total, r.params.fusion, r.mean_epoch_seconds, r.epochs_timed,
              1e3 * r.mean_inference_seconds, r.images_timed);
}

struct RenderArgs {
  std::string data, image, ckpt, out;
  double conf = 0.25;
};

// Fixed box colours, indexed by class id.
Rgb class_color(std::size_t c) {
  static const Rgb palette[] = {{230, 25, 75},  {60, 180, 75},  {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
                                {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {210, 245, 60}, {250, 190, 212},
                                {0, 128, 128},  {170, 110, 40}};
  return palette[c % std::size(palette)];
}

void cmd_render(const RenderArgs& a) {
  const auto loaded = load_checkpoint<float>(a.ckpt);
  const auto& m = loaded.model;
  const auto ds = load_for(m, a.data);
  const auto it = std::find_if(ds.samples.begin(), ds.samples.end(), [&](const Sample& s) { return s.id == a.image; });
  if (it == ds.samples.end()) throw UsageError("image '" + a.image + "' is not in " + a.data);
  TextSource src;
  src.dim = m.config().text_dim;
  auto dets = detect(m, *it, model_text(m, src, *it, static_cast<std::size_t>(it - ds.samples.begin())));
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& x, const Detection& y) { return x.confidence > y.confidence; });
  RgbImage im = it->image;
  for (const auto& d : dets) {
    if (d.confidence < a.conf) continue;
    const int x1 = static_cast<int>(std::lround(d.box.x1)), y1 = static_cast<int>(std::lround(d.box.y1));
    const int x2 = static_cast<int>(std::lround(d.box.x2)), y2 = static_cast<int>(std::lround(d.box.y2));
    draw::stroke_rect(im, x1, y1, std::max(1, x2 - x1), std::max(1, y2 - y1), 2, class_color(d.class_id));
    std::printf("%-26s %.4f  %7.1f %7.1f %7.1f %7.1f\n", ds.catalog.names[d.class_id].c_str(), d.confidence, d.box.x1,
                d.box.y1, d.box.x2, d.box.y2);
  }
  write_ppm(a.out, im);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-modal UI control detection"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--count", gen.count, "Number of samples")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Dataset seed");
  g->add_option("--catalog", gen.catalog, "Class catalog: full23 or twin12");
  g->add_option("--canvas", gen.canvas, "Image side in pixels");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a baseline, or fine-tune a fusion model from one");
  t->add_option("--data", tr.data, "Dataset directory");
  t->add_option("--config", tr.config, "Run configuration (JSON)");
  t->add_option("--fusion", tr.fusion, "none, add, wsum or conv");
  t->add_option("--xattn", tr.xattn, "Cross-attention modules: 0, 3, 4 or 5");
  t->add_option("--init", tr.init, "Baseline checkpoint (required for fusion models)");
  t->add_option("--external-text", tr.external, "Precomputed text embeddings (MMTE)");
  t->add_option("--out", tr.out, "Checkpoint to write")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  e->add_option("--split", ev.split, "train, val or test");
  e->add_option("--report", ev.report, "Report JSON to write")->required();
  e->add_option("--external-text", ev.external, "Precomputed text embeddings (MMTE)");

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Evaluate with corrupted descriptions");
  b->add_option("--mode", ab.mode, "mismatch or partial")->required();
  b->add_option("--class", ab.cls, "Class whose mentions are removed (partial)");
  b->add_option("--ckpt", ab.ckpt, "Fusion checkpoint")->required();
  b->add_option("--data", ab.data, "Dataset directory")->required();
  b->add_option("--ref", ab.ref, "Reference report for the deltas")->required();
  b->add_option("--report", ab.report, "Report JSON to write")->required();
  b->add_option("--split", ab.split, "train, val or test");
  b->add_option("--seed", ab.seed, "Corruption seed");

  BenchArgs be;
  auto* c = app.add_subcommand("bench", "Parameter counts and timings");
  c->add_option("--ckpt", be.ckpt, "Checkpoint")->required();
  c->add_option("--data", be.data, "Dataset directory")->required();
  c->add_option("--report", be.report, "Report JSON to write")->required();
  c->add_option("--epochs", be.epochs, "Training epochs to time");
  c->add_option("--images", be.images, "Minimum images to time")->check(CLI::PositiveNumber);

  RenderArgs re;
  auto* r = app.add_subcommand("render", "Draw detections on one image");
  r->add_option("--data", re.data, "Dataset directory")->required();
  r->add_option("--image", re.image, "Sample id, e.g. 000042")->required();
  r->add_option("--ckpt", re.ckpt, "Checkpoint")->required();
  r->add_option("--out", re.out, "PPM to write")->required();
  r->add_option("--conf", re.conf, "Minimum confidence to draw");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kUsage;
  }

  try {
    thread_limit();  // validate MMUI_THREADS up front
    if (*g) cmd_gen(gen);
    else if (*t) cmd_train(tr);
    else if (*e) cmd_eval(ev);
    else if (*b) cmd_ablate(ab);
    else if (*c) cmd_bench(be);
    else if (*r) cmd_render(re);
  } catch (const UsageError& err) {
    std::fprintf(stderr, "usage error: %s\n", err.what());
    return kUsage;
  } catch (const ConfigError& err) {
    std::fprintf(stderr, "configuration error: %s\n", err.what());
    return kUsage;
  } catch (const NumericError& err) {
    std::fprintf(stderr, "numerical error: %s\n", err.what());
    return kNumeric;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return kData;
  }
  return 0;
}
