#pragma once

// Two-phase training (baseline from scratch, then fusion fine-tuning from the
// baseline weights), evaluation, text ablations and cost benchmarking.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mmui/dataset.hpp"
#include "mmui/detect.hpp"
#include "mmui/metrics.hpp"
#include "mmui/optim.hpp"
#include "mmui/text.hpp"

namespace mmui {

/// MMUI_THREADS, a positive integer capping worker threads; 1 when unset.
inline std::size_t thread_limit() {
  const char* env = std::getenv("MMUI_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw UsageError("MMUI_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<std::size_t>(v);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; results are written by index.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---- text for a sample ----

/// Text embeddings per sample: the external file when it lists the image, otherwise
/// the feature-hashing embedder over the sample's description (optionally transformed).
struct TextSource {
  std::size_t dim = 64;
  const std::map<std::string, TextEmbeddingSeq>* external = nullptr;
  std::function<DescriptionDoc(const Sample&, std::size_t index)> transform;  // corruption hook

  TextEmbeddingSeq embed(const Sample& s, std::size_t index) const {
    if (external) {
      if (auto it = external->find(s.id); it != external->end()) return it->second;
    }
    return embed_doc(transform ? transform(s, index) : s.description, dim);
  }
};

template <class T>
std::optional<Tensor<T>> model_text(const DetectorModel<T>& model, const TextSource& src, const Sample& s,
                                    std::size_t index) {
  if (!model.has_fusion()) return std::nullopt;
  return src.embed(s, index).template to_tensor<T>();
}

// ---- evaluation ----

template <class T>
std::vector<Detection> detect(const DetectorModel<T>& model, const Sample& s, const std::optional<Tensor<T>>& text,
                              const DecodeOptions& opt = {}) {
  NoGradGuard guard;
  return decode_detections(model.forward(image_to_tensor<T>(s.image), text), HeadGeometry::of(model.config()), opt);
}

template <class T>
MetricsReport evaluate(const DetectorModel<T>& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                       const TextSource& text, const DecodeOptions& opt = {}) {
  if (indices.empty()) throw UsageError("evaluation split is empty");
  if (model.config().num_classes != ds.catalog.size()) {
    throw ConfigError("model has " + std::to_string(model.config().num_classes) + " classes, dataset has " +
                      std::to_string(ds.catalog.size()));
  }
  std::vector<std::vector<Detection>> dets(indices.size());
  std::vector<std::vector<GroundTruth>> gts(indices.size());
  const double size = static_cast<double>(model.config().input_size);
  parallel_for(indices.size(), thread_limit(), [&](std::size_t i) {
    const auto& s = ds.samples[indices[i]];
    dets[i] = detect(model, s, model_text(model, text, s, indices[i]), opt);
    gts[i] = ground_truth(s.annotations, size);
  });
  return compute_metrics(dets, gts, ds.catalog.names);
}

enum class AblationMode { Mismatch, Partial };

/// Evaluation with corrupted descriptions; the model and dataset are untouched.
template <class T>
MetricsReport ablation_eval(const DetectorModel<T>& model, const Dataset& ds, const std::vector<std::size_t>& indices,
                            AblationMode mode, const std::string& target_class, std::uint64_t seed,
                            std::size_t dim) {
  if (!model.has_fusion()) throw UsageError("text ablations need a fusion model");
  TextSource src;
  src.dim = dim;
  if (mode == AblationMode::Partial) {
    if (!ds.catalog.find(target_class)) throw ConfigError("class '" + target_class + "' is not in the catalog");
    src.transform = [target_class](const Sample& s, std::size_t) { return corrupt_partial(s.description, target_class); };
  } else {
    const ClassCatalog catalog = ds.catalog;
    src.transform = [catalog, seed](const Sample& s, std::size_t index) {
      return corrupt_mismatch(s.description, catalog, derive_seed(seed, static_cast<std::uint64_t>(index)));
    };
  }
  return evaluate(model, ds, indices, src);
}

// ---- training ----

enum class Phase { Baseline, Finetune };

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0;        // mean per-image training loss
  double val_map50 = 0;
  double seconds = 0;
};

struct TrainOptions {
  Phase phase = Phase::Baseline;
  std::size_t epochs = 20;
  std::size_t batch = 5;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  LossWeights loss;
  /// Fine-tuning only: with this probability per sample and epoch, every block of one
  /// class mentioned in the description (chosen uniformly) is left out. Applies to
  /// generated descriptions, not to external embeddings.
  double text_dropout = 0.0;
  /// When the dropped class has a pixel-identical twin its instances keep box and
  /// objectness targets but no class target: without the text the label is unobservable.
  bool twin_abstain = false;
  const std::map<std::string, TextEmbeddingSeq>* external_text = nullptr;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> curve;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  double best_val_map50 = -1;
  std::size_t unassigned_gt = 0;  // summed over the training split, counted once
};

/// Loss CSV: header then one row per epoch.
inline std::string loss_curve_csv(const std::vector<EpochLog>& curve) {
  std::string s = "epoch,loss,val_map50\n";
  char buf[96];
  for (const auto& e : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e.epoch, e.loss, e.val_map50);
    s += buf;
  }
  return s;
}

template <class T>
TrainResult train(DetectorModel<T>& model, const Dataset& ds, const TrainOptions& opt) {
  if (opt.batch == 0) throw ConfigError("batch size must be positive");
  if (opt.phase == Phase::Baseline && model.has_fusion()) {
    throw UsageError("baseline phase trains the single-modal model; build it with fusion none");
  }
  if (opt.phase == Phase::Finetune) {
    if (!model.has_fusion()) throw UsageError("fine-tuning needs a model with fusion modules");
    if (!model.baseline_initialized()) {
      throw UsageError("fine-tuning must start from a trained baseline: train fusion none first, then load it with --init");
    }
  }
  if (model.config().num_classes != ds.catalog.size()) {
    throw ConfigError("model has " + std::to_string(model.config().num_classes) + " classes, dataset has " +
                      std::to_string(ds.catalog.size()));
  }
  const auto train_idx = ds.indices(Split::Train);
  const auto val_idx = ds.indices(Split::Val);
  if (train_idx.empty()) throw UsageError("training split is empty");

  const auto& cfg = model.config();
  const auto geo = HeadGeometry::of(cfg);
  const double size = static_cast<double>(cfg.input_size);
  Adam<T> adam(AdamOptions{opt.lr});
  TrainResult res;

  std::vector<Targets> targets;
  for (auto i : train_idx) {
    targets.push_back(assign_targets(ground_truth(ds.samples[i].annotations, size), cfg.anchors, cfg.input_size));
    res.unassigned_gt += targets.back().unassigned_gt;
  }
  TextSource full;
  full.dim = cfg.text_dim;
  full.external = opt.external_text;

  std::vector<std::vector<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto& [_, p] : model.params().entries()) best.emplace_back(p.data().begin(), p.data().end());
  };

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_idx.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(opt.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch) {
      const std::size_t end = std::min(order.size(), start + opt.batch);
      model.params().zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t local = order[b];
        const auto& s = ds.samples[train_idx[local]];
        std::optional<Tensor<T>> text;
        const Targets* tgt = &targets[local];
        Targets abstained;
        if (model.has_fusion()) {
          TextEmbeddingSeq seq;
          const bool external = opt.external_text && opt.external_text->count(s.id);
          if (opt.text_dropout > 0 && !external) {
            Rng drop(derive_seed(derive_seed(opt.seed ^ 0xD0D0ULL, static_cast<std::uint64_t>(epoch)),
                                 static_cast<std::uint64_t>(train_idx[local])));
            DescriptionDoc doc = s.description;
            if (std::bernoulli_distribution(opt.text_dropout)(drop) && !doc.blocks.empty()) {
              std::vector<std::string> labels;
              for (const auto& b : doc.blocks) {
                if (std::find(labels.begin(), labels.end(), b.label) == labels.end()) labels.push_back(b.label);
              }
              const std::string& gone = labels[std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(drop)];
              doc = corrupt_partial(doc, gone);
              const auto id = ds.catalog.find(gone);
              if (opt.twin_abstain && id && ds.catalog.twin_of(*id)) {
                abstained = targets[local];
                for (auto& p : abstained.positives) {
                  if (p.class_id == *id) p.class_known = false;
                }
                tgt = &abstained;
              }
            }
            seq = embed_doc(doc, cfg.text_dim);
          } else {
            seq = full.embed(s, train_idx[local]);
          }
          text = seq.template to_tensor<T>();
        }
        const auto out = model.forward(image_to_tensor<T>(s.image), text);
        LossComponents lc;
        auto loss = detection_loss(out, *tgt, geo, opt.loss, &lc);
        if (!std::isfinite(lc.total)) throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
        loss_sum += lc.total;
        auto scaled = scale(loss, static_cast<T>(1.0 / static_cast<double>(end - start)));
        backward(scaled);
      }
      adam.step(model.params());
      ++res.steps;
    }

    EpochLog log;
    log.epoch = epoch;
    log.loss = loss_sum / static_cast<double>(order.size());
    log.val_map50 = val_idx.empty() ? 0.0 : evaluate(model, ds, val_idx, full).all.ap50;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.curve.push_back(log);
    if (log.val_map50 > res.best_val_map50) {
      res.best_val_map50 = log.val_map50;
      res.best_epoch = epoch;
      snapshot();
    }
    if (opt.on_epoch) opt.on_epoch(log);
  }
  if (!best.empty()) {
    auto& entries = model.params().entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      std::copy(best[k].begin(), best[k].end(), entries[k].second.data().begin());
    }
  }
  return res;
}

// ---- cost ----

struct BenchReport {
  std::string variant;
  ParameterCounts params;
  std::size_t epochs_timed = 0;
  double mean_epoch_seconds = 0;
  std::size_t images_timed = 0;
  double mean_inference_seconds = 0;
};

/// Training time per epoch (averaged over `epochs` epochs on a copy of the model) and
/// inference time per image, run one by one over the test split and averaged over
/// at least `min_images` runs.
template <class T>
BenchReport bench(const DetectorModel<T>& model, const Dataset& ds, std::size_t epochs = 1,
                  std::size_t min_images = 100) {
  BenchReport r;
  r.variant = model.has_fusion() ? std::string(fusion_name(model.config().fusion)) + "/" +
                                       std::to_string(model.config().xattn_count)
                                 : "baseline";
  r.params = model.count_parameters();
  if (epochs > 0) {
    auto copy = clone_model(model);
    TrainOptions opt;
    opt.phase = model.has_fusion() ? Phase::Finetune : Phase::Baseline;
    copy.set_baseline_initialized(true);
    opt.epochs = epochs;
    Dataset no_val = ds;
    for (auto& s : no_val.samples) {
      if (s.split == Split::Val) s.split = Split::Test;  // keep epoch time to training only
    }
    const auto res = train(copy, no_val, opt);
    for (const auto& e : res.curve) r.mean_epoch_seconds += e.seconds;
    r.epochs_timed = res.curve.size();
    r.mean_epoch_seconds /= static_cast<double>(std::max<std::size_t>(1, r.epochs_timed));
  }
  auto test = ds.indices(Split::Test);
  if (test.empty()) test = ds.indices(Split::Train);
  TextSource src;
  src.dim = model.config().text_dim;
  double total = 0;
  std::size_t n = 0;
  while (n < std::max(min_images, test.size())) {
    const auto& s = ds.samples[test[n % test.size()]];
    const auto text = model_text(model, src, s, test[n % test.size()]);
    const auto img = image_to_tensor<T>(s.image);
    const auto t0 = std::chrono::steady_clock::now();
    {
      NoGradGuard guard;
      auto out = model.forward(img, text);
      auto d = decode_detections(out, HeadGeometry::of(model.config()));
      (void)d;
    }
    total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++n;
  }
  r.images_timed = n;
  r.mean_inference_seconds = total / static_cast<double>(n);
  return r;
}

inline nlohmann::ordered_json bench_json(const BenchReport& r) {
  nlohmann::ordered_json j;
  j["variant"] = r.variant;
  j["params"] = {{"backbone", r.params.backbone}, {"neck", r.params.neck}, {"head", r.params.head},
                 {"fusion", r.params.fusion}, {"total", r.params.total}};
  j["epochs_timed"] = r.epochs_timed;
  j["mean_epoch_seconds"] = r.mean_epoch_seconds;
  j["images_timed"] = r.images_timed;
  j["mean_inference_seconds"] = r.mean_inference_seconds;
  return j;
}

}  // namespace mmui
