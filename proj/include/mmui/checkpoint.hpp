#pragma once

// Run configuration (JSON) and binary checkpoints.
//
// Checkpoint layout, all integers little-endian:
//   "MMUI" | u32 version=1 | u32 len, RunConfig JSON | u32 tensor count |
//   per tensor: u32 name-len, name, u8 rank, u32 dims..., f32 data |
//   u64 FNV-1a of every preceding byte

#include <fstream>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "mmui/detect.hpp"
#include "mmui/detector.hpp"
#include "mmui/text.hpp"

namespace mmui {

struct RunConfig {
  DetectorConfig model;
  std::string data_dir;
  std::string output_dir;
  std::string init;           // baseline checkpoint a fusion run starts from
  std::string external_text;  // optional MMTE file replacing generated embeddings
  std::size_t epochs = 25;
  std::size_t batch = 5;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  double text_dropout = 0.0;
  bool twin_abstain = false;  // see TrainOptions::twin_abstain
  LossWeights loss;
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  const auto& m = c.model;
  j["input_size"] = m.input_size;
  j["channels"] = m.channels;
  j["c3_depth"] = m.c3_depth;
  j["num_classes"] = m.num_classes;
  nlohmann::ordered_json anchors = nlohmann::ordered_json::array();
  for (const auto& scale : m.anchors) {
    nlohmann::ordered_json s = nlohmann::ordered_json::array();
    for (const auto& a : scale) s.push_back({a.w, a.h});
    anchors.push_back(s);
  }
  j["anchors"] = anchors;
  j["fusion"] = std::string(fusion_name(m.fusion));
  j["xattn_count"] = m.xattn_count;
  j["text_dim"] = m.text_dim;
  j["init_seed"] = m.seed;
  j["scale_scores"] = m.scale_scores;
  j["data_dir"] = c.data_dir;
  j["output_dir"] = c.output_dir;
  j["init"] = c.init;
  j["external_text"] = c.external_text;
  j["epochs"] = c.epochs;
  j["batch"] = c.batch;
  j["lr"] = c.lr;
  j["seed"] = c.seed;
  j["text_dropout"] = c.text_dropout;
  j["twin_abstain"] = c.twin_abstain;
  j["loss_box"] = c.loss.box;
  j["loss_obj"] = c.loss.obj;
  j["loss_cls"] = c.loss.cls;
  return j;
}

/// Missing keys keep their defaults; unknown keys and ill-typed values are errors.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::string& source = "config") {
  if (!j.is_object()) throw ConfigError(source + ": expected a JSON object");
  static const std::set<std::string> known = {
      "input_size", "channels", "c3_depth", "num_classes", "anchors", "fusion", "xattn_count",
      "text_dim", "init_seed", "scale_scores", "data_dir", "output_dir", "init", "external_text", "epochs", "batch",
      "lr", "seed", "text_dropout", "twin_abstain", "loss_box", "loss_obj", "loss_cls"};
  for (const auto& [k, _] : j.items()) {
    if (!known.count(k)) throw ConfigError(source + ": unknown key '" + k + "'");
  }
  RunConfig c;
  auto& m = c.model;
  try {
    auto get = [&](const char* key, auto& dst) {
      if (j.contains(key)) j.at(key).get_to(dst);
    };
    get("input_size", m.input_size);
    get("channels", m.channels);
    get("c3_depth", m.c3_depth);
    get("num_classes", m.num_classes);
    if (j.contains("anchors")) {
      const auto& a = j.at("anchors");
      if (!a.is_array() || a.size() != 3) throw ConfigError(source + ": anchors must list 3 scales");
      for (std::size_t s = 0; s < 3; ++s) {
        m.anchors[s].clear();
        for (const auto& wh : a[s]) {
          if (!wh.is_array() || wh.size() != 2) throw ConfigError(source + ": each anchor is [w, h]");
          m.anchors[s].push_back({wh[0].get<float>(), wh[1].get<float>()});
        }
      }
    }
    if (j.contains("fusion")) m.fusion = parse_fusion(j.at("fusion").get<std::string>());
    get("xattn_count", m.xattn_count);
    get("text_dim", m.text_dim);
    get("init_seed", m.seed);
    get("scale_scores", m.scale_scores);
    get("data_dir", c.data_dir);
    get("output_dir", c.output_dir);
    get("init", c.init);
    get("external_text", c.external_text);
    get("epochs", c.epochs);
    get("batch", c.batch);
    get("lr", c.lr);
    get("seed", c.seed);
    get("text_dropout", c.text_dropout);
    get("twin_abstain", c.twin_abstain);
    get("loss_box", c.loss.box);
    get("loss_obj", c.loss.obj);
    get("loss_cls", c.loss.cls);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  m.validate();
  if (c.batch == 0) throw ConfigError(source + ": batch must be positive");
  if (!(c.lr > 0)) throw ConfigError(source + ": lr must be positive");
  if (!(c.text_dropout >= 0 && c.text_dropout < 1)) throw ConfigError(source + ": text_dropout must be in [0, 1)");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  const std::string text = detail::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j, path);
}

// ---- checkpoints ----

template <class T>
std::string encode_checkpoint(const DetectorModel<T>& model, const RunConfig& cfg) {
  RunConfig c = cfg;
  c.model = model.config();
  std::string out = "MMUI";
  detail::put_u32(out, 1);
  const std::string js = to_json(c).dump();
  detail::put_u32(out, static_cast<std::uint32_t>(js.size()));
  out += js;
  const auto& entries = model.params().entries();
  detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out += static_cast<char>(t.shape().size());
    for (auto d : t.shape()) detail::put_u32(out, static_cast<std::uint32_t>(d));
    for (T v : t.data()) detail::put_f32(out, static_cast<float>(v));
  }
  const std::uint64_t h = fnv1a64(out.data(), out.size());
  for (int i = 0; i < 8; ++i) out += static_cast<char>((h >> (8 * i)) & 0xff);
  return out;
}

template <class T>
void save_checkpoint(const DetectorModel<T>& model, const RunConfig& cfg, const std::string& path) {
  detail::write_file(path, encode_checkpoint(model, cfg));
}

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct CheckpointContents {
  RunConfig config;
  std::vector<NamedTensor> tensors;
};

inline CheckpointContents decode_checkpoint(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 16) throw FormatError(source + ": file too short for a checkpoint");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[body + i])) << (8 * i);
  if (fnv1a64(bytes.data(), body) != stored) throw FormatError(source + ": checksum mismatch (file is corrupted)");
  detail::ByteReader r(bytes.substr(0, body), source);
  if (r.bytes(4) != "MMUI") r.fail("bad magic");
  if (const auto v = r.u32(); v != 1) r.fail("unsupported checkpoint version " + std::to_string(v));
  CheckpointContents c;
  const std::string js = r.bytes(r.u32());
  try {
    c.config = run_config_from_json(nlohmann::json::parse(js), source);
  } catch (const nlohmann::json::parse_error& e) {
    r.fail(std::string("config is not valid JSON: ") + e.what());
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  const std::size_t count = r.u32();
  for (std::size_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.bytes(r.u32());
    const std::size_t rank = static_cast<unsigned char>(r.bytes(1)[0]);
    std::size_t n = 1;
    for (std::size_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u32());
      n *= t.shape.back();
    }
    if (n > (body - r.offset()) / 4) r.fail("tensor '" + t.name + "' larger than the file");
    t.data.resize(n);
    for (auto& v : t.data) v = r.f32();
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) r.fail("trailing bytes before checksum");
  return c;
}

namespace detail {

template <class T>
ParameterRegistry<T> registry_of(const std::vector<NamedTensor>& tensors) {
  ParameterRegistry<T> reg;
  for (const auto& t : tensors) {
    reg.add(t.name, Tensor<T>(t.shape, std::vector<T>(t.data.begin(), t.data.end())));
  }
  return reg;
}

}  // namespace detail

template <class T>
struct LoadedModel {
  RunConfig config;
  DetectorModel<T> model;
};

/// Model exactly as saved; every parameter must be present with its saved shape.
template <class T = float>
LoadedModel<T> load_checkpoint(const std::string& path) {
  auto c = decode_checkpoint(detail::read_file(path), path);
  auto model = build_model<T>(c.config.model);
  const auto src = detail::registry_of<T>(c.tensors);
  const auto rep = transfer_parameters(src, model.params());
  if (!rep.initialized.empty()) throw FormatError(path + ": missing parameter '" + rep.initialized.front() + "'");
  if (!rep.ignored.empty()) throw FormatError(path + ": unexpected parameter '" + rep.ignored.front() + "'");
  model.set_baseline_initialized(true);
  return {std::move(c.config), std::move(model)};
}

/// Fusion model built from `cfg` with every shared parameter taken from a baseline
/// checkpoint; cross-attention parameters keep their initial values.
template <class T = float>
DetectorModel<T> init_from_baseline(const std::string& path, const DetectorConfig& cfg, TransferReport* report = nullptr) {
  auto c = decode_checkpoint(detail::read_file(path), path);
  if (c.config.model.fusion != FusionStrategy::None) {
    throw UsageError(path + " is a " + std::string(fusion_name(c.config.model.fusion)) +
                     " checkpoint; --init expects a baseline (fusion none) checkpoint");
  }
  auto model = build_model<T>(cfg);
  const auto src = detail::registry_of<T>(c.tensors);
  auto rep = transfer_parameters(src, model.params());
  if (!rep.ignored.empty()) throw FormatError(path + ": parameter '" + rep.ignored.front() + "' has no place in this model");
  model.set_baseline_initialized(true);
  if (report) *report = std::move(rep);
  return model;
}

}  // namespace mmui
