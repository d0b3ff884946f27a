#pragma once

// On-disk dataset: images/<id>.ppm, labels/<id>.txt, texts/<id>.txt,
// manifest.txt ("<id> <split>" per line) and classes.txt (one name per line).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mmui/errors.hpp"
#include "mmui/rng.hpp"
#include "mmui/synth.hpp"
#include "mmui/text.hpp"

namespace mmui {

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

struct SplitSizes {
  std::size_t train = 0;  // excludes validation
  std::size_t val = 0;
  std::size_t test = 0;
};

/// 70% train+val (rounded half up), 10% of that validation (rounded half up), the rest test.
inline SplitSizes split_sizes(std::size_t count) {
  const std::size_t trainval = (7 * count + 5) / 10;
  const std::size_t val = (trainval + 5) / 10;
  return {trainval - val, val, count - trainval};
}

/// Split of sample `index`: the first train+val indices are training data, with the
/// last `val` of them held out for validation; the remainder is test.
inline Split split_of(std::size_t index, std::size_t count) {
  const auto s = split_sizes(count);
  if (index < s.train) return Split::Train;
  if (index < s.train + s.val) return Split::Val;
  return Split::Test;
}

inline std::string sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

struct Sample {
  std::string id;
  Split split = Split::Train;
  RgbImage image;
  std::vector<Annotation> annotations;
  DescriptionDoc description;
};

struct Dataset {
  ClassCatalog catalog;
  std::vector<Sample> samples;

  std::vector<std::size_t> indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].split == s) out.push_back(i);
    }
    return out;
  }
};

// ---- PPM ----

inline std::string encode_ppm(const RgbImage& im) {
  std::string s = "P6\n" + std::to_string(im.width) + " " + std::to_string(im.height) + "\n255\n";
  s.append(reinterpret_cast<const char*>(im.pixels.data()), im.pixels.size());
  return s;
}

inline RgbImage decode_ppm(const std::string& bytes, const std::string& source) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) { return FormatError(source + ": " + why); };
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&] {
    skip_ws();
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw fail("malformed PPM header");
    return std::stoi(bytes.substr(start, pos - start));
  };
  if (bytes.compare(0, 2, "P6") != 0) throw fail("not a binary PPM (P6)");
  pos = 2;
  const int w = number(), h = number(), maxval = number();
  if (w <= 0 || h <= 0) throw fail("bad PPM size");
  if (maxval != 255) throw fail("PPM maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) throw fail("malformed PPM header");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos != need) throw fail("PPM pixel data has wrong size");
  RgbImage im;
  im.width = w;
  im.height = h;
  im.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return im;
}

inline void write_ppm(const std::string& path, const RgbImage& im) { detail::write_file(path, encode_ppm(im)); }
inline RgbImage read_ppm(const std::string& path) { return decode_ppm(detail::read_file(path), path); }

// ---- labels ----

inline std::string format_labels(const std::vector<Annotation>& anns) {
  std::string s;
  char buf[160];
  for (const auto& a : anns) {
    std::snprintf(buf, sizeof buf, "%zu %.9g %.9g %.9g %.9g\n", a.class_id, a.cx, a.cy, a.w, a.h);
    s += buf;
  }
  return s;
}

inline std::vector<Annotation> parse_labels(const std::string& text, std::size_t num_classes,
                                            const std::string& source) {
  std::vector<Annotation> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    auto fail = [&](const std::string& why) {
      return FormatError(source + ":" + std::to_string(line_no) + ": " + why);
    };
    const char* p = line.c_str();
    char* q = nullptr;
    const unsigned long long cls = std::strtoull(p, &q, 10);
    if (q == p) throw fail("expected class id");
    Annotation a;
    a.class_id = static_cast<std::size_t>(cls);
    float* fields[4] = {&a.cx, &a.cy, &a.w, &a.h};
    for (float* f : fields) {
      p = q;
      *f = std::strtof(p, &q);
      if (q == p) throw fail("expected 5 fields: class_id cx cy w h");
      if (!(*f >= 0.0f && *f <= 1.0f)) throw fail("coordinate outside [0,1]");
    }
    while (*q == ' ' || *q == '\t' || *q == '\r') ++q;
    if (*q != '\0') throw fail("trailing characters");
    if (a.class_id >= num_classes) throw fail("class id " + std::to_string(cls) + " out of range");
    out.push_back(a);
  }
  return out;
}

// ---- whole dataset ----

struct GeneratedSample {
  Scene scene;
  RgbImage image;
  std::vector<Annotation> annotations;
  DescriptionDoc description;
};

/// Sample `index` of a dataset; depends only on (catalog, canvas, seed, index).
inline GeneratedSample generate_sample(const ClassCatalog& catalog, int canvas, std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  GeneratedSample g;
  g.scene = sample_scene(catalog, canvas, rng);
  g.image = render_rgb(g.scene, catalog);
  g.annotations = scene_annotations(g.scene);
  g.description = generate_description(g.scene, catalog);
  return g;
}

inline void write_dataset(const std::string& dir, std::size_t count, const ClassCatalog& catalog, std::uint64_t seed,
                          int canvas = 256) {
  namespace fs = std::filesystem;
  catalog.validate();
  if (count == 0) throw ConfigError("dataset count must be positive");
  for (const char* sub : {"images", "labels", "texts"}) fs::create_directories(fs::path(dir) / sub);
  std::string manifest, classes;
  for (const auto& n : catalog.names) classes += n + "\n";
  for (std::size_t i = 0; i < count; ++i) {
    const auto g = generate_sample(catalog, canvas, seed, i);
    const std::string id = sample_id(i);
    write_ppm((fs::path(dir) / "images" / (id + ".ppm")).string(), g.image);
    detail::write_file((fs::path(dir) / "labels" / (id + ".txt")).string(), format_labels(g.annotations));
    detail::write_file((fs::path(dir) / "texts" / (id + ".txt")).string(), serialize(g.description));
    manifest += id + " " + split_name(split_of(i, count)) + "\n";
  }
  detail::write_file((fs::path(dir) / "manifest.txt").string(), manifest);
  detail::write_file((fs::path(dir) / "classes.txt").string(), classes);
}

/// Catalog from classes.txt; a name list matching a built-in catalog recovers its twin pairs.
inline ClassCatalog load_catalog(const std::string& path) {
  const std::string text = detail::read_file(path);
  std::vector<std::string> names;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) names.push_back(line);
    pos = end + 1;
  }
  for (const auto& c : {twin12_catalog(), full23_catalog()}) {
    if (c.names == names) return c;
  }
  if (names.empty()) throw FormatError(path + ": no class names");
  ClassCatalog c;
  c.name = "custom";
  c.names = names;
  c.glyphs.assign(names.size(), Glyph::Icon);
  c.weights.assign(names.size(), 1.0);
  return c;
}

/// In-memory equivalent of write_dataset followed by load_dataset.
inline Dataset generate_dataset(std::size_t count, const ClassCatalog& catalog, std::uint64_t seed, int canvas = 256) {
  catalog.validate();
  if (count == 0) throw ConfigError("dataset count must be positive");
  Dataset ds;
  ds.catalog = catalog;
  for (std::size_t i = 0; i < count; ++i) {
    auto g = generate_sample(catalog, canvas, seed, i);
    ds.samples.push_back({sample_id(i), split_of(i, count), std::move(g.image), std::move(g.annotations),
                          std::move(g.description)});
  }
  return ds;
}

/// Reads a dataset directory. With `with_text` false the texts/ directory is never
/// touched and descriptions stay empty.
inline Dataset load_dataset(const std::string& dir, bool with_text = true) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.catalog = load_catalog((fs::path(dir) / "classes.txt").string());
  const std::string manifest_path = (fs::path(dir) / "manifest.txt").string();
  const std::string manifest = detail::read_file(manifest_path);
  std::size_t pos = 0, line_no = 0;
  while (pos < manifest.size()) {
    std::size_t end = manifest.find('\n', pos);
    if (end == std::string::npos) end = manifest.size();
    const std::string line = manifest.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    auto fail = [&](const std::string& why) {
      return FormatError(manifest_path + ":" + std::to_string(line_no) + ": " + why);
    };
    if (sp == std::string::npos) throw fail("expected '<id> <split>'");
    Sample s;
    s.id = line.substr(0, sp);
    const std::string split = line.substr(sp + 1);
    if (split == "train") s.split = Split::Train;
    else if (split == "val") s.split = Split::Val;
    else if (split == "test") s.split = Split::Test;
    else throw fail("unknown split '" + split + "'");
    for (const auto& other : ds.samples) {
      if (other.id == s.id) throw fail("duplicate id " + s.id);
    }
    s.image = read_ppm((fs::path(dir) / "images" / (s.id + ".ppm")).string());
    const std::string label_path = (fs::path(dir) / "labels" / (s.id + ".txt")).string();
    s.annotations = parse_labels(detail::read_file(label_path), ds.catalog.size(), label_path);
    if (with_text) {
      const std::string text_path = (fs::path(dir) / "texts" / (s.id + ".txt")).string();
      s.description = parse_description(detail::read_file(text_path), text_path);
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw FormatError(manifest_path + ": empty manifest");
  return ds;
}

}  // namespace mmui
