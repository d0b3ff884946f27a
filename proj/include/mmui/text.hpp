#pragma once

// Textual scene descriptions: generation from ground truth, plain-text
// serialization, tokenization, feature-hashing embeddings, external embedding
// files and the two corruptions used by the ablations.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mmui/errors.hpp"
#include "mmui/rng.hpp"
#include "mmui/synth.hpp"
#include "mmui/tensor.hpp"

namespace mmui {

inline const std::array<std::string_view, 9>& position_vocabulary() {
  static const std::array<std::string_view, 9> v = {"top-left",    "top-center",    "top-right",
                                                    "middle-left", "middle-center", "middle-right",
                                                    "bottom-left", "bottom-center", "bottom-right"};
  return v;
}

inline bool is_position_phrase(std::string_view s) {
  for (auto p : position_vocabulary()) {
    if (p == s) return true;
  }
  return false;
}

/// Grid cell of a point on a square canvas, as a position phrase.
inline std::string position_phrase(double cx, double cy, double canvas) {
  auto cell = [&](double v) { return std::clamp(static_cast<int>(std::floor(3.0 * v / canvas)), 0, 2); };
  return std::string(position_vocabulary()[static_cast<std::size_t>(cell(cy) * 3 + cell(cx))]);
}

struct ControlDescription {
  std::string label;
  std::string size;
  std::string position;
  std::string shape;
  std::string color;
  bool operator==(const ControlDescription&) const = default;
};

struct DescriptionDoc {
  std::vector<ControlDescription> blocks;
  bool operator==(const DescriptionDoc&) const = default;
};

namespace detail {

inline std::string shape_phrase(Glyph g, int w, int h) {
  switch (g) {
    case Glyph::Button: return "rounded rectangle";
    case Glyph::CheckboxTick:
    case Glyph::CheckboxEmpty: return "small square";
    case Glyph::RadioSelected:
    case Glyph::RadioUnselected: return "circle";
    case Glyph::HorizontalAxis: return "horizontal line";
    case Glyph::VerticalAxis: return "vertical line";
    case Glyph::Text:
    case Glyph::TextareaLabel: return "text line";
    default: break;
  }
  if (w >= 2 * h) return "wide rectangle";
  if (h >= 2 * w) return "tall rectangle";
  return w == h ? "square" : "rectangle";
}

inline std::string color_phrase(Glyph g, const ControlSpec& c, const Scene& s) {
  const std::string fill = fill_palette()[c.fill].name;
  const std::string bg = background_palette()[s.background].name;
  const std::string ink = c.dark_text ? "black" : "white";
  switch (g) {
    case Glyph::Button: return ink + " text on " + fill;
    case Glyph::Text: return (c.dark_text ? "black" : fill) + " text on " + bg;
    case Glyph::Input:
    case Glyph::Dropdown:
    case Glyph::Table:
    case Glyph::DateArea: return "white with " + fill + " accents";
    case Glyph::CheckboxTick:
    case Glyph::CheckboxEmpty:
    case Glyph::RadioSelected:
    case Glyph::RadioUnselected: return fill + " border, white inside";
    case Glyph::HorizontalAxis:
    case Glyph::VerticalAxis: return "black on " + bg;
    default: return fill + " on " + bg;
  }
}

}  // namespace detail

/// One block per control, in scene order.
inline DescriptionDoc generate_description(const Scene& scene, const ClassCatalog& catalog) {
  if (scene.controls.empty()) throw ContractError("generate_description: scene has no controls");
  DescriptionDoc doc;
  for (const auto& c : scene.controls) {
    const Glyph g = catalog.glyphs.at(c.class_id);
    ControlDescription d;
    d.label = catalog.names.at(c.class_id);
    d.size = "~" + std::to_string(c.box.w) + "x" + std::to_string(c.box.h) + " px";
    d.position = position_phrase(c.box.x + c.box.w / 2.0, c.box.y + c.box.h / 2.0, scene.canvas);
    d.shape = detail::shape_phrase(g, c.box.w, c.box.h);
    d.color = detail::color_phrase(g, c, scene);
    doc.blocks.push_back(std::move(d));
  }
  return doc;
}

/// Header line naming the control, then one line per attribute.
inline std::string serialize_block(const ControlDescription& d) {
  std::string s;
  s += d.label + "\n";
  s += "Label: \"" + d.label + "\"\n";
  s += "Size: " + d.size + "\n";
  s += "Position: " + d.position + "\n";
  s += "Shape: " + d.shape + "\n";
  s += "Color: " + d.color + "\n";
  return s;
}

/// Blocks separated by one blank line.
inline std::string serialize(const DescriptionDoc& doc) {
  std::string s;
  for (std::size_t i = 0; i < doc.blocks.size(); ++i) {
    if (i) s += "\n";
    s += serialize_block(doc.blocks[i]);
  }
  return s;
}

inline DescriptionDoc parse_description(std::string_view text, const std::string& source = "<text>") {
  std::vector<std::string> lines;
  {
    std::string cur;
    for (char ch : text) {
      if (ch == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    if (!cur.empty()) lines.push_back(cur);
  }
  auto fail = [&](std::size_t line, const std::string& why) -> FormatError {
    return FormatError(source + ":" + std::to_string(line + 1) + ": " + why);
  };
  auto field = [&](std::size_t line, std::string_view key) {
    if (line >= lines.size()) throw fail(line, "missing '" + std::string(key) + "' line");
    const std::string& l = lines[line];
    if (l.rfind(key, 0) != 0) throw fail(line, "expected '" + std::string(key) + "'");
    return l.substr(key.size());
  };

  DescriptionDoc doc;
  std::size_t i = 0;
  while (i < lines.size()) {
    if (lines[i].empty()) {
      ++i;
      continue;
    }
    const std::string header = lines[i];
    ControlDescription d;
    std::string label = field(i + 1, "Label: ");
    if (label.size() < 2 || label.front() != '"' || label.back() != '"') throw fail(i + 1, "label must be quoted");
    d.label = label.substr(1, label.size() - 2);
    if (d.label != header) throw fail(i, "header '" + header + "' does not match label '" + d.label + "'");
    d.size = field(i + 2, "Size: ");
    d.position = field(i + 3, "Position: ");
    if (!is_position_phrase(d.position)) throw fail(i + 3, "unknown position phrase '" + d.position + "'");
    d.shape = field(i + 4, "Shape: ");
    d.color = field(i + 5, "Color: ");
    doc.blocks.push_back(std::move(d));
    i += 6;
    if (i < lines.size() && !lines[i].empty()) throw fail(i, "expected blank line between blocks");
  }
  return doc;
}

/// Lowercase runs of letters and runs of digits; everything else separates.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  int kind = 0;  // 1 letters, 2 digits
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
    kind = 0;
  };
  for (unsigned char ch : text) {
    const int k = std::isalpha(ch) ? 1 : std::isdigit(ch) ? 2 : 0;
    if (k == 0) {
      flush();
      continue;
    }
    if (k != kind) flush();
    kind = k;
    cur += static_cast<char>(std::tolower(ch));
  }
  flush();
  return out;
}

// Smallest seed for which every label of both catalogs hashes to a distinct
// bag at D = 64 (checked exhaustively in the tests).
inline constexpr std::uint64_t kEmbedSeed = 3;

/// Signed feature hashing of a token multiset, L2-normalised; e0 if nothing hashes.
inline std::vector<float> embed_tokens(const std::vector<std::string>& tokens, std::size_t dim,
                                       std::uint64_t seed = kEmbedSeed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  std::vector<double> acc(dim, 0.0);
  for (const auto& t : tokens) {
    const std::uint64_t h1 = fnv1a64(t, splitmix64(seed));
    const std::uint64_t h2 = splitmix64(h1 ^ seed);
    acc[h1 % dim] += (h2 >> 63) ? -1.0 : 1.0;
  }
  double norm = 0;
  for (double v : acc) norm += v * v;
  std::vector<float> out(dim, 0.0f);
  if (norm == 0) {
    out[0] = 1.0f;
    return out;
  }
  norm = std::sqrt(norm);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(acc[i] / norm);
  return out;
}

inline std::vector<float> embed_block(const ControlDescription& d, std::size_t dim, std::uint64_t seed = kEmbedSeed) {
  return embed_tokens(tokenize(serialize_block(d)), dim, seed);
}

/// One vector per described control, T >= 1.
struct TextEmbeddingSeq {
  std::size_t dim = 0;
  std::vector<std::vector<float>> vectors;

  std::size_t length() const { return vectors.size(); }

  template <class T = float>
  Tensor<T> to_tensor() const {
    Tensor<T> t({vectors.size(), dim});
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      for (std::size_t j = 0; j < dim; ++j) t[i * dim + j] = static_cast<T>(vectors[i][j]);
    }
    return t;
  }
  bool operator==(const TextEmbeddingSeq&) const = default;
};

inline TextEmbeddingSeq embed_doc(const DescriptionDoc& doc, std::size_t dim, std::uint64_t seed = kEmbedSeed) {
  TextEmbeddingSeq s;
  s.dim = dim;
  for (const auto& b : doc.blocks) s.vectors.push_back(embed_block(b, dim, seed));
  if (s.vectors.empty()) s.vectors.push_back(embed_tokens({}, dim, seed));
  return s;
}

/// Every label becomes a different catalog class and every position a different grid cell.
inline DescriptionDoc corrupt_mismatch(const DescriptionDoc& doc, const ClassCatalog& catalog, std::uint64_t seed) {
  if (catalog.size() < 2) throw ConfigError("corrupt_mismatch: catalog needs at least two classes");
  Rng rng(seed);
  DescriptionDoc out = doc;
  for (auto& b : out.blocks) {
    std::vector<std::string_view> labels;
    for (const auto& n : catalog.names) {
      if (n != b.label) labels.push_back(n);
    }
    b.label = std::string(labels[std::uniform_int_distribution<std::size_t>(0, labels.size() - 1)(rng)]);
    std::vector<std::string_view> cells;
    for (auto p : position_vocabulary()) {
      if (p != b.position) cells.push_back(p);
    }
    b.position = std::string(cells[std::uniform_int_distribution<std::size_t>(0, cells.size() - 1)(rng)]);
  }
  return out;
}

/// Drops every block describing `target_class`; the rest is untouched.
inline DescriptionDoc corrupt_partial(const DescriptionDoc& doc, std::string_view target_class) {
  DescriptionDoc out;
  for (const auto& b : doc.blocks) {
    if (b.label != target_class) out.blocks.push_back(b);
  }
  return out;
}

// External embeddings: "MMTE", u32 version, u32 D, then records of
// (u32 id length, id bytes, u32 T, T*D f32), all little-endian.

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

inline void put_f32(std::string& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

class ByteReader {
 public:
  ByteReader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

  bool done() const { return pos_ == data_.size(); }
  std::size_t offset() const { return pos_; }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(source_ + ": " + why + " at byte offset " + std::to_string(pos_));
  }

  std::string bytes(std::size_t n) {
    if (data_.size() - pos_ < n) fail("truncated data (need " + std::to_string(n) + " bytes)");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32() {
    const std::string b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    const std::uint64_t lo = u32();
    return lo | (static_cast<std::uint64_t>(u32()) << 32);
  }

  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }

 private:
  std::string data_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace detail

inline void save_external_embeddings(const std::string& path, const std::map<std::string, TextEmbeddingSeq>& items,
                                     std::size_t dim) {
  std::string out = "MMTE";
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(dim));
  for (const auto& [id, seq] : items) {
    if (seq.dim != dim) throw ConfigError("embedding for '" + id + "' has dimension " + std::to_string(seq.dim));
    detail::put_u32(out, static_cast<std::uint32_t>(id.size()));
    out += id;
    detail::put_u32(out, static_cast<std::uint32_t>(seq.vectors.size()));
    for (const auto& v : seq.vectors) {
      for (float f : v) detail::put_f32(out, f);
    }
  }
  detail::write_file(path, out);
}

inline std::map<std::string, TextEmbeddingSeq> load_external_embeddings(const std::string& path,
                                                                        std::size_t expected_dim) {
  detail::ByteReader r(detail::read_file(path), path);
  if (r.bytes(4) != "MMTE") r.fail("bad magic");
  if (const auto v = r.u32(); v != 1) r.fail("unsupported version " + std::to_string(v));
  const std::size_t d = r.u32();
  if (d != expected_dim) r.fail("dimension " + std::to_string(d) + " does not match configured " +
                                std::to_string(expected_dim));
  std::map<std::string, TextEmbeddingSeq> out;
  while (!r.done()) {
    const std::string id = r.bytes(r.u32());
    const std::size_t t = r.u32();
    if (t == 0) r.fail("record '" + id + "' has no vectors");
    TextEmbeddingSeq seq;
    seq.dim = d;
    for (std::size_t i = 0; i < t; ++i) {
      std::vector<float> v(d);
      for (auto& f : v) {
        f = r.f32();
        if (!std::isfinite(f)) r.fail("non-finite value in record '" + id + "'");
      }
      seq.vectors.push_back(std::move(v));
    }
    if (!out.emplace(id, std::move(seq)).second) r.fail("duplicate record '" + id + "'");
  }
  return out;
}

}  // namespace mmui
