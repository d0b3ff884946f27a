#pragma once

// Procedural UI screenshots with ground-truth boxes. Twin classes dispatch to
// the same glyph renderer, so they are pixel-identical and only the paired
// description can tell them apart.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mmui/errors.hpp"
#include "mmui/rng.hpp"
#include "mmui/tensor.hpp"

namespace mmui {

enum class Glyph {
  Button,
  CheckboxTick,
  CheckboxEmpty,
  Icon,
  Dropdown,
  Input,
  Text,
  Image,
  RadioSelected,
  RadioUnselected,
  HorizontalAxis,
  VerticalAxis,
  Menu,
  List,
  TabBar,
  Table,
  Tree,
  TextareaLabel,
  DescriptionList,
  Legend,
  Chart,
  Graph,
  DateArea,
};

struct ClassCatalog {
  std::string name;
  std::vector<std::string> names;
  std::vector<Glyph> glyphs;     // renderer per class
  std::vector<double> weights;   // sampling prior (unnormalised)
  std::vector<std::pair<std::size_t, std::size_t>> twin_pairs;

  std::size_t size() const { return names.size(); }

  std::optional<std::size_t> find(std::string_view n) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == n) return i;
    }
    return std::nullopt;
  }

  std::size_t index_of(std::string_view n) const {
    auto i = find(n);
    if (!i) throw ConfigError("class '" + std::string(n) + "' is not in catalog " + name);
    return *i;
  }

  std::optional<std::size_t> twin_of(std::size_t cls) const {
    for (auto [a, b] : twin_pairs) {
      if (a == cls) return b;
      if (b == cls) return a;
    }
    return std::nullopt;
  }

  std::vector<std::size_t> twin_classes() const {
    std::vector<std::size_t> out;
    for (auto [a, b] : twin_pairs) {
      out.push_back(a);
      out.push_back(b);
    }
    return out;
  }

  void validate() const {
    if (names.empty()) throw ConfigError("empty catalog");
    if (glyphs.size() != names.size() || weights.size() != names.size()) throw ConfigError("catalog arrays differ in length");
    for (std::size_t i = 0; i < names.size(); ++i) {
      for (std::size_t j = i + 1; j < names.size(); ++j) {
        if (names[i] == names[j]) throw ConfigError("duplicate class name " + names[i]);
      }
    }
    for (auto [a, b] : twin_pairs) {
      if (a >= size() || b >= size() || glyphs[a] != glyphs[b]) throw ConfigError("twin pair must share a renderer");
    }
  }
};

/// 12 classes: two pixel-identical twin pairs plus eight distinct controls; axes are rare.
inline ClassCatalog twin12_catalog() {
  ClassCatalog c;
  c.name = "twin12";
  c.names = {"Button", "Decoy_Button", "Checkbox_Checked", "Checkbox_Unchecked_Small", "Icon", "Dropdown",
             "Input", "Text", "Image", "Radio_Selected", "Horizontal_Axis", "Vertical_Axis"};
  c.glyphs = {Glyph::Button, Glyph::Button, Glyph::CheckboxTick, Glyph::CheckboxTick, Glyph::Icon, Glyph::Dropdown,
              Glyph::Input, Glyph::Text, Glyph::Image, Glyph::RadioSelected, Glyph::HorizontalAxis,
              Glyph::VerticalAxis};
  c.weights = {1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0.4, 0.4};
  c.twin_pairs = {{0, 1}, {2, 3}};
  return c;
}

/// The 23 UI control classes of the original corpus, one distinct glyph each.
inline ClassCatalog full23_catalog() {
  ClassCatalog c;
  c.name = "full23";
  c.names = {"Icon", "Dropdown", "Button", "Menu", "Input", "List", "TabBar", "Table",
             "Radio_Selected", "Radio_Unselected", "Checkbox_Unchecked", "Checkbox_Checked", "Tree", "Image",
             "Text", "Label_of_the_Textarea", "Description_List", "Legend", "Horizontal_Axis", "Chart", "Graph",
             "Vertical_Axis", "Date_area"};
  c.glyphs = {Glyph::Icon, Glyph::Dropdown, Glyph::Button, Glyph::Menu, Glyph::Input, Glyph::List, Glyph::TabBar,
              Glyph::Table, Glyph::RadioSelected, Glyph::RadioUnselected, Glyph::CheckboxEmpty, Glyph::CheckboxTick,
              Glyph::Tree, Glyph::Image, Glyph::Text, Glyph::TextareaLabel, Glyph::DescriptionList, Glyph::Legend,
              Glyph::HorizontalAxis, Glyph::Chart, Glyph::Graph, Glyph::VerticalAxis, Glyph::DateArea};
  c.weights.assign(c.names.size(), 1.0);
  c.weights[18] = 0.4;
  c.weights[21] = 0.4;
  return c;
}

inline ClassCatalog catalog_by_name(std::string_view n) {
  if (n == "twin12") return twin12_catalog();
  if (n == "full23") return full23_catalog();
  throw UsageError("unknown catalog '" + std::string(n) + "' (valid: full23, twin12)");
}

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct NamedColor {
  const char* name;
  Rgb rgb;
};

inline const std::array<NamedColor, 8>& fill_palette() {
  static const std::array<NamedColor, 8> p = {{{"blue", {40, 90, 200}},
                                               {"green", {40, 150, 70}},
                                               {"red", {200, 50, 50}},
                                               {"orange", {235, 140, 30}},
                                               {"gray", {120, 120, 120}},
                                               {"purple", {130, 60, 170}},
                                               {"teal", {30, 140, 150}},
                                               {"dark blue", {20, 40, 110}}}};
  return p;
}

inline const std::array<NamedColor, 4>& background_palette() {
  static const std::array<NamedColor, 4> p = {{{"white", {250, 250, 250}},
                                               {"light gray", {232, 232, 236}},
                                               {"cream", {248, 244, 230}},
                                               {"pale blue", {230, 238, 250}}}};
  return p;
}

struct PixelBox {
  int x = 0, y = 0, w = 0, h = 0;  // top-left corner and extent, pixels
  bool operator==(const PixelBox&) const = default;
};

struct ControlSpec {
  std::size_t class_id = 0;
  PixelBox box;
  std::uint8_t fill = 0;       // index into fill_palette()
  bool dark_text = false;      // ink colour for text-like strokes
  std::uint8_t variant = 0;    // glyph-specific detail (bars, rows, ...)
  bool operator==(const ControlSpec&) const = default;
};

struct Scene {
  int canvas = 256;
  std::uint8_t background = 0;  // index into background_palette()
  std::vector<ControlSpec> controls;
  std::uint64_t seed = 0;
  bool operator==(const Scene&) const = default;
};

/// Normalised YOLO-style label.
struct Annotation {
  std::size_t class_id = 0;
  float cx = 0, cy = 0, w = 0, h = 0;
  bool operator==(const Annotation&) const = default;
};

inline double box_iou(const PixelBox& a, const PixelBox& b) {
  const int ix = std::max(0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const int iy = std::max(0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = static_cast<double>(ix) * iy;
  const double uni = static_cast<double>(a.w) * a.h + static_cast<double>(b.w) * b.h - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace detail {

struct SizeRange {
  int wmin, wmax, hmin, hmax;
  bool square = false;
};

inline SizeRange glyph_size_range(Glyph g) {
  switch (g) {
    case Glyph::Button: return {40, 90, 16, 28};
    case Glyph::CheckboxTick:
    case Glyph::CheckboxEmpty:
    case Glyph::RadioSelected:
    case Glyph::RadioUnselected: return {12, 20, 12, 20, true};
    case Glyph::Icon: return {14, 28, 14, 28, true};
    case Glyph::Dropdown: return {50, 100, 16, 24};
    case Glyph::Input: return {60, 120, 16, 24};
    case Glyph::Text: return {40, 110, 10, 30};
    case Glyph::Image: return {30, 80, 30, 80};
    case Glyph::HorizontalAxis: return {80, 160, 8, 14};
    case Glyph::VerticalAxis: return {8, 14, 80, 160};
    case Glyph::Menu: return {80, 160, 14, 22};
    case Glyph::List: return {40, 80, 40, 90};
    case Glyph::TabBar: return {90, 170, 16, 24};
    case Glyph::Table: return {60, 120, 40, 90};
    case Glyph::Tree: return {40, 90, 40, 90};
    case Glyph::TextareaLabel: return {30, 70, 10, 14};
    case Glyph::DescriptionList: return {60, 110, 30, 60};
    case Glyph::Legend: return {30, 70, 20, 50};
    case Glyph::Chart: return {50, 100, 40, 90};
    case Glyph::Graph: return {50, 100, 40, 90};
    case Glyph::DateArea: return {50, 80, 40, 60};
  }
  return {20, 40, 20, 40};
}

}  // namespace detail

/// Samples 1–8 non-overlapping controls (pairwise IoU <= 0.1). Within one scene
/// each twin pair resolves to a single member, chosen by a fair coin.
inline Scene sample_scene(const ClassCatalog& catalog, int canvas, Rng& rng) {
  catalog.validate();
  Scene scene;
  scene.canvas = canvas;
  scene.seed = rng();
  Rng local(scene.seed);
  scene.background = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 3)(local));
  std::vector<std::size_t> twin_pick;
  for (auto [a, b] : catalog.twin_pairs) twin_pick.push_back(std::bernoulli_distribution(0.5)(local) ? b : a);

  std::discrete_distribution<std::size_t> class_dist(catalog.weights.begin(), catalog.weights.end());
  const double unit = canvas / 256.0;
  int target = std::uniform_int_distribution<int>(1, 8)(local);
  for (;;) {
    std::vector<ControlSpec> placed;
    int attempts = 0;
    while (static_cast<int>(placed.size()) < target && attempts < 1000) {
      ++attempts;
      ControlSpec c;
      c.class_id = class_dist(local);
      for (std::size_t p = 0; p < catalog.twin_pairs.size(); ++p) {
        auto [a, b] = catalog.twin_pairs[p];
        if (c.class_id == a || c.class_id == b) c.class_id = twin_pick[p];
      }
      const auto r = detail::glyph_size_range(catalog.glyphs[c.class_id]);
      int w = static_cast<int>(std::lround(std::uniform_int_distribution<int>(r.wmin, r.wmax)(local) * unit));
      int h = r.square ? w : static_cast<int>(std::lround(std::uniform_int_distribution<int>(r.hmin, r.hmax)(local) * unit));
      w = std::clamp(w, 4, canvas - 2);
      h = std::clamp(h, 4, canvas - 2);
      c.box = {std::uniform_int_distribution<int>(1, canvas - w - 1)(local),
               std::uniform_int_distribution<int>(1, canvas - h - 1)(local), w, h};
      c.fill = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 7)(local));
      c.dark_text = std::bernoulli_distribution(0.5)(local);
      c.variant = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(0, 255)(local));
      bool ok = true;
      for (const auto& other : placed) {
        if (box_iou(other.box, c.box) > 0.1) {
          ok = false;
          break;
        }
      }
      if (ok) placed.push_back(c);
    }
    if (static_cast<int>(placed.size()) == target) {
      scene.controls = std::move(placed);
      return scene;
    }
    target = std::max(1, target - 1);
  }
}

inline std::vector<Annotation> scene_annotations(const Scene& s) {
  std::vector<Annotation> out;
  const float c = static_cast<float>(s.canvas);
  for (const auto& ctl : s.controls) {
    out.push_back({ctl.class_id, (static_cast<float>(ctl.box.x) + ctl.box.w / 2.0f) / c,
                   (static_cast<float>(ctl.box.y) + ctl.box.h / 2.0f) / c, ctl.box.w / c, ctl.box.h / c});
  }
  return out;
}

/// 8-bit RGB raster, row-major, interleaved.
struct RgbImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {}) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
      pixels[i] = fill.r;
      pixels[i + 1] = fill.g;
      pixels[i + 2] = fill.b;
    }
  }

  Rgb at(int x, int y) const {
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    if (x < clip.x || y < clip.y || x >= clip.x + clip.w || y >= clip.y + clip.h) return;
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
  }
  bool operator==(const RgbImage& o) const { return width == o.width && height == o.height && pixels == o.pixels; }

  PixelBox clip{0, 0, 1 << 30, 1 << 30};  // drawing outside this box is discarded
};

namespace draw {

inline void fill_rect(RgbImage& im, int x, int y, int w, int h, Rgb c) {
  for (int j = y; j < y + h; ++j) {
    for (int i = x; i < x + w; ++i) im.set(i, j, c);
  }
}

inline void stroke_rect(RgbImage& im, int x, int y, int w, int h, int t, Rgb c) {
  fill_rect(im, x, y, w, t, c);
  fill_rect(im, x, y + h - t, w, t, c);
  fill_rect(im, x, y, t, h, c);
  fill_rect(im, x + w - t, y, t, h, c);
}

inline void hline(RgbImage& im, int x0, int x1, int y, int t, Rgb c) { fill_rect(im, x0, y, x1 - x0, t, c); }
inline void vline(RgbImage& im, int x, int y0, int y1, int t, Rgb c) { fill_rect(im, x, y0, t, y1 - y0, c); }

inline void line(RgbImage& im, int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    im.set(x0, y0, c);
    im.set(x0, y0 + 1, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

inline void disk(RgbImage& im, int cx2, int cy2, int r2, Rgb c, int inner2 = -1) {
  // Centre and radii in half-pixels so even sizes stay symmetric.
  for (int y = (cy2 - r2) / 2 - 1; y <= (cy2 + r2) / 2 + 1; ++y) {
    for (int x = (cx2 - r2) / 2 - 1; x <= (cx2 + r2) / 2 + 1; ++x) {
      const int dx = 2 * x + 1 - cx2, dy = 2 * y + 1 - cy2;
      const int d = dx * dx + dy * dy;
      if (d <= r2 * r2 && d > inner2 * inner2 * (inner2 >= 0)) im.set(x, y, c);
    }
  }
}

}  // namespace draw

inline Rgb ink_color(bool dark) { return dark ? Rgb{25, 25, 25} : Rgb{255, 255, 255}; }

/// Draws one control; depends on the glyph, box and style only, never the class name.
inline void render_glyph(RgbImage& im, Glyph g, const ControlSpec& c) {
  const auto [x, y, w, h] = c.box;
  const Rgb fill = fill_palette()[c.fill].rgb;
  const Rgb ink = ink_color(c.dark_text);
  const Rgb dark{30, 30, 30};
  const Rgb white{255, 255, 255};
  const int v = c.variant;
  switch (g) {
    case Glyph::Button:
      draw::fill_rect(im, x + 1, y, w - 2, h, fill);
      draw::fill_rect(im, x, y + 1, w, h - 2, fill);
      draw::hline(im, x + w / 4, x + 3 * w / 4, y + h / 2 - 1, 2, ink);
      break;
    case Glyph::CheckboxTick:
      draw::fill_rect(im, x, y, w, h, white);
      draw::stroke_rect(im, x, y, w, h, 2, fill);
      draw::line(im, x + w / 4, y + h / 2, x + w / 2 - 1, y + 3 * h / 4 - 1, dark);
      draw::line(im, x + w / 2 - 1, y + 3 * h / 4 - 1, x + 3 * w / 4, y + h / 4, dark);
      break;
    case Glyph::CheckboxEmpty:
      draw::fill_rect(im, x, y, w, h, white);
      draw::stroke_rect(im, x, y, w, h, 2, fill);
      break;
    case Glyph::Icon:
      draw::fill_rect(im, x, y, w, h, fill);
      draw::hline(im, x + w / 4, x + 3 * w / 4, y + h / 2 - 1, 2, white);
      draw::vline(im, x + w / 2 - 1, y + h / 4, y + 3 * h / 4, 2, white);
      break;
    case Glyph::Dropdown: {
      draw::fill_rect(im, x, y, w, h, white);
      draw::stroke_rect(im, x, y, w, h, 1, fill);
      draw::hline(im, x + 4, x + w / 2, y + h / 2 - 1, 2, dark);
      const int tx = x + w - h;
      for (int r = 0; r < h / 3; ++r) draw::hline(im, tx + r, tx + 2 * (h / 3) - r, y + h / 3 + r, 1, fill);
      break;
    }
    case Glyph::Input:
      draw::fill_rect(im, x, y, w, h, white);
      draw::stroke_rect(im, x, y, w, h, 1, {90, 90, 90});
      draw::vline(im, x + 4, y + 3, y + h - 3, 1, dark);
      break;
    case Glyph::Text: {
      const int rows = std::max(1, h / 8);
      for (int r = 0; r < rows; ++r) {
        const int len = (r == rows - 1 && rows > 1) ? w * (50 + v % 40) / 100 : w;
        draw::hline(im, x, x + len, y + r * 8 + 2, 3, ink == white ? fill : ink);
      }
      break;
    }
    case Glyph::Image: {
      draw::fill_rect(im, x, y, w, h, {170, 210, 240});
      for (int j = 0; j < h / 2; ++j) {
        const int half = j * w / h;
        draw::hline(im, x + w / 2 - half, x + w / 2 + half, y + h / 2 + j, 1, fill);
      }
      draw::disk(im, 2 * x + w / 2, 2 * y + h / 2, std::max(2, w / 6), {250, 220, 60});
      break;
    }
    case Glyph::RadioSelected:
      draw::disk(im, 2 * x + w, 2 * y + h, w, fill);
      draw::disk(im, 2 * x + w, 2 * y + h, w - 4, white);
      draw::disk(im, 2 * x + w, 2 * y + h, w / 2, dark);
      break;
    case Glyph::RadioUnselected:
      draw::disk(im, 2 * x + w, 2 * y + h, w, fill);
      draw::disk(im, 2 * x + w, 2 * y + h, w - 4, white);
      break;
    case Glyph::HorizontalAxis:
      draw::hline(im, x, x + w, y + h / 2 - 1, 2, dark);
      for (int i = 0; i <= 4; ++i) draw::vline(im, x + i * (w - 1) / 4, y, y + h, 1, dark);
      break;
    case Glyph::VerticalAxis:
      draw::vline(im, x + w / 2 - 1, y, y + h, 2, dark);
      for (int i = 0; i <= 4; ++i) draw::hline(im, x, x + w, y + i * (h - 1) / 4, 1, dark);
      break;
    case Glyph::Menu: {
      draw::fill_rect(im, x, y, w, h, fill);
      const int items = 3 + v % 3;
      for (int i = 0; i < items; ++i) {
        draw::hline(im, x + 4 + i * w / items, x + (i + 1) * w / items - 4, y + h / 2 - 1, 2, white);
      }
      break;
    }
    case Glyph::List:
      draw::stroke_rect(im, x, y, w, h, 1, fill);
      for (int r = 0; r * 12 + 10 < h; ++r) {
        draw::fill_rect(im, x + 4, y + r * 12 + 5, 4, 4, fill);
        draw::hline(im, x + 12, x + w - 4, y + r * 12 + 6, 2, dark);
      }
      break;
    case Glyph::TabBar: {
      const int tabs = 3 + v % 3;
      for (int i = 0; i < tabs; ++i) {
        const Rgb c2 = i == 0 ? fill : Rgb{200, 200, 205};
        draw::fill_rect(im, x + i * w / tabs, y, w / tabs - 2, h, c2);
      }
      break;
    }
    case Glyph::Table:
      draw::fill_rect(im, x, y, w, h, white);
      draw::fill_rect(im, x, y, w, 8, fill);
      draw::stroke_rect(im, x, y, w, h, 1, dark);
      for (int r = y + 8; r < y + h; r += 10) draw::hline(im, x, x + w, r, 1, dark);
      for (int col = 1; col < 3; ++col) draw::vline(im, x + col * w / 3, y, y + h, 1, dark);
      break;
    case Glyph::Tree:
      for (int r = 0; r * 10 + 6 < h; ++r) {
        const int indent = 4 + 8 * ((r + v) % 3);
        draw::vline(im, x + 2, y, y + r * 10 + 6, 1, {150, 150, 150});
        draw::fill_rect(im, x + indent, y + r * 10 + 3, 5, 5, fill);
        draw::hline(im, x + indent + 8, x + w - 2, y + r * 10 + 5, 2, dark);
      }
      break;
    case Glyph::TextareaLabel:
      draw::hline(im, x, x + w, y + h / 2 - 1, 3, fill);
      draw::fill_rect(im, x + w - 3, y, 3, h, dark);
      break;
    case Glyph::DescriptionList:
      for (int r = 0; r * 14 + 10 < h; ++r) {
        draw::hline(im, x, x + w / 3, y + r * 14 + 3, 3, dark);
        draw::hline(im, x + w / 3 + 6, x + w, y + r * 14 + 3, 2, fill);
      }
      break;
    case Glyph::Legend:
      draw::stroke_rect(im, x, y, w, h, 1, {150, 150, 150});
      for (int r = 0; r * 10 + 8 < h; ++r) {
        draw::fill_rect(im, x + 3, y + r * 10 + 3, 6, 6, fill_palette()[(c.fill + r) % 8].rgb);
        draw::hline(im, x + 12, x + w - 3, y + r * 10 + 5, 2, dark);
      }
      break;
    case Glyph::Chart: {
      const int bars = 3 + v % 4;
      for (int i = 0; i < bars; ++i) {
        const int bh = h * (30 + (v * (i + 3)) % 70) / 100;
        draw::fill_rect(im, x + i * w / bars + 1, y + h - bh, w / bars - 2, bh, fill);
      }
      break;
    }
    case Glyph::Graph: {
      int px = x, py = y + h - 1;
      for (int i = 1; i <= 5; ++i) {
        const int nx = x + i * (w - 1) / 5;
        const int ny = y + h - 1 - (h - 1) * ((v * (i + 7)) % 100) / 100;
        draw::line(im, px, py, nx, ny, fill);
        px = nx;
        py = ny;
      }
      break;
    }
    case Glyph::DateArea:
      draw::fill_rect(im, x, y, w, h, white);
      draw::fill_rect(im, x, y, w, 8, fill);
      for (int r = 0; r < 4; ++r) {
        for (int col = 0; col < 5; ++col) {
          if ((r + col + v) % 3 == 0) draw::fill_rect(im, x + col * w / 5 + 2, y + 10 + r * (h - 10) / 4, 3, 3, dark);
        }
      }
      break;
  }
}

inline RgbImage render_rgb(const Scene& scene, const ClassCatalog& catalog) {
  const Rgb bg = background_palette()[scene.background].rgb;
  RgbImage im(scene.canvas, scene.canvas, bg);
  for (const auto& c : scene.controls) {
    im.clip = c.box;
    render_glyph(im, catalog.glyphs.at(c.class_id), c);
  }
  im.clip = {0, 0, 1 << 30, 1 << 30};
  return im;
}

/// [3,H,W] in [0,1], channel-major.
template <class T = float>
Tensor<T> image_to_tensor(const RgbImage& im) {
  Tensor<T> t({3, static_cast<std::size_t>(im.height), static_cast<std::size_t>(im.width)});
  const std::size_t plane = static_cast<std::size_t>(im.width) * im.height;
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t ch = 0; ch < 3; ++ch) t[ch * plane + p] = static_cast<T>(im.pixels[p * 3 + ch]) / T{255};
  }
  return t;
}

template <class T = float>
Tensor<T> render_scene(const Scene& scene, const ClassCatalog& catalog) {
  return image_to_tensor<T>(render_rgb(scene, catalog));
}

}  // namespace mmui
