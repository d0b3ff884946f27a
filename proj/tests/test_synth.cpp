#include <gtest/gtest.h>

#include <set>

#include "mmui/anchors.hpp"
#include "mmui/synth.hpp"

using namespace mmui;

namespace {

Scene scene_for(const ClassCatalog& cat, std::uint64_t seed) {
  Rng rng(seed);
  return sample_scene(cat, 256, rng);
}

}  // namespace

TEST(Catalog, Twin12Structure) {
  const auto c = twin12_catalog();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.size(), 12u);
  EXPECT_EQ(c.twin_pairs.size(), 2u);
  EXPECT_EQ(c.names[c.twin_pairs[0].first], "Button");
  EXPECT_EQ(c.names[c.twin_pairs[0].second], "Decoy_Button");
  EXPECT_EQ(c.names[c.twin_pairs[1].first], "Checkbox_Checked");
  EXPECT_EQ(c.names[c.twin_pairs[1].second], "Checkbox_Unchecked_Small");
  for (auto [a, b] : c.twin_pairs) {
    EXPECT_EQ(c.glyphs[a], c.glyphs[b]);
    EXPECT_EQ(c.weights[a], c.weights[b]);
  }
  // The eight other classes each have their own renderer.
  std::set<Glyph> distinct;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!c.twin_of(i)) distinct.insert(c.glyphs[i]);
  }
  EXPECT_EQ(distinct.size(), 8u);
  EXPECT_LT(c.weights[c.index_of("Horizontal_Axis")], c.weights[c.index_of("Button")]);
}

TEST(Catalog, Full23HasTheOriginalClassNames) {
  const auto c = full23_catalog();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.size(), 23u);
  EXPECT_EQ(c.names.front(), "Icon");
  EXPECT_EQ(c.names.back(), "Date_area");
  EXPECT_TRUE(c.twin_pairs.empty());
  EXPECT_EQ(std::set<Glyph>(c.glyphs.begin(), c.glyphs.end()).size(), 23u);
  EXPECT_THROW(catalog_by_name("coco"), UsageError);
  EXPECT_THROW(c.index_of("Decoy_Button"), ConfigError);
}

TEST(Catalog, ValidationCatchesBrokenCatalogs) {
  auto c = twin12_catalog();
  c.names[1] = "Button";
  EXPECT_THROW(c.validate(), ConfigError);
  c = twin12_catalog();
  c.twin_pairs.push_back({4, 5});
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Scene, SameSeedSameScene) {
  const auto c = twin12_catalog();
  EXPECT_EQ(scene_for(c, 42), scene_for(c, 42));
  EXPECT_NE(scene_for(c, 42), scene_for(c, 43));
}

TEST(Scene, ConstraintsHoldOverManySeeds) {
  for (const auto& cat : {twin12_catalog(), full23_catalog()}) {
    for (std::uint64_t s = 0; s < 300; ++s) {
      const auto sc = scene_for(cat, s);
      ASSERT_GE(sc.controls.size(), 1u);
      ASSERT_LE(sc.controls.size(), 8u);
      for (std::size_t i = 0; i < sc.controls.size(); ++i) {
        const auto& b = sc.controls[i].box;
        ASSERT_GE(b.x, 0);
        ASSERT_GE(b.y, 0);
        ASSERT_LE(b.x + b.w, sc.canvas);
        ASSERT_LE(b.y + b.h, sc.canvas);
        ASSERT_LT(sc.controls[i].class_id, cat.size());
        for (std::size_t j = i + 1; j < sc.controls.size(); ++j) {
          ASSERT_LE(box_iou(b, sc.controls[j].box), 0.1);
        }
      }
      for (const auto& a : scene_annotations(sc)) {
        for (float v : {a.cx, a.cy, a.w, a.h}) {
          ASSERT_GE(v, 0.0f);
          ASSERT_LE(v, 1.0f);
        }
      }
    }
  }
}

TEST(Scene, ControlCountCoversOneToEight) {
  const auto c = twin12_catalog();
  std::set<std::size_t> seen;
  for (std::uint64_t s = 0; s < 400; ++s) seen.insert(scene_for(c, s).controls.size());
  EXPECT_EQ(seen, (std::set<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(Scene, TwinMembersAreEquallyLikely) {
  const auto c = twin12_catalog();
  for (auto [a, b] : c.twin_pairs) {
    int na = 0, nb = 0;
    for (std::uint64_t s = 0; s < 4000; ++s) {
      for (const auto& ctl : scene_for(c, s).controls) {
        na += ctl.class_id == a;
        nb += ctl.class_id == b;
      }
    }
    // Scene-level picks are fair coins; per-control counts stay within a loose 4-sigma band.
    const double n = na + nb;
    EXPECT_NEAR(na / n, 0.5, 4 * 0.5 * std::sqrt(8.0 / n)) << na << " vs " << nb;
  }
}

TEST(Scene, OneTwinMemberPerScene) {
  const auto c = twin12_catalog();
  for (std::uint64_t s = 0; s < 300; ++s) {
    const auto sc = scene_for(c, s);
    for (auto [a, b] : c.twin_pairs) {
      bool has_a = false, has_b = false;
      for (const auto& ctl : sc.controls) {
        has_a |= ctl.class_id == a;
        has_b |= ctl.class_id == b;
      }
      EXPECT_FALSE(has_a && has_b);
    }
  }
}

TEST(Render, SwappingTwinClassesLeavesPixelsUnchanged) {
  const auto c = twin12_catalog();
  int checked = 0;
  for (std::uint64_t s = 0; checked < 200; ++s) {
    auto sc = scene_for(c, 1000 + s);
    bool has_twin = false;
    for (auto& ctl : sc.controls) has_twin |= c.twin_of(ctl.class_id).has_value();
    if (!has_twin) continue;
    ++checked;
    const auto before = render_rgb(sc, c);
    for (auto& ctl : sc.controls) {
      if (auto t = c.twin_of(ctl.class_id)) ctl.class_id = *t;
    }
    ASSERT_EQ(render_rgb(sc, c), before) << "seed " << 1000 + s;
  }
}

TEST(Render, PixelsOutsideBoxesAreBackground) {
  for (const auto& cat : {twin12_catalog(), full23_catalog()}) {
    for (std::uint64_t s = 0; s < 150; ++s) {
      const auto sc = scene_for(cat, 500 + s);
      const auto im = render_rgb(sc, cat);
      const Rgb bg = background_palette()[sc.background].rgb;
      for (int y = 0; y < im.height; ++y) {
        for (int x = 0; x < im.width; ++x) {
          bool inside = false;
          for (const auto& ctl : sc.controls) {
            const auto& b = ctl.box;
            inside |= x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
          }
          if (!inside) ASSERT_EQ(im.at(x, y), bg) << cat.name << " seed " << 500 + s << " at " << x << "," << y;
        }
      }
    }
  }
}

TEST(Render, EveryControlLeavesAMark) {
  for (const auto& cat : {twin12_catalog(), full23_catalog()}) {
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto sc = scene_for(cat, 700 + s);
      const auto im = render_rgb(sc, cat);
      const Rgb bg = background_palette()[sc.background].rgb;
      for (const auto& ctl : sc.controls) {
        int marked = 0;
        for (int y = ctl.box.y; y < ctl.box.y + ctl.box.h; ++y) {
          for (int x = ctl.box.x; x < ctl.box.x + ctl.box.w; ++x) marked += !(im.at(x, y) == bg);
        }
        EXPECT_GT(marked, 0) << cat.names[ctl.class_id];
      }
    }
  }
}

TEST(Render, TensorIsDeterministicAndNormalised) {
  const auto c = twin12_catalog();
  const auto sc = scene_for(c, 9);
  const auto a = render_scene(sc, c), b = render_scene(sc, c);
  EXPECT_EQ(a.shape(), (Shape{3, 256, 256}));
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  const auto im = render_rgb(sc, c);
  EXPECT_EQ(a[0], im.pixels[0] / 255.0f);
  EXPECT_EQ(a[2 * 256 * 256 + 5], im.pixels[5 * 3 + 2] / 255.0f);
  for (float v : a.data()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Anchors, DefaultsMatchKMeansOverGeneratedScenes) {
  EXPECT_EQ(default_anchors_kmeans(), default_anchors());
}

TEST(Anchors, KMeansRecoversSeparatedClusters) {
  std::vector<Anchor> boxes;
  for (int i = 0; i < 30; ++i) {
    boxes.push_back({10.0f + i % 3, 10.0f});
    boxes.push_back({100.0f, 10.0f + i % 3});
    boxes.push_back({50.0f, 50.0f + i % 3});
  }
  const auto c = kmeans_anchors(boxes, 3, 4);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_NEAR(c[0].w, 11.0f, 1e-4);
  EXPECT_NEAR(c[1].h, 11.0f, 1e-4);
  EXPECT_NEAR(c[2].h, 51.0f, 1e-4);
  EXPECT_THROW(kmeans_anchors(boxes, 200, 1), ConfigError);
}
