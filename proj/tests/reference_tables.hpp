#pragma once

// Published baseline per-class scores (precision, recall, F1, mAP@0.5) and the
// "all" row, used to check metric arithmetic.

#include <array>
#include <string_view>

namespace mmui::testdata {

struct Row {
  std::string_view name;
  double precision, recall, f1, map50;
};

inline constexpr Row kBaselineAll = {"all", 0.765, 0.676, 0.701, 0.649};

inline constexpr std::array<Row, 23> kBaselineClasses = {{
    {"Icon", 0.924, 0.773, 0.842, 0.766},
    {"Dropdown", 0.842, 0.808, 0.825, 0.788},
    {"Button", 0.848, 0.902, 0.874, 0.861},
    {"Menu", 0.750, 0.530, 0.621, 0.507},
    {"Input", 0.859, 0.762, 0.808, 0.757},
    {"List", 0.613, 0.782, 0.687, 0.658},
    {"TabBar", 0.857, 0.588, 0.697, 0.601},
    {"Table", 0.788, 0.839, 0.813, 0.796},
    {"Radio_Selected", 0.939, 0.820, 0.875, 0.806},
    {"Radio_Unselected", 0.793, 0.907, 0.846, 0.813},
    {"Checkbox_Unchecked", 0.913, 0.825, 0.866, 0.836},
    {"Checkbox_Checked", 0.849, 0.581, 0.690, 0.566},
    {"Tree", 0.729, 0.788, 0.758, 0.738},
    {"Image", 0.928, 0.839, 0.882, 0.820},
    {"Text", 0.928, 0.797, 0.857, 0.802},
    {"Label_of_the_Textarea", 0.896, 0.476, 0.622, 0.476},
    {"Description_List", 0.700, 0.801, 0.747, 0.703},
    {"Legend", 0.800, 0.647, 0.715, 0.647},
    {"Horizontal_Axis", 0.117, 0.053, 0.073, 0.012},
    {"Chart", 0.603, 0.755, 0.671, 0.715},
    {"Graph", 0.607, 0.575, 0.590, 0.572},
    {"Vertical_Axis", 0.760, 0.118, 0.204, 0.125},
    {"Date_area", 0.557, 0.588, 0.572, 0.567},
}};

// Mismatched-text Icon precision and the baseline it is compared with.
inline constexpr double kMismatchIconPrecision = 0.771;
inline constexpr double kBaselineIconPrecision = 0.924;

}  // namespace mmui::testdata
