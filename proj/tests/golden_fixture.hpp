#pragma once

#include <string>
#include <vector>

#include "palettediff/conditioning.hpp"

namespace palettediff::test {

/// Fixed 8x8 fixture: a diagonal ramp with a saturated block, enough edges to
/// cross the gradient threshold in both directions.
inline RasterImage golden_image() {
  RasterImage img(8, 8);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      Rgb c{static_cast<std::uint8_t>(x * 30 + 5), static_cast<std::uint8_t>(y * 28 + 10),
            static_cast<std::uint8_t>(((x + y) % 3) * 60)};
      if (x >= 5 && y < 3) c = {250, 20, 40};
      img.set(x, y, c);
    }
  }
  return img;
}

inline MaskSpec golden_mask() { return MaskSpec{8, 8, {Rect{2, 1, 3, 4}}}; }

inline constexpr int kGoldenColors = 16;

struct GoldenCase {
  std::string file;
  ConditioningStack stack;
};

inline std::vector<GoldenCase> golden_cases() {
  const RasterImage img = golden_image();
  const IndexedImage q = median_cut(img, PaletteSpec{kGoldenColors});
  std::vector<GoldenCase> out;
  for (Variant v : {Variant::noTex, Variant::L, Variant::G, Variant::T}) {
    out.push_back({"dequant_" + std::string(to_string(v)) + ".stack",
                   build_dequant_stack(q, PaletteSpec{kGoldenColors}, v, &img, true)});
  }
  out.push_back({"inpaint_T.stack", build_inpaint_stack(img, golden_mask(), MeanFill{}, Variant::T, false)});
  return out;
}

}  // namespace palettediff::test
