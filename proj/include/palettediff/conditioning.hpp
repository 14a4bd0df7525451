#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "palettediff/image.hpp"
#include "palettediff/quantize.hpp"

namespace palettediff {

/// Texture conditioning variant of a trained control encoder.
enum class Variant { noTex, L, G, T };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

/// Channel layout of the conditioning stack.
namespace channel {
inline constexpr int red = 0;
inline constexpr int green = 1;
inline constexpr int blue = 2;
inline constexpr int color_indicator = 3;
inline constexpr int texture_a = 4;
inline constexpr int texture_b = 5;
inline constexpr int texture_indicator = 6;
inline constexpr int count = 7;
}  // namespace channel

/// 7 x (H*W) conditioning tensor; column k is pixel k in row-major order.
struct ConditioningStack {
  using Storage = Eigen::Matrix<float, channel::count, Eigen::Dynamic>;

  int width = 0;
  int height = 0;
  Storage data;

  PlaneT<float> plane(int ch) const;
  friend bool operator==(const ConditioningStack& a, const ConditioningStack& b) {
    return a.width == b.width && a.height == b.height && a.data == b.data;
  }
};

struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

struct MaskSpec {
  int image_height = 0;
  int image_width = 0;
  std::vector<Rect> rects;

  /// Binary plane, 1 inside the union of rectangles.
  Plane plane() const;
  double coverage() const;
};

/// Throws OutOfBounds when a rectangle leaves the image.
void validate_mask(const MaskSpec& mask);

struct MeanFill {};
using Fill = std::variant<MeanFill, Rgb>;

ConditioningStack build_dequant_stack(const IndexedImage& q, PaletteSpec spec, Variant variant,
                                      const RasterImage* texture_src, bool texture_on);

/// Same as above but without the power-of-two restriction on the palette size.
ConditioningStack build_dequant_stack_n(const IndexedImage& q, int n_colors, Variant variant,
                                        const RasterImage* texture_src, bool texture_on);

/// texture_on=false zeroes the texture channels everywhere (the "texture off"
/// evaluation arm); texture_in_mask=false zeroes them inside the mask only.
ConditioningStack build_inpaint_stack(const RasterImage& gt, const MaskSpec& mask, const Fill& fill,
                                      Variant variant, bool texture_in_mask, bool texture_on = true);

/// One rectangle whose area fraction is uniform in [lo, hi].
MaskSpec random_mask(int height, int width, std::uint64_t seed, double lo = 0.05, double hi = 0.30);

/// Raw little-endian float32 planes behind a one-line JSON header.
void save_stack(const ConditioningStack& stack, std::string_view variant_tag,
                const std::filesystem::path& path);
ConditioningStack load_stack(const std::filesystem::path& path);

}  // namespace palettediff
