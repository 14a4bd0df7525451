#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace palettediff {

using Rgb = std::array<std::uint8_t, 3>;

/// Row-major real plane (rows = height).
template <typename Scalar>
using PlaneT = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Plane = PlaneT<double>;

/// 8-bit RGB raster. Pixels are stored one per column, in row-major pixel order.
class RasterImage {
 public:
  using Storage = Eigen::Matrix<std::uint8_t, 3, Eigen::Dynamic>;

  RasterImage() = default;
  RasterImage(int width, int height, Rgb fill = {0, 0, 0});
  static RasterImage from_pixels(int width, int height, Storage pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int size() const noexcept { return width_ * height_; }
  bool empty() const noexcept { return size() == 0; }

  Rgb at(int index) const noexcept {
    return {pixels_(0, index), pixels_(1, index), pixels_(2, index)};
  }
  Rgb at(int x, int y) const noexcept { return at(y * width_ + x); }
  void set(int index, Rgb c) noexcept {
    pixels_(0, index) = c[0];
    pixels_(1, index) = c[1];
    pixels_(2, index) = c[2];
  }
  void set(int x, int y, Rgb c) noexcept { set(y * width_ + x, c); }

  const Storage& pixels() const noexcept { return pixels_; }
  Storage& pixels() noexcept { return pixels_; }

  /// Channel values scaled to [0, 1], 3 x (width*height).
  Eigen::Matrix<float, 3, Eigen::Dynamic> to_unit() const;

  friend bool operator==(const RasterImage& a, const RasterImage& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.pixels_ == b.pixels_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  Storage pixels_;
};

/// Round half up and clamp into the 8-bit channel domain.
std::uint8_t to_channel(double v) noexcept;

RasterImage load_image(const std::filesystem::path& path);
void save_image(const RasterImage& img, const std::filesystem::path& path);
RasterImage decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const RasterImage& img);

/// Rec.601 luma on the [0, 255] scale.
Plane luminance(const RasterImage& img);

struct GradientPair {
  Plane gx;
  Plane gy;
};

/// Forward differences with replicate border (zero in the last column / row).
GradientPair gradients(const Plane& lum);

/// 1 where |g| > tau (strict), else 0.
GradientPair threshold_gradients(const Plane& gx, const Plane& gy, double tau = 8.0);

struct AugmentationConfig {
  double strength = 0.0;  // in [0, 1]
  std::uint64_t seed = 0;
};

/// One global HSV shift: hue offset in degrees, multiplicative S and V factors.
struct HsvShift {
  double hue_degrees = 0.0;
  double saturation_scale = 1.0;
  double value_scale = 1.0;
};

HsvShift draw_hsv_shift(const AugmentationConfig& cfg);
Rgb apply_hsv_shift(Rgb c, const HsvShift& shift);
RasterImage apply_hsv_shift(const RasterImage& img, const HsvShift& shift);
RasterImage augment_hsv(const RasterImage& img, const AugmentationConfig& cfg);

/// Substitutes luma and keeps chroma; chroma is scaled toward gray when the
/// result would leave the RGB cube so that the requested luma survives.
RasterImage replace_luminance(const RasterImage& img, const Plane& lum);

/// Mean color over a binary mask (nonzero entries), rounded half up.
Rgb mean_color(const RasterImage& img, const Plane& mask);

}  // namespace palettediff
