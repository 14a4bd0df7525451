#include "palettediff/image.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "palettediff/error.hpp"

namespace palettediff {

RasterImage::RasterImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw Error(Errc::invalid_argument, "image dimensions must be positive");
  }
  pixels_.resize(3, static_cast<Eigen::Index>(width) * height);
  pixels_.row(0).setConstant(fill[0]);
  pixels_.row(1).setConstant(fill[1]);
  pixels_.row(2).setConstant(fill[2]);
}

RasterImage RasterImage::from_pixels(int width, int height, Storage pixels) {
  if (width < 1 || height < 1) {
    throw Error(Errc::invalid_argument, "image dimensions must be positive");
  }
  if (pixels.cols() != static_cast<Eigen::Index>(width) * height) {
    throw Error(Errc::dimension_mismatch, "pixel count does not match width*height");
  }
  RasterImage img;
  img.width_ = width;
  img.height_ = height;
  img.pixels_ = std::move(pixels);
  return img;
}

Eigen::Matrix<float, 3, Eigen::Dynamic> RasterImage::to_unit() const {
  return pixels_.cast<float>() / 255.0f;
}

std::uint8_t to_channel(double v) noexcept {
  const double r = std::floor(v + 0.5);
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

Plane luminance(const RasterImage& img) {
  Plane lum(img.height(), img.width());
  const auto& px = img.pixels();
  for (int i = 0; i < img.size(); ++i) {
    lum(i / img.width(), i % img.width()) =
        0.299 * px(0, i) + 0.587 * px(1, i) + 0.114 * px(2, i);
  }
  return lum;
}

GradientPair gradients(const Plane& lum) {
  const Eigen::Index h = lum.rows();
  const Eigen::Index w = lum.cols();
  GradientPair g{Plane::Zero(h, w), Plane::Zero(h, w)};
  if (w > 1) {
    g.gx.leftCols(w - 1) = lum.rightCols(w - 1) - lum.leftCols(w - 1);
  }
  if (h > 1) {
    g.gy.topRows(h - 1) = lum.bottomRows(h - 1) - lum.topRows(h - 1);
  }
  return g;
}

GradientPair threshold_gradients(const Plane& gx, const Plane& gy, double tau) {
  if (tau < 0) {
    throw Error(Errc::invalid_argument, "threshold must be non-negative");
  }
  if (gx.rows() != gy.rows() || gx.cols() != gy.cols()) {
    throw Error(Errc::dimension_mismatch, "gradient planes differ in shape");
  }
  return {(gx.abs() > tau).cast<double>(), (gy.abs() > tau).cast<double>()};
}

namespace {

struct Hsv {
  double h;  // degrees [0, 360)
  double s;
  double v;
};

Hsv to_hsv(Rgb c) {
  const double r = c[0] / 255.0, g = c[1] / 255.0, b = c[2] / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out{0.0, mx == 0.0 ? 0.0 : delta / mx, mx};
  if (delta > 0.0) {
    if (mx == r) {
      out.h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      out.h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      out.h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (out.h < 0.0) out.h += 360.0;
  }
  return out;
}

Rgb from_hsv(const Hsv& hsv) {
  const double c = hsv.v * hsv.s;
  const double hp = hsv.h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  const double m = hsv.v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(std::floor(hp)) % 6) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  return {to_channel((r + m) * 255.0), to_channel((g + m) * 255.0), to_channel((b + m) * 255.0)};
}

}  // namespace

HsvShift draw_hsv_shift(const AugmentationConfig& cfg) {
  if (!(cfg.strength >= 0.0 && cfg.strength <= 1.0)) {
    throw Error(Errc::invalid_argument, "augmentation strength must lie in [0, 1]");
  }
  if (cfg.strength == 0.0) return {};
  std::mt19937_64 rng(cfg.seed);
  const double s = cfg.strength;
  std::uniform_real_distribution<double> hue(-s * 180.0, s * 180.0);
  std::uniform_real_distribution<double> scale(1.0 - s, 1.0 + s);
  HsvShift shift;
  shift.hue_degrees = hue(rng);
  shift.saturation_scale = scale(rng);
  shift.value_scale = scale(rng);
  return shift;
}

Rgb apply_hsv_shift(Rgb c, const HsvShift& shift) {
  Hsv hsv = to_hsv(c);
  hsv.h = std::fmod(hsv.h + shift.hue_degrees, 360.0);
  if (hsv.h < 0.0) hsv.h += 360.0;
  hsv.s = std::clamp(hsv.s * shift.saturation_scale, 0.0, 1.0);
  hsv.v = std::clamp(hsv.v * shift.value_scale, 0.0, 1.0);
  return from_hsv(hsv);
}

RasterImage apply_hsv_shift(const RasterImage& img, const HsvShift& shift) {
  RasterImage out = img;
  for (int i = 0; i < img.size(); ++i) out.set(i, apply_hsv_shift(img.at(i), shift));
  return out;
}

RasterImage augment_hsv(const RasterImage& img, const AugmentationConfig& cfg) {
  const HsvShift shift = draw_hsv_shift(cfg);
  if (cfg.strength == 0.0) return img;
  return apply_hsv_shift(img, shift);
}

RasterImage replace_luminance(const RasterImage& img, const Plane& lum) {
  if (lum.rows() != img.height() || lum.cols() != img.width()) {
    throw Error(Errc::dimension_mismatch, "luminance plane does not match image");
  }
  RasterImage out = img;
  const auto& px = img.pixels();
  for (int i = 0; i < img.size(); ++i) {
    const Eigen::Vector3d c = px.col(i).cast<double>();
    const double y = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
    const double target = std::clamp(lum(i / img.width(), i % img.width()), 0.0, 255.0);
    const Eigen::Vector3d chroma = c.array() - y;
    // Largest k in [0, 1] keeping target + k * chroma inside [0, 255].
    double k = 1.0;
    for (int ch = 0; ch < 3; ++ch) {
      if (chroma[ch] > 0.0) k = std::min(k, (255.0 - target) / chroma[ch]);
      if (chroma[ch] < 0.0) k = std::min(k, -target / chroma[ch]);
    }
    k = std::max(k, 0.0);
    const Eigen::Vector3d rgb = target + k * chroma.array();
    out.set(i, {to_channel(rgb[0]), to_channel(rgb[1]), to_channel(rgb[2])});
  }
  return out;
}

Rgb mean_color(const RasterImage& img, const Plane& mask) {
  if (mask.rows() != img.height() || mask.cols() != img.width()) {
    throw Error(Errc::dimension_mismatch, "mask does not match image");
  }
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  long count = 0;
  for (int i = 0; i < img.size(); ++i) {
    if (mask(i / img.width(), i % img.width()) != 0.0) {
      sum += img.pixels().col(i).cast<double>();
      ++count;
    }
  }
  if (count == 0) throw Error(Errc::empty_mask, "mask has no set pixels");
  sum /= static_cast<double>(count);
  return {to_channel(sum[0]), to_channel(sum[1]), to_channel(sum[2])};
}

}  // namespace palettediff
