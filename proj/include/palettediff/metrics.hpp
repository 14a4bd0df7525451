#pragma once

#include <span>
#include <string>
#include <string_view>

#include "palettediff/image.hpp"
#include "palettediff/quantize.hpp"

namespace palettediff {

struct MetricReport {
  double psnr = 0.0;  // dB, +inf for identical inputs
  double ssim = 0.0;
};

/// 10 log10(255^2 / MSE) over all channels.
double psnr(const RasterImage& a, const RasterImage& b);

/// Single-scale SSIM on Rec.601 luminance: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, L = 255, averaged over valid window positions.
double ssim(const RasterImage& a, const RasterImage& b);
double ssim(const Plane& a, const Plane& b);

inline constexpr int kSsimWindow = 11;

enum class PaletteErrorMode { fresh, project };

/// Compares the quantized generation against the quantized input.
MetricReport palette_error(const RasterImage& gen, const IndexedImage& q_in, int n_colors,
                           PaletteErrorMode mode = PaletteErrorMode::fresh);
inline MetricReport palette_error(const RasterImage& gen, const IndexedImage& q_in, PaletteSpec spec,
                                  PaletteErrorMode mode = PaletteErrorMode::fresh) {
  return palette_error(gen, q_in, spec.n_colors(), mode);
}

struct Aggregate {
  double mean = 0.0;
  double standard_error = 0.0;
  int n = 0;
};

/// Mean and sample standard deviation / sqrt(n); standard error is 0 for n == 1.
Aggregate aggregate(std::span<const double> values);

/// "inf"/"-inf"/"nan" or a round-trippable decimal.
std::string format_metric(double v);
double parse_metric(std::string_view text);

}  // namespace palettediff
