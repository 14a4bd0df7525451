#include "palettediff/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "palettediff/error.hpp"

namespace palettediff {

namespace {

void require_same_shape(const RasterImage& a, const RasterImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(Errc::dimension_mismatch, "images differ in size");
  }
}

Eigen::VectorXd gaussian_kernel() {
  Eigen::VectorXd g(kSsimWindow);
  const double sigma = 1.5;
  const int half = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - half;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  return g / g.sum();
}

// Valid-region separable filtering.
Plane filter_valid(const Plane& p, const Eigen::VectorXd& g) {
  const Eigen::Index k = g.size();
  const Eigen::Index oh = p.rows() - k + 1, ow = p.cols() - k + 1;
  Plane rows_done = Plane::Zero(p.rows(), ow);
  for (Eigen::Index t = 0; t < k; ++t) rows_done += g[t] * p.middleCols(t, ow);
  Plane out = Plane::Zero(oh, ow);
  for (Eigen::Index t = 0; t < k; ++t) out += g[t] * rows_done.middleRows(t, oh);
  return out;
}

}  // namespace

double psnr(const RasterImage& a, const RasterImage& b) {
  require_same_shape(a, b);
  const Eigen::ArrayXXd diff = a.pixels().cast<double>().array() - b.pixels().cast<double>().array();
  const double mse = diff.square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Plane& a, const Plane& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::dimension_mismatch, "planes differ in size");
  }
  if (a.rows() < kSsimWindow || a.cols() < kSsimWindow) {
    throw Error(Errc::too_small, "image is smaller than the SSIM window");
  }
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const Eigen::VectorXd g = gaussian_kernel();
  const Plane mu_a = filter_valid(a, g);
  const Plane mu_b = filter_valid(b, g);
  const Plane var_a = filter_valid(a * a, g) - mu_a * mu_a;
  const Plane var_b = filter_valid(b * b, g) - mu_b * mu_b;
  const Plane cov = filter_valid(a * b, g) - mu_a * mu_b;
  const Plane map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                    ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean();
}

double ssim(const RasterImage& a, const RasterImage& b) {
  require_same_shape(a, b);
  return ssim(luminance(a), luminance(b));
}

MetricReport palette_error(const RasterImage& gen, const IndexedImage& q_in, int n_colors, PaletteErrorMode mode) {
  if (gen.width() != q_in.width() || gen.height() != q_in.height()) {
    throw Error(Errc::dimension_mismatch, "generated image does not match the quantized input");
  }
  const RasterImage reference = render(q_in);
  const RasterImage quantized = mode == PaletteErrorMode::fresh ? render(median_cut(gen, n_colors))
                                                                : render(project_to_palette(gen, q_in.palette()));
  return {psnr(quantized, reference), ssim(quantized, reference)};
}

Aggregate aggregate(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::empty, "cannot aggregate an empty sequence");
  Aggregate agg;
  agg.n = static_cast<int>(values.size());
  long infinite = 0;
  double sum = 0.0;
  for (double v : values) {
    if (std::isinf(v)) ++infinite;
    sum += v;
  }
  agg.mean = sum / agg.n;
  if (infinite > 0) {
    // A mean containing +inf has no finite spread.
    agg.standard_error = infinite == agg.n && agg.n > 0 ? 0.0 : std::numeric_limits<double>::infinity();
    return agg;
  }
  if (agg.n == 1) return agg;
  double ss = 0.0;
  for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
  agg.standard_error = std::sqrt(ss / (agg.n - 1)) / std::sqrt(static_cast<double>(agg.n));
  return agg;
}

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_metric(std::string_view text) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{}) throw Error(Errc::decode_error, "not a number: " + std::string(text));
  return v;
}

}  // namespace palettediff
