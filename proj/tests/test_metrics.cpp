#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "palettediff/dataset.hpp"
#include "palettediff/error.hpp"
#include "palettediff/metrics.hpp"
#include "palettediff/quantize.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace palettediff;

namespace {

RasterImage offset(const RasterImage& img, int d) {
  RasterImage out(img.width(), img.height());
  for (int i = 0; i < img.size(); ++i) {
    Rgb c = img.at(i);
    for (auto& v : c) v = static_cast<std::uint8_t>(std::clamp(v + d, 0, 255));
    out.set(i, c);
  }
  return out;
}

}  // namespace

TEST(Psnr, ClosedForms) {
  const RasterImage a(8, 8, {100, 100, 100});
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_NEAR(psnr(a, offset(a, 16)), 20.0 * std::log10(255.0 / 16.0), 1e-9);
  EXPECT_NEAR(psnr(a, offset(a, 16)), 24.05, 0.005);
  EXPECT_NEAR(psnr(RasterImage(4, 4, {0, 0, 0}), RasterImage(4, 4, {255, 255, 255})), 0.0, 1e-9);
  EXPECT_THROW(psnr(RasterImage(2, 2), RasterImage(2, 3)), Error);
}

TEST(Psnr, SymmetricPermutationInvariantAndMonotone) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 20; ++trial) {
    const RasterImage a = test::random_image(rng, 8, 8), b = test::random_image(rng, 8, 8);
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    std::vector<int> perm(64);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    RasterImage pa(8, 8), pb(8, 8);
    for (int i = 0; i < 64; ++i) {
      pa.set(i, a.at(perm[static_cast<std::size_t>(i)]));
      pb.set(i, b.at(perm[static_cast<std::size_t>(i)]));
    }
    EXPECT_NEAR(psnr(pa, pb), psnr(a, b), 1e-12);
  }
  const RasterImage base(8, 8, {0, 0, 0});
  double prev = std::numeric_limits<double>::infinity();
  for (int d = 1; d <= 255; d += 7) {
    const double p = psnr(base, offset(base, d));
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, IdentityAndConstantOffset) {
  std::mt19937_64 rng(52);
  const RasterImage a = test::random_image(rng, 16, 16);
  EXPECT_EQ(ssim(a, a), 1.0);
  const RasterImage flat(16, 16, {100, 100, 100}), up(16, 16, {110, 110, 110});
  const double c1 = (0.01 * 255) * (0.01 * 255);
  const double expect = (2 * 100.0 * 110.0 + c1) / (100.0 * 100.0 + 110.0 * 110.0 + c1);
  EXPECT_NEAR(ssim(flat, up), expect, 1e-12);
}

TEST(Ssim, MatchesDirectFormulaReference) {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const RasterImage a = test::random_image(rng, 16, 16);
    const RasterImage b = trial % 2 ? test::random_image(rng, 16, 16) : procedural_image(rng(), 16);
    EXPECT_NEAR(ssim(a, b), test::ssim_reference(luminance(a), luminance(b)), 1e-6);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  }
}

TEST(Ssim, Errors) {
  try {
    ssim(RasterImage(10, 10), RasterImage(10, 10));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::too_small);
  }
  try {
    ssim(RasterImage(12, 12), RasterImage(12, 13));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::dimension_mismatch);
  }
}

TEST(PaletteError, SelfComparison) {
  const auto corpus = procedural_corpus(32, 54, 32);
  double fresh = 0;
  for (const auto& img : corpus) {
    const IndexedImage q = median_cut(img, 16);
    const MetricReport p = palette_error(render(q), q, 16, PaletteErrorMode::project);
    EXPECT_TRUE(std::isinf(p.psnr));
    EXPECT_EQ(p.ssim, 1.0);
    fresh += palette_error(render(q), q, PaletteSpec{16}).ssim;
  }
  EXPECT_GE(fresh / 32, 0.99);
}

TEST(PaletteError, NoiseFloor) {
  const auto corpus = procedural_corpus(32, 55, 32);
  std::mt19937_64 rng(56);
  double total = 0;
  for (const auto& img : corpus) {
    const IndexedImage q = median_cut(img, 16);
    total += palette_error(test::random_image(rng, 32, 32), q, 16).ssim;
  }
  EXPECT_LT(total / 32, 0.2);
}

TEST(Aggregate, Cases) {
  const std::vector<double> one = {5.0};
  EXPECT_EQ(aggregate(one).mean, 5.0);
  EXPECT_EQ(aggregate(one).standard_error, 0.0);
  const std::vector<double> two = {0.0, 10.0};
  EXPECT_DOUBLE_EQ(aggregate(two).mean, 5.0);
  EXPECT_DOUBLE_EQ(aggregate(two).standard_error, 5.0);
  const std::vector<double> same(9, 3.25);
  EXPECT_EQ(aggregate(same).standard_error, 0.0);
  EXPECT_THROW(aggregate(std::vector<double>{}), Error);
}

TEST(Aggregate, StandardErrorMatchesDefinition) {
  std::mt19937_64 rng(57);
  std::normal_distribution<double> n(3.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(static_cast<std::size_t>(2 + trial));
    for (double& x : v) x = n(rng);
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    EXPECT_NEAR(aggregate(v).mean, mean, 1e-12);
    EXPECT_NEAR(aggregate(v).standard_error, se, 1e-12);
  }
}

TEST(Format, RoundTrip) {
  EXPECT_EQ(format_metric(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_TRUE(std::isinf(parse_metric("inf")));
  for (double v : {0.1, 24.048, 1.0 / 3.0, -7.5}) EXPECT_EQ(parse_metric(format_metric(v)), v);
}
