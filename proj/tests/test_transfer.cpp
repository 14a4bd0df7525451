#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "palettediff/error.hpp"
#include "palettediff/transfer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace palettediff;


TEST(Cost, Entries) {
  const CostMatrix c = build_cost(Palette({{0, 0, 0}}), Palette({{3, 4, 0}}), TransferMode::color);
  EXPECT_EQ(c(0, 0), 25.0);
  std::mt19937_64 rng(31);
  const Palette a = test::random_palette(rng, 5), b = test::random_palette(rng, 5);
  EXPECT_TRUE(build_cost(a, a, TransferMode::color).diagonal().isZero());
  EXPECT_EQ(build_cost(a, b, TransferMode::negative_color), -build_cost(a, b, TransferMode::color));
  try {
    build_cost(a, test::random_palette(rng, 4), TransferMode::color);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::size_mismatch);
  }
}

TEST(Assignment, MatchesBruteForceOracle) {
  std::mt19937_64 rng(32);
  std::uniform_int_distribution<int> size(1, 7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = size(rng);
    const auto mode = trial % 3 == 0 ? TransferMode::negative_color : TransferMode::color;
    const CostMatrix c = build_cost(test::random_palette(rng, n), test::random_palette(rng, n), mode);
    const Assignment a = solve_assignment(c);
    const auto [best, arg] = test::brute_force(c);
    ASSERT_TRUE(a.is_bijection());
    EXPECT_EQ(a.total_cost(c), best);
    EXPECT_EQ(a.mapping, arg);
  }
}

TEST(Assignment, LexicographicTieBreak) {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<int> small(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 6;
    CostMatrix c(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = small(rng);
    EXPECT_EQ(solve_assignment(c).mapping, test::brute_force(c).second);
  }
  EXPECT_EQ(solve_assignment(CostMatrix::Zero(4, 4)).mapping, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Assignment, PaperCases) {
  const Palette src({{0, 0, 0}, {255, 255, 255}});
  const Palette tgt({{250, 250, 250}, {5, 5, 5}});
  EXPECT_EQ(solve_assignment(build_cost(src, tgt, TransferMode::color)).mapping, (std::vector<int>{1, 0}));
  EXPECT_EQ(solve_assignment(build_cost(src, src, TransferMode::color)).mapping, (std::vector<int>{0, 1}));
  EXPECT_EQ(solve_assignment(build_cost(src, src, TransferMode::negative_color)).mapping, (std::vector<int>{1, 0}));
}

TEST(Transfer, PreservesIndexMap) {
  std::mt19937_64 rng(34);
  for (int trial = 0; trial < 50; ++trial) {
    const IndexedImage q = median_cut(test::random_image(rng, 8, 8), 8);
    const Palette tgt = test::random_palette(rng, q.palette().size());
    for (auto mode : {TransferMode::color, TransferMode::negative_color}) {
      const IndexedImage out = transfer_palette(q, tgt, mode);
      EXPECT_EQ(out.indices(), q.indices());
      EXPECT_EQ(project_to_palette(render(out), out.palette()).indices(), q.indices());
    }
    EXPECT_EQ(transfer_palette(q, q.palette(), TransferMode::color), q);
  }
}

TEST(Transfer, NegativeCheckerboardInverts) {
  std::vector<std::uint8_t> idx;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) idx.push_back(static_cast<std::uint8_t>((x + y) % 2));
  const Palette bw({{0, 0, 0}, {255, 255, 255}});
  const IndexedImage q(4, 4, idx, bw);
  const IndexedImage out = transfer_palette(q, bw, TransferMode::negative_color);
  EXPECT_EQ(out.indices(), q.indices());
  const RasterImage a = render(q), b = render(out);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(b.at(i)[0], 255 - a.at(i)[0]);
}

TEST(Transfer, SizeMismatch) {
  const IndexedImage q(1, 1, {0}, Palette({{0, 0, 0}}));
  EXPECT_THROW(transfer_palette(q, Palette({{1, 1, 1}, {2, 2, 2}}), TransferMode::color), Error);
}

TEST(Colormap, Resampling) {
  const std::vector<Rgb> bw = {{0, 0, 0}, {255, 255, 255}};
  EXPECT_EQ(resample_colormap(bw, 2), Palette({{0, 0, 0}, {255, 255, 255}}));
  EXPECT_EQ(resample_colormap(bw, 3)[1], (Rgb{128, 128, 128}));
  EXPECT_EQ(resample_colormap(bw, 1), Palette({{0, 0, 0}}));
  const Palette flat = resample_colormap({{10, 10, 10}}, 4);
  EXPECT_EQ(flat.size(), 4);
}

TEST(Colormap, ModeNames) {
  EXPECT_EQ(parse_transfer_mode("negative-color"), TransferMode::negative_color);
  EXPECT_EQ(parse_transfer_mode(to_string(TransferMode::color)), TransferMode::color);
  EXPECT_THROW(parse_transfer_mode("lab"), Error);
}
