#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "palettediff/image.hpp"

namespace palettediff {

/// Ordered, duplicate-free list of at most 256 colors.
class Palette {
 public:
  Palette() = default;
  explicit Palette(std::vector<Rgb> colors);

  int size() const noexcept { return static_cast<int>(colors_.size()); }
  const Rgb& operator[](int i) const { return colors_[static_cast<std::size_t>(i)]; }
  const std::vector<Rgb>& colors() const noexcept { return colors_; }

  friend bool operator==(const Palette&, const Palette&) = default;

 private:
  std::vector<Rgb> colors_;
};

/// Number of palette colors, restricted to powers of two in [4, 128].
class PaletteSpec {
 public:
  static constexpr int kMin = 4;
  static constexpr int kMax = 128;

  explicit PaletteSpec(int n_colors);
  int n_colors() const noexcept { return n_; }
  static bool valid(int n) noexcept;
  static std::vector<int> all();

 private:
  int n_;
};

class IndexedImage {
 public:
  IndexedImage(int width, int height, std::vector<std::uint8_t> indices, Palette palette);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const std::vector<std::uint8_t>& indices() const noexcept { return indices_; }
  const Palette& palette() const noexcept { return palette_; }

  friend bool operator==(const IndexedImage&, const IndexedImage&) = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> indices_;
  Palette palette_;
};

/// Median cut with any palette budget in [1, 256].
IndexedImage median_cut(const RasterImage& img, int max_colors);
inline IndexedImage median_cut(const RasterImage& img, PaletteSpec spec) {
  return median_cut(img, spec.n_colors());
}

RasterImage render(const IndexedImage& q);

/// Nearest color by squared RGB distance; ties go to the lowest index.
int nearest_color(Rgb c, const Palette& pal);
IndexedImage project_to_palette(const RasterImage& img, const Palette& pal);

/// Exact indexing of an image with at most 256 distinct colors (first-seen order).
IndexedImage index_exact(const RasterImage& img);

int count_distinct_colors(const RasterImage& img);

nlohmann::json palette_to_json(const Palette& pal);
Palette palette_from_json(const nlohmann::json& j);
void save_palette(const Palette& pal, const std::filesystem::path& path);
Palette load_palette(const std::filesystem::path& path);

}  // namespace palettediff
