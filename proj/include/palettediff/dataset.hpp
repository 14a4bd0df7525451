#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <vector>

#include "palettediff/image.hpp"

namespace palettediff {

/// Seeds with this bit set are reserved for held-out evaluation corpora.
inline constexpr std::uint64_t kHeldOutBit = 1ULL << 63;

/// Procedural toy image: linear-gradient background, 2-6 anti-aliased shapes
/// filled flat, with gradients, stripes or smooth value noise.
RasterImage procedural_image(std::uint64_t seed, int size);

/// n held-out images, disjoint from anything a training source draws.
std::vector<RasterImage> procedural_corpus(int n, std::uint64_t corpus_seed, int size);

/// Source of training images.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual RasterImage draw(std::mt19937_64& rng) const = 0;
  virtual bool empty() const = 0;
  virtual int image_size() const = 0;
};

class ProceduralSource final : public ImageSource {
 public:
  explicit ProceduralSource(int size) : size_(size) {}
  RasterImage draw(std::mt19937_64& rng) const override;
  bool empty() const override { return false; }
  int image_size() const override { return size_; }

 private:
  int size_;
};

/// Fixed list of images; draws uniformly.
class ListSource final : public ImageSource {
 public:
  explicit ListSource(std::vector<RasterImage> images);
  RasterImage draw(std::mt19937_64& rng) const override;
  bool empty() const override { return images_.empty(); }
  int image_size() const override { return images_.empty() ? 0 : images_.front().width(); }

 private:
  std::vector<RasterImage> images_;
};

/// Random square crops from every PNG in a directory large enough to crop.
class FolderSource final : public ImageSource {
 public:
  FolderSource(const std::filesystem::path& dir, int size);
  RasterImage draw(std::mt19937_64& rng) const override;
  bool empty() const override { return images_.empty(); }
  int image_size() const override { return size_; }

 private:
  int size_;
  std::vector<RasterImage> images_;
};

RasterImage crop(const RasterImage& img, int left, int top, int width, int height);

}  // namespace palettediff
