#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "palettediff/conditioning.hpp"
#include "palettediff/image.hpp"

namespace palettediff::test {

inline RasterImage random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> u(0, 255);
  RasterImage img(w, h);
  for (int i = 0; i < img.size(); ++i)
    img.set(i, {static_cast<std::uint8_t>(u(rng)), static_cast<std::uint8_t>(u(rng)), static_cast<std::uint8_t>(u(rng))});
  return img;
}

/// Image drawing every pixel from a small random color set.
inline RasterImage few_color_image(std::mt19937_64& rng, int w, int h, int colors) {
  const RasterImage pool = random_image(rng, colors, 1);
  std::uniform_int_distribution<int> pick(0, colors - 1);
  RasterImage img(w, h);
  for (int i = 0; i < img.size(); ++i) img.set(i, pool.at(pick(rng)));
  return img;
}

/// Conditioning stack with every entry uniform in [-1, 1].
inline ConditioningStack random_stack(std::mt19937_64& rng, int size) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  ConditioningStack s{size, size, ConditioningStack::Storage(channel::count, size * size)};
  for (Eigen::Index i = 0; i < s.data.size(); ++i) s.data.data()[i] = u(rng);
  return s;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("palettediff_test_" + name);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace palettediff::test
