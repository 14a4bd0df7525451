#include "palettediff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "palettediff/error.hpp"
#include "palettediff/util.hpp"

namespace palettediff {

namespace {

using Color = Eigen::Vector3d;

class ValueNoise {
 public:
  ValueNoise(std::mt19937_64& rng, double cell, int size) : cell_(cell) {
    n_ = static_cast<int>(std::ceil(size / cell)) + 2;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    grid_.resize(static_cast<std::size_t>(n_) * n_);
    for (double& v : grid_) v = u(rng);
  }

  double operator()(double x, double y) const {
    const double gx = x / cell_, gy = y / cell_;
    const int ix = std::clamp(static_cast<int>(gx), 0, n_ - 2);
    const int iy = std::clamp(static_cast<int>(gy), 0, n_ - 2);
    auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
    const double fx = smooth(std::clamp(gx - ix, 0.0, 1.0)), fy = smooth(std::clamp(gy - iy, 0.0, 1.0));
    auto at = [&](int a, int b) { return grid_[static_cast<std::size_t>(b) * n_ + a]; };
    const double top = at(ix, iy) * (1 - fx) + at(ix + 1, iy) * fx;
    const double bot = at(ix, iy + 1) * (1 - fx) + at(ix + 1, iy + 1) * fx;
    return top * (1 - fy) + bot * fy;
  }

 private:
  double cell_;
  int n_ = 0;
  std::vector<double> grid_;
};

enum class FillKind { flat, gradient, stripes, noise };
enum class ShapeKind { circle, ellipse, rect, triangle };

struct Fill {
  FillKind kind = FillKind::flat;
  Color a, b;
  double angle = 0.0;
  double period = 6.0;
  double amplitude = 0.0;
  std::shared_ptr<ValueNoise> noise;

  Color at(double x, double y, int size) const {
    const double ux = std::cos(angle), uy = std::sin(angle);
    switch (kind) {
      case FillKind::flat:
        return a;
      case FillKind::gradient: {
        const double t = std::clamp(0.5 + ((x - size / 2.0) * ux + (y - size / 2.0) * uy) / size, 0.0, 1.0);
        return a * (1 - t) + b * t;
      }
      case FillKind::stripes: {
        const double s = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * (x * ux + y * uy) / period);
        return a * (1 - s) + b * s;
      }
      case FillKind::noise:
        return a + Color::Constant(amplitude * (*noise)(x, y));
    }
    return a;
  }
};

struct Shape {
  ShapeKind kind = ShapeKind::circle;
  double cx = 0, cy = 0, rx = 1, ry = 1, rot = 0;
  Eigen::Vector2d p[3];
  Fill fill;

  bool contains(double x, double y) const {
    switch (kind) {
      case ShapeKind::circle:
      case ShapeKind::ellipse: {
        const double dx = x - cx, dy = y - cy;
        const double u = dx * std::cos(rot) + dy * std::sin(rot);
        const double v = -dx * std::sin(rot) + dy * std::cos(rot);
        return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
      }
      case ShapeKind::rect:
        return std::abs(x - cx) <= rx && std::abs(y - cy) <= ry;
      case ShapeKind::triangle: {
        auto side = [&](int i, int j) {
          return (p[j].x() - p[i].x()) * (y - p[i].y()) - (p[j].y() - p[i].y()) * (x - p[i].x());
        };
        const double s0 = side(0, 1), s1 = side(1, 2), s2 = side(2, 0);
        return (s0 >= 0 && s1 >= 0 && s2 >= 0) || (s0 <= 0 && s1 <= 0 && s2 <= 0);
      }
    }
    return false;
  }
};

Color random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 255.0);
  return {u(rng), u(rng), u(rng)};
}

Fill random_fill(std::mt19937_64& rng, int size) {
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::uniform_real_distribution<double> period(4.0, 10.0);
  std::uniform_real_distribution<double> amp(15.0, 45.0);
  std::uniform_real_distribution<double> cell(3.0, 8.0);
  std::uniform_real_distribution<double> shift(-70.0, 70.0);
  Fill f;
  f.kind = static_cast<FillKind>(kind(rng));
  f.a = random_color(rng);
  f.angle = angle(rng);
  switch (f.kind) {
    case FillKind::flat:
      break;
    case FillKind::gradient:
      f.b = random_color(rng);
      break;
    case FillKind::stripes:
      // Second tone is a shifted version of the first so stripes read as texture.
      f.b = (f.a + Color(shift(rng), shift(rng), shift(rng))).cwiseMax(0.0).cwiseMin(255.0);
      f.period = period(rng);
      break;
    case FillKind::noise:
      f.amplitude = amp(rng);
      f.noise = std::make_shared<ValueNoise>(rng, cell(rng), size);
      break;
  }
  return f;
}

}  // namespace

RasterImage procedural_image(std::uint64_t seed, int size) {
  if (size < 1) throw Error(Errc::invalid_argument, "image size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s = size;

  Fill background;
  background.kind = FillKind::gradient;
  background.a = random_color(rng);
  background.b = random_color(rng);
  background.angle = unit(rng) * 2.0 * std::numbers::pi;
  if (unit(rng) < 0.3) {
    background.kind = FillKind::noise;
    background.amplitude = 20.0 + 20.0 * unit(rng);
    background.noise = std::make_shared<ValueNoise>(rng, 4.0 + 6.0 * unit(rng), size);
  }

  std::uniform_int_distribution<int> count(2, 6);
  std::uniform_int_distribution<int> kind(0, 3);
  std::vector<Shape> shapes(static_cast<std::size_t>(count(rng)));
  for (Shape& sh : shapes) {
    sh.kind = static_cast<ShapeKind>(kind(rng));
    sh.cx = unit(rng) * s;
    sh.cy = unit(rng) * s;
    sh.rx = (0.08 + 0.25 * unit(rng)) * s;
    sh.ry = sh.kind == ShapeKind::circle ? sh.rx : (0.08 + 0.25 * unit(rng)) * s;
    sh.rot = unit(rng) * std::numbers::pi;
    for (auto& p : sh.p) {
      const double a = unit(rng) * 2.0 * std::numbers::pi;
      const double r = (0.15 + 0.3 * unit(rng)) * s;
      p = {sh.cx + r * std::cos(a), sh.cy + r * std::sin(a)};
    }
    sh.fill = random_fill(rng, size);
  }

  // 2x2 supersampling for anti-aliased edges.
  RasterImage img(size, size);
  constexpr double offsets[2] = {0.25, 0.75};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      Color acc = Color::Zero();
      for (double oy : offsets) {
        for (double ox : offsets) {
          const double px = x + ox, py = y + oy;
          Color c = background.at(px, py, size);
          for (auto it = shapes.rbegin(); it != shapes.rend(); ++it) {
            if (it->contains(px, py)) {
              c = it->fill.at(px, py, size);
              break;
            }
          }
          acc += c.cwiseMax(0.0).cwiseMin(255.0);
        }
      }
      acc /= 4.0;
      img.set(x, y, {to_channel(acc[0]), to_channel(acc[1]), to_channel(acc[2])});
    }
  }
  return img;
}

std::vector<RasterImage> procedural_corpus(int n, std::uint64_t corpus_seed, int size) {
  std::vector<RasterImage> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) {
    out.push_back(procedural_image(kHeldOutBit | derive_seed(corpus_seed, {static_cast<std::uint64_t>(i)}), size));
  }
  return out;
}

RasterImage ProceduralSource::draw(std::mt19937_64& rng) const {
  return procedural_image(rng() & ~kHeldOutBit, size_);
}

ListSource::ListSource(std::vector<RasterImage> images) : images_(std::move(images)) {}

RasterImage ListSource::draw(std::mt19937_64& rng) const {
  if (images_.empty()) throw Error(Errc::empty_dataset, "image list is empty");
  std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
  return images_[pick(rng)];
}

RasterImage crop(const RasterImage& img, int left, int top, int width, int height) {
  if (left < 0 || top < 0 || left + width > img.width() || top + height > img.height()) {
    throw Error(Errc::out_of_bounds, "crop lies outside the image");
  }
  RasterImage out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) out.set(x, y, img.at(left + x, top + y));
  return out;
}

FolderSource::FolderSource(const std::filesystem::path& dir, int size) : size_(size) {
  if (!std::filesystem::is_directory(dir)) throw Error(Errc::file_not_found, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    RasterImage img = load_image(f);
    if (img.width() >= size && img.height() >= size) images_.push_back(std::move(img));
  }
}

RasterImage FolderSource::draw(std::mt19937_64& rng) const {
  if (images_.empty()) throw Error(Errc::empty_dataset, "no usable images in folder");
  std::uniform_int_distribution<std::size_t> pick(0, images_.size() - 1);
  const RasterImage& img = images_[pick(rng)];
  std::uniform_int_distribution<int> left(0, img.width() - size_);
  std::uniform_int_distribution<int> top(0, img.height() - size_);
  const int l = left(rng);
  return crop(img, l, top(rng), size_, size_);
}

}  // namespace palettediff
