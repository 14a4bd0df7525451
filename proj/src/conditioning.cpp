#include "palettediff/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"

#include "palettediff/error.hpp"

namespace palettediff {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::noTex: return "noTex";
    case Variant::L: return "L";
    case Variant::G: return "G";
    case Variant::T: return "T";
  }
  return "noTex";
}

Variant parse_variant(std::string_view text) {
  if (text == "noTex" || text == "notex") return Variant::noTex;
  if (text == "L") return Variant::L;
  if (text == "G") return Variant::G;
  if (text == "T") return Variant::T;
  throw Error(Errc::invalid_argument, "variant must be one of noTex, L, G, T");
}

PlaneT<float> ConditioningStack::plane(int ch) const {
  PlaneT<float> p(height, width);
  for (int i = 0; i < width * height; ++i) p(i / width, i % width) = data(ch, i);
  return p;
}

Plane MaskSpec::plane() const {
  Plane p = Plane::Zero(image_height, image_width);
  for (const Rect& r : rects) {
    if (r.height > 0 && r.width > 0) p.block(r.top, r.left, r.height, r.width) = 1.0;
  }
  return p;
}

double MaskSpec::coverage() const {
  if (image_height <= 0 || image_width <= 0) return 0.0;
  return plane().sum() / (static_cast<double>(image_height) * image_width);
}

void validate_mask(const MaskSpec& mask) {
  for (const Rect& r : mask.rects) {
    if (r.top < 0 || r.left < 0 || r.height < 0 || r.width < 0 || r.top + r.height > mask.image_height ||
        r.left + r.width > mask.image_width) {
      throw Error(Errc::out_of_bounds, "mask rectangle lies outside the image");
    }
  }
}

namespace {

void fill_rgb(ConditioningStack& s, const RasterImage& img) {
  s.data.topRows<3>() = img.pixels().cast<float>() / 255.0f;
}

// Writes channels 4..6 for a valid texture source.
void fill_texture(ConditioningStack& s, Variant variant, const RasterImage& src) {
  s.data.bottomRows<3>().setZero();
  if (variant == Variant::noTex) return;
  const Plane lum = luminance(src);
  const int w = s.width;
  auto put = [&](int ch, const Plane& p, double scale) {
    for (int i = 0; i < w * s.height; ++i) s.data(ch, i) = static_cast<float>(p(i / w, i % w) * scale);
  };
  switch (variant) {
    case Variant::L:
      put(channel::texture_a, lum, 1.0 / 255.0);
      break;
    case Variant::G: {
      const GradientPair g = gradients(lum);
      put(channel::texture_a, g.gx, 1.0 / 255.0);
      put(channel::texture_b, g.gy, 1.0 / 255.0);
      break;
    }
    case Variant::T: {
      const GradientPair g = gradients(lum);
      const GradientPair b = threshold_gradients(g.gx, g.gy, 8.0);
      put(channel::texture_a, b.gx, 1.0);
      put(channel::texture_b, b.gy, 1.0);
      break;
    }
    case Variant::noTex:
      break;
  }
  s.data.row(channel::texture_indicator).setOnes();
}

}  // namespace

ConditioningStack build_dequant_stack_n(const IndexedImage& q, int n_colors, Variant variant,
                                        const RasterImage* texture_src, bool texture_on) {
  if (texture_on && texture_src == nullptr) {
    throw Error(Errc::missing_texture, "texture conditioning requested without a texture source");
  }
  if (texture_on && (texture_src->width() != q.width() || texture_src->height() != q.height())) {
    throw Error(Errc::dimension_mismatch, "texture source does not match the quantized image");
  }
  ConditioningStack s;
  s.width = q.width();
  s.height = q.height();
  s.data = ConditioningStack::Storage::Zero(channel::count, static_cast<Eigen::Index>(q.width()) * q.height());
  fill_rgb(s, render(q));
  s.data.row(channel::color_indicator).setConstant(static_cast<float>(n_colors) / 256.0f);
  if (texture_on) fill_texture(s, variant, *texture_src);
  return s;
}

ConditioningStack build_dequant_stack(const IndexedImage& q, PaletteSpec spec, Variant variant,
                                      const RasterImage* texture_src, bool texture_on) {
  return build_dequant_stack_n(q, spec.n_colors(), variant, texture_src, texture_on);
}

ConditioningStack build_inpaint_stack(const RasterImage& gt, const MaskSpec& mask, const Fill& fill,
                                      Variant variant, bool texture_in_mask, bool texture_on) {
  if (mask.image_height != gt.height() || mask.image_width != gt.width()) {
    throw Error(Errc::dimension_mismatch, "mask does not match image");
  }
  validate_mask(mask);
  const Plane m = mask.plane();
  const Rgb color = std::holds_alternative<MeanFill>(fill) ? mean_color(gt, m) : std::get<Rgb>(fill);

  ConditioningStack s;
  s.width = gt.width();
  s.height = gt.height();
  s.data = ConditioningStack::Storage::Zero(channel::count, static_cast<Eigen::Index>(gt.size()));
  fill_rgb(s, gt);
  s.data.row(channel::color_indicator).setOnes();
  if (texture_on) fill_texture(s, variant, gt);
  const Eigen::Vector3f fill_unit(color[0] / 255.0f, color[1] / 255.0f, color[2] / 255.0f);
  for (int i = 0; i < gt.size(); ++i) {
    if (m(i / gt.width(), i % gt.width()) == 0.0) continue;
    s.data.col(i).head<3>() = fill_unit;
    s.data(channel::color_indicator, i) = 1.0f / 256.0f;
    if (!texture_in_mask) s.data.col(i).tail<3>().setZero();
  }
  return s;
}

MaskSpec random_mask(int height, int width, std::uint64_t seed, double lo, double hi) {
  if (!(lo > 0.0 && lo <= hi && hi <= 1.0)) {
    throw Error(Errc::invalid_argument, "area range must satisfy 0 < lo <= hi <= 1");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> area_dist(lo, hi);
  std::uniform_real_distribution<double> log_aspect(std::log(0.5), std::log(2.0));
  const double area = area_dist(rng);
  const double aspect = std::exp(log_aspect(rng));

  const double total = static_cast<double>(height) * width;
  const double h_real = std::clamp(std::sqrt(area * total * aspect), area * height, static_cast<double>(height));
  const int h = std::clamp(static_cast<int>(std::lround(h_real)), 1, height);
  const int w = std::clamp(static_cast<int>(std::lround(area * total / h)), 1, width);

  std::uniform_int_distribution<int> top(0, height - h);
  std::uniform_int_distribution<int> left(0, width - w);
  MaskSpec mask{height, width, {}};
  const int t = top(rng);
  mask.rects.push_back({t, left(rng), h, w});
  return mask;
}

void save_stack(const ConditioningStack& stack, std::string_view variant_tag, const std::filesystem::path& path) {
  nlohmann::json header = {{"format", "palettediff-stack"},
                           {"version", 1},
                           {"shape", {channel::count, stack.height, stack.width}},
                           {"dtype", "float32-le"},
                           {"variant", variant_tag}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << header.dump() << '\n';
  // Planar, channel-major, row-major within each plane.
  for (int ch = 0; ch < channel::count; ++ch) {
    for (int i = 0; i < stack.width * stack.height; ++i) {
      const float v = stack.data(ch, i);
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      const unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                   static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
      out.write(reinterpret_cast<const char*>(le), 4);
    }
  }
  if (!out) throw Error(Errc::io_error, "short write to " + path.string());
}

ConditioningStack load_stack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_not_found, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::decode_error, std::string("stack header: ") + e.what());
  }
  const auto shape = header.at("shape");
  if (shape.at(0).get<int>() != channel::count) throw Error(Errc::decode_error, "stack must have 7 channels");
  ConditioningStack s;
  s.height = shape.at(1).get<int>();
  s.width = shape.at(2).get<int>();
  s.data.resize(channel::count, static_cast<Eigen::Index>(s.width) * s.height);
  for (int ch = 0; ch < channel::count; ++ch) {
    for (int i = 0; i < s.width * s.height; ++i) {
      unsigned char le[4];
      if (!in.read(reinterpret_cast<char*>(le), 4)) throw Error(Errc::decode_error, "truncated stack payload");
      const std::uint32_t bits = std::uint32_t{le[0]} | (std::uint32_t{le[1]} << 8) |
                                 (std::uint32_t{le[2]} << 16) | (std::uint32_t{le[3]} << 24);
      float v;
      std::memcpy(&v, &bits, sizeof v);
      s.data(ch, i) = v;
    }
  }
  return s;
}

}  // namespace palettediff
