#include "palettediff/quantize.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "json.hpp"

#include "palettediff/error.hpp"

namespace palettediff {

namespace {

std::uint32_t pack(Rgb c) { return (std::uint32_t{c[0]} << 16) | (std::uint32_t{c[1]} << 8) | c[2]; }

int squared_distance(Rgb a, Rgb b) {
  const int dr = a[0] - b[0], dg = a[1] - b[1], db = a[2] - b[2];
  return dr * dr + dg * dg + db * db;
}

struct Box {
  std::vector<Rgb> colors;  // with multiplicity

  // Largest channel range and the channel realizing it (lowest channel on ties).
  std::pair<int, int> widest() const {
    int best = -1, channel = 0;
    for (int ch = 0; ch < 3; ++ch) {
      auto [lo, hi] = std::minmax_element(colors.begin(), colors.end(),
                                          [ch](Rgb a, Rgb b) { return a[ch] < b[ch]; });
      const int range = (*hi)[ch] - (*lo)[ch];
      if (range > best) best = range, channel = ch;
    }
    return {best, channel};
  }

  Rgb mean() const {
    std::array<std::uint64_t, 3> sum{};
    for (const Rgb& c : colors)
      for (int ch = 0; ch < 3; ++ch) sum[ch] += c[ch];
    const double n = static_cast<double>(colors.size());
    return {to_channel(sum[0] / n), to_channel(sum[1] / n), to_channel(sum[2] / n)};
  }
};

}  // namespace

Palette::Palette(std::vector<Rgb> colors) : colors_(std::move(colors)) {
  if (colors_.empty() || colors_.size() > 256) {
    throw Error(Errc::invalid_argument, "palette must hold between 1 and 256 colors");
  }
  std::set<Rgb> seen(colors_.begin(), colors_.end());
  if (seen.size() != colors_.size()) {
    throw Error(Errc::invalid_argument, "palette contains duplicate colors");
  }
}

bool PaletteSpec::valid(int n) noexcept {
  return n >= kMin && n <= kMax && (n & (n - 1)) == 0;
}

PaletteSpec::PaletteSpec(int n_colors) : n_(n_colors) {
  if (!valid(n_colors)) {
    throw Error(Errc::invalid_argument, "colors must be a power of two in [4,128]");
  }
}

std::vector<int> PaletteSpec::all() {
  std::vector<int> out;
  for (int n = kMin; n <= kMax; n *= 2) out.push_back(n);
  return out;
}

IndexedImage::IndexedImage(int width, int height, std::vector<std::uint8_t> indices, Palette palette)
    : width_(width), height_(height), indices_(std::move(indices)), palette_(std::move(palette)) {
  if (width < 1 || height < 1 || indices_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(Errc::dimension_mismatch, "index map does not match width*height");
  }
  for (std::uint8_t idx : indices_) {
    if (idx >= palette_.size()) throw Error(Errc::out_of_bounds, "palette index out of range");
  }
}

IndexedImage median_cut(const RasterImage& img, int max_colors) {
  if (max_colors < 1 || max_colors > 256) {
    throw Error(Errc::invalid_argument, "palette budget must lie in [1, 256]");
  }
  std::vector<Box> boxes(1);
  boxes[0].colors.reserve(static_cast<std::size_t>(img.size()));
  for (int i = 0; i < img.size(); ++i) boxes[0].colors.push_back(img.at(i));

  while (static_cast<int>(boxes.size()) < max_colors) {
    int target = -1, best_range = 0, channel = 0;
    for (int b = 0; b < static_cast<int>(boxes.size()); ++b) {
      auto [range, ch] = boxes[static_cast<std::size_t>(b)].widest();
      if (range > best_range) best_range = range, target = b, channel = ch;
    }
    if (target < 0) break;  // every box holds a single color

    auto& cols = boxes[static_cast<std::size_t>(target)].colors;
    std::stable_sort(cols.begin(), cols.end(), [channel](Rgb a, Rgb b) { return a[channel] < b[channel]; });
    // Split at the value boundary closest to the median so equal values stay together.
    const std::size_t n = cols.size();
    const std::size_t mid = n / 2;
    std::size_t split = 0;
    for (std::size_t off = 0; off <= n; ++off) {
      const std::size_t cands[2] = {mid >= off ? mid - off : 0, mid + off};
      bool found = false;
      for (std::size_t s : cands) {
        if (s >= 1 && s < n && cols[s - 1][channel] < cols[s][channel]) {
          split = s;
          found = true;
          break;
        }
      }
      if (found) break;
    }
    Box upper{std::vector<Rgb>(cols.begin() + static_cast<std::ptrdiff_t>(split), cols.end())};
    cols.resize(split);
    boxes.push_back(std::move(upper));
  }

  std::vector<Rgb> colors;
  colors.reserve(boxes.size());
  for (const Box& b : boxes) colors.push_back(b.mean());
  return project_to_palette(img, Palette(std::move(colors)));
}

RasterImage render(const IndexedImage& q) {
  RasterImage out(q.width(), q.height());
  const auto& idx = q.indices();
  for (std::size_t i = 0; i < idx.size(); ++i) out.set(static_cast<int>(i), q.palette()[idx[i]]);
  return out;
}

int nearest_color(Rgb c, const Palette& pal) {
  int best = 0;
  int best_d = squared_distance(c, pal[0]);
  for (int k = 1; k < pal.size(); ++k) {
    const int d = squared_distance(c, pal[k]);
    if (d < best_d) best_d = d, best = k;
  }
  return best;
}

IndexedImage project_to_palette(const RasterImage& img, const Palette& pal) {
  if (pal.size() == 0) throw Error(Errc::invalid_argument, "palette is empty");
  std::unordered_map<std::uint32_t, std::uint8_t> cache;
  std::vector<std::uint8_t> indices(static_cast<std::size_t>(img.size()));
  for (int i = 0; i < img.size(); ++i) {
    const Rgb c = img.at(i);
    auto [it, inserted] = cache.try_emplace(pack(c), 0);
    if (inserted) it->second = static_cast<std::uint8_t>(nearest_color(c, pal));
    indices[static_cast<std::size_t>(i)] = it->second;
  }
  return IndexedImage(img.width(), img.height(), std::move(indices), pal);
}

IndexedImage index_exact(const RasterImage& img) {
  std::unordered_map<std::uint32_t, std::uint8_t> lookup;
  std::vector<Rgb> colors;
  std::vector<std::uint8_t> indices(static_cast<std::size_t>(img.size()));
  for (int i = 0; i < img.size(); ++i) {
    const Rgb c = img.at(i);
    auto it = lookup.find(pack(c));
    if (it == lookup.end()) {
      if (colors.size() == 256) throw Error(Errc::invalid_argument, "image has more than 256 colors");
      it = lookup.emplace(pack(c), static_cast<std::uint8_t>(colors.size())).first;
      colors.push_back(c);
    }
    indices[static_cast<std::size_t>(i)] = it->second;
  }
  return IndexedImage(img.width(), img.height(), std::move(indices), Palette(std::move(colors)));
}

int count_distinct_colors(const RasterImage& img) {
  std::set<std::uint32_t> seen;
  for (int i = 0; i < img.size(); ++i) seen.insert(pack(img.at(i)));
  return static_cast<int>(seen.size());
}

nlohmann::json palette_to_json(const Palette& pal) {
  auto j = nlohmann::json::array();
  for (const Rgb& c : pal.colors()) j.push_back({c[0], c[1], c[2]});
  return j;
}

Palette palette_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(Errc::decode_error, "palette must be a JSON array");
  std::vector<Rgb> colors;
  for (const auto& e : j) {
    if (!e.is_array() || e.size() != 3) throw Error(Errc::decode_error, "palette entries must be [r,g,b]");
    Rgb c{};
    for (int ch = 0; ch < 3; ++ch) {
      if (!e[static_cast<std::size_t>(ch)].is_number_integer()) {
        throw Error(Errc::decode_error, "palette channels must be integers");
      }
      const int v = e[static_cast<std::size_t>(ch)].get<int>();
      if (v < 0 || v > 255) throw Error(Errc::decode_error, "palette channel out of [0,255]");
      c[static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(v);
    }
    colors.push_back(c);
  }
  return Palette(std::move(colors));
}

void save_palette(const Palette& pal, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out << palette_to_json(pal).dump() << '\n';
}

Palette load_palette(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::file_not_found, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::decode_error, std::string("palette JSON: ") + e.what());
  }
  return palette_from_json(j);
}

}  // namespace palettediff
