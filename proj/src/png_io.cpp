#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "palettediff/error.hpp"
#include "palettediff/image.hpp"

namespace palettediff {

namespace {

RasterImage composite_over_white(const png_image& info, const std::vector<std::uint8_t>& rgba) {
  const int w = static_cast<int>(info.width);
  const int h = static_cast<int>(info.height);
  RasterImage img(w, h);
  for (int i = 0; i < w * h; ++i) {
    const std::uint8_t* p = &rgba[static_cast<std::size_t>(i) * 4];
    const double a = p[3] / 255.0;
    img.set(i, {to_channel(a * p[0] + (1.0 - a) * 255.0), to_channel(a * p[1] + (1.0 - a) * 255.0),
                to_channel(a * p[2] + (1.0 - a) * 255.0)});
  }
  return img;
}

}  // namespace

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image info;
  std::memset(&info, 0, sizeof(info));
  info.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&info, bytes.data(), bytes.size())) {
    throw Error(Errc::decode_error, std::string("malformed PNG: ") + info.message);
  }
  info.format = PNG_FORMAT_RGBA;
  if (info.width == 0 || info.height == 0 || info.width > 16384 || info.height > 16384) {
    png_image_free(&info);
    throw Error(Errc::decode_error, "unsupported PNG dimensions");
  }
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(info));
  if (!png_image_finish_read(&info, nullptr, rgba.data(), 0, nullptr)) {
    const std::string msg = info.message;
    png_image_free(&info);
    throw Error(Errc::decode_error, "malformed PNG: " + msg);
  }
  return composite_over_white(info, rgba);
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  if (img.empty()) throw Error(Errc::invalid_argument, "cannot encode an empty image");
  png_image info;
  std::memset(&info, 0, sizeof(info));
  info.version = PNG_IMAGE_VERSION;
  info.width = static_cast<png_uint_32>(img.width());
  info.height = static_cast<png_uint_32>(img.height());
  info.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(info, size, 0, img.pixels().data(), 0, nullptr)) {
    throw Error(Errc::io_error, std::string("PNG sizing failed: ") + info.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&info, out.data(), &size, 0, img.pixels().data(), 0, nullptr)) {
    throw Error(Errc::io_error, std::string("PNG encode failed: ") + info.message);
  }
  out.resize(size);
  return out;
}

RasterImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::file_not_found, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void save_image(const RasterImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_png(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io_error, "short write to " + path.string());
}

}  // namespace palettediff
