#include "mb2l/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace mb2l {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

void write_png(const std::filesystem::path& path, const ImageGrid<float>& img) {
  require(img.channels == 1 || img.channels == 3, "PNG export supports 1 or 3 channels");
  require(img.height >= 1 && img.width >= 1, "PNG export needs a non-empty image");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width * img.channels));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index r = 0; r < img.height; ++r) {
    for (Index c = 0; c < img.width; ++c)
      for (Index ch = 0; ch < img.channels; ++ch)
        row[static_cast<std::size_t>(c * img.channels + ch)] = to_byte(img(r, c, ch));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageGrid<float> read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw ParseError("cannot open image " + path.string());
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw ParseError(path.string() + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  png_set_palette_to_rgb(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const auto width = static_cast<Index>(png_get_image_width(png, info));
  const auto height = static_cast<Index>(png_get_image_height(png, info));
  const auto channels = static_cast<Index>(png_get_channels(png, info));
  pixels.resize(static_cast<std::size_t>(width * height * channels));
  rows.resize(static_cast<std::size_t>(height));
  for (Index r = 0; r < height; ++r) rows[static_cast<std::size_t>(r)] = pixels.data() + r * width * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  require(channels == 1 || channels == 3, "unsupported PNG channel layout in " + path.string());
  ImageGrid<float> img(height, width, channels);
  for (Index r = 0; r < height; ++r)
    for (Index c = 0; c < width; ++c)
      for (Index ch = 0; ch < channels; ++ch)
        img(r, c, ch) = static_cast<float>(pixels[static_cast<std::size_t>((r * width + c) * channels + ch)]) / 255.0f;
  return img;
}

ImageGrid<float> heatmap_image(const Matrix<float>& values, int scale) {
  require(scale >= 1, "heatmap scale must be >= 1");
  require(values.size() > 0, "heatmap needs a non-empty matrix");
  const float lo = values.minCoeff();
  const float hi = values.maxCoeff();
  const float span = hi > lo ? hi - lo : 1.0f;
  ImageGrid<float> img(values.rows() * scale, values.cols() * scale, 1);
  for (Index r = 0; r < img.height; ++r)
    for (Index c = 0; c < img.width; ++c) img(r, c, 0) = (values(r / scale, c / scale) - lo) / span;
  return img;
}

ImageGrid<float> contact_sheet(const std::vector<ImageGrid<float>>& images, int gap) {
  require(!images.empty(), "contact sheet needs at least one image");
  require(gap >= 0, "gap must be >= 0");
  const Index h = images.front().height;
  const Index ch = images.front().channels;
  Index width = 0;
  for (const auto& img : images) {
    require(img.height == h && img.channels == ch, "contact sheet images must share height and channels");
    width += img.width;
  }
  width += gap * static_cast<Index>(images.size() - 1);
  ImageGrid<float> sheet = ImageGrid<float>::constant(h, width, ch, 1.0f);
  Index x0 = 0;
  for (const auto& img : images) {
    for (Index r = 0; r < h; ++r)
      for (Index c = 0; c < img.width; ++c)
        for (Index k = 0; k < ch; ++k) sheet(r, x0 + c, k) = img(r, c, k);
    x0 += img.width + gap;
  }
  return sheet;
}

}  // namespace mb2l
