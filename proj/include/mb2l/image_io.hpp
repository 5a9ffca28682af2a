#ifndef MB2L_IMAGE_IO_HPP
#define MB2L_IMAGE_IO_HPP

#include "mb2l/core.hpp"

#include <filesystem>

namespace mb2l {

/// 8-bit PNG (gray or RGB) writer; values are clamped to [0,1].
void write_png(const std::filesystem::path& path, const ImageGrid<float>& img);

/// Reads gray, gray+alpha, RGB or RGBA PNGs; alpha is dropped.
ImageGrid<float> read_png(const std::filesystem::path& path);

/// Maps a matrix to a grayscale image, min -> 0 and max -> 1, each cell
/// expanded to a scale x scale block.
ImageGrid<float> heatmap_image(const Matrix<float>& values, int scale = 1);

/// Places images side by side (all must share height and channel count).
ImageGrid<float> contact_sheet(const std::vector<ImageGrid<float>>& images, int gap = 2);

}  // namespace mb2l

#endif  // MB2L_IMAGE_IO_HPP
