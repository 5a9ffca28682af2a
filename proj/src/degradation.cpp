#include "mb2l/degradation.hpp"

#include "mb2l/foveation.hpp"

#include <algorithm>
#include <random>

namespace mb2l {

namespace {

ImageGrid<float> clamp01(ImageGrid<float> img) {
  img.data = img.data.cwiseMax(0.0f).cwiseMin(1.0f);
  return img;
}

// Box-average each factor x factor block (edge blocks are partial).
ImageGrid<float> block_average(const ImageGrid<float>& img, Index factor, Index& out_h, Index& out_w) {
  out_h = (img.height + factor - 1) / factor;
  out_w = (img.width + factor - 1) / factor;
  ImageGrid<float> small(out_h, out_w, img.channels);
  for (Index br = 0; br < out_h; ++br) {
    for (Index bc = 0; bc < out_w; ++bc) {
      const Index r1 = std::min(img.height, (br + 1) * factor);
      const Index c1 = std::min(img.width, (bc + 1) * factor);
      for (Index ch = 0; ch < img.channels; ++ch) {
        double acc = 0.0;
        for (Index r = br * factor; r < r1; ++r)
          for (Index c = bc * factor; c < c1; ++c) acc += img(r, c, ch);
        small(br, bc, ch) = static_cast<float>(acc / static_cast<double>((r1 - br * factor) * (c1 - bc * factor)));
      }
    }
  }
  return small;
}

ImageGrid<float> mosaic(const ImageGrid<float>& img, Index block) {
  Index h = 0, w = 0;
  const auto small = block_average(img, block, h, w);
  ImageGrid<float> out(img.height, img.width, img.channels);
  for (Index r = 0; r < img.height; ++r)
    for (Index c = 0; c < img.width; ++c)
      for (Index ch = 0; ch < img.channels; ++ch) out(r, c, ch) = small(r / block, c / block, ch);
  return out;
}

// Downsample by box averaging, then bilinear upsampling back to full size.
ImageGrid<float> low_resolution(const ImageGrid<float>& img, Index factor) {
  Index h = 0, w = 0;
  const auto small = block_average(img, factor, h, w);
  ImageGrid<float> out(img.height, img.width, img.channels);
  for (Index r = 0; r < img.height; ++r) {
    const double y = std::clamp((r + 0.5) / static_cast<double>(factor) - 0.5, 0.0, static_cast<double>(h - 1));
    const Index y0 = static_cast<Index>(y);
    const Index y1 = std::min(h - 1, y0 + 1);
    const double fy = y - static_cast<double>(y0);
    for (Index c = 0; c < img.width; ++c) {
      const double x = std::clamp((c + 0.5) / static_cast<double>(factor) - 0.5, 0.0, static_cast<double>(w - 1));
      const Index x0 = static_cast<Index>(x);
      const Index x1 = std::min(w - 1, x0 + 1);
      const double fx = x - static_cast<double>(x0);
      for (Index ch = 0; ch < img.channels; ++ch) {
        const double top = (1 - fx) * small(y0, x0, ch) + fx * small(y0, x1, ch);
        const double bottom = (1 - fx) * small(y1, x0, ch) + fx * small(y1, x1, ch);
        out(r, c, ch) = static_cast<float>((1 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

ImageGrid<float> gray(const ImageGrid<float>& img) {
  if (img.channels == 1) return img;
  ImageGrid<float> out(img.height, img.width, img.channels);
  const Eigen::RowVectorXf luma = 0.299f * img.data.row(0) + 0.587f * img.data.row(1) + 0.114f * img.data.row(2);
  for (Index ch = 0; ch < img.channels; ++ch) out.data.row(ch) = luma;
  return out;
}

ImageGrid<float> color_jitter(const ImageGrid<float>& img, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> factor(0.6f, 1.4f);
  const float brightness = factor(rng);
  const float contrast = factor(rng);
  const float saturation = factor(rng);
  ImageGrid<float> out = img;
  out.data *= brightness;
  const float mean = out.data.mean();
  out.data = ((out.data.array() - mean) * contrast + mean).matrix();
  if (out.channels == 3) {
    const Eigen::RowVectorXf luma =
        0.299f * out.data.row(0) + 0.587f * out.data.row(1) + 0.114f * out.data.row(2);
    for (Index ch = 0; ch < 3; ++ch) out.data.row(ch) = luma + saturation * (out.data.row(ch) - luma);
  }
  return clamp01(std::move(out));
}

ImageGrid<float> gaussian_noise(const ImageGrid<float>& img, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  ImageGrid<float> out = img;
  for (Index k = 0; k < out.data.size(); ++k) out.data(k) += noise(rng);
  return clamp01(std::move(out));
}

}  // namespace

std::string to_string(Degradation kind) {
  switch (kind) {
    case Degradation::none: return "none";
    case Degradation::blur: return "blur";
    case Degradation::color_jitter: return "color_jitter";
    case Degradation::gaussian_noise: return "gaussian_noise";
    case Degradation::low_resolution: return "low_resolution";
    case Degradation::mosaic: return "mosaic";
    case Degradation::gray: return "gray";
  }
  return "none";
}

Degradation degradation_from_string(const std::string& name) {
  for (auto kind : {Degradation::none, Degradation::blur, Degradation::color_jitter, Degradation::gaussian_noise,
                    Degradation::low_resolution, Degradation::mosaic, Degradation::gray}) {
    if (to_string(kind) == name) return kind;
  }
  throw InvalidParameter("unknown degradation '" + name +
                         "' (expected none, blur, color_jitter, gaussian_noise, low_resolution, mosaic or gray)");
}

ImageGrid<float> degrade(const ImageGrid<float>& img, Degradation kind, std::uint64_t seed) {
  validate_image(img);
  const Index factor = std::max<Index>(2, std::min(img.height, img.width) / 16);
  switch (kind) {
    case Degradation::none: return img;
    case Degradation::blur: return blur_image(img, default_blur_kernel<float>(img.height, img.width));
    case Degradation::color_jitter: return color_jitter(img, seed);
    case Degradation::gaussian_noise: return gaussian_noise(img, seed);
    case Degradation::low_resolution: return clamp01(low_resolution(img, factor));
    case Degradation::mosaic: return clamp01(mosaic(img, 2 * factor));
    case Degradation::gray: return clamp01(gray(img));
  }
  return img;
}

}  // namespace mb2l
