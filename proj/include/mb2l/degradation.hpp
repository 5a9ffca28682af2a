#ifndef MB2L_DEGRADATION_HPP
#define MB2L_DEGRADATION_HPP

#include "mb2l/core.hpp"

#include <cstdint>
#include <string>

namespace mb2l {

/// Image attenuation used as the "degraded" branch of the foveated blend, or
/// applied to the whole image when the blend is disabled.
enum class Degradation { none, blur, color_jitter, gaussian_noise, low_resolution, mosaic, gray };

std::string to_string(Degradation kind);
Degradation degradation_from_string(const std::string& name);

ImageGrid<float> degrade(const ImageGrid<float>& img, Degradation kind, std::uint64_t seed);

}  // namespace mb2l

#endif  // MB2L_DEGRADATION_HPP
