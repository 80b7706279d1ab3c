#pragma once

#include <filesystem>

#include "gsicp/image.hpp"

namespace gsicp {

/// 8-bit PNG/JPEG colour image as RGB in [0,1].
Image loadColorImage(const std::filesystem::path& path);

/// 16-bit (or 8-bit) single-channel depth; metres = raw / depth_scale.
Image loadDepthImage(const std::filesystem::path& path, double depth_scale);

/// RGB in [0,1] to 8-bit PNG/JPEG (by extension).
void writeColorImage(const std::filesystem::path& path, const Image& rgb);

/// Metres to 16-bit PNG with raw = round(depth * depth_scale).
void writeDepthImage(const std::filesystem::path& path, const Image& depth, double depth_scale);

}  // namespace gsicp
