#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace photoprior {

// Decoded 8-bit RGB bitmap, rows packed without padding.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3) {}

  bool empty() const { return width <= 0 || height <= 0 || pixels.empty(); }
  bool valid() const {
    return !empty() && pixels.size() == static_cast<size_t>(width) * height * 3;
  }
  bool operator==(const RgbImage&) const = default;
};

RgbImage decode_image(std::span<const std::uint8_t> encoded);
RgbImage load_image(const std::filesystem::path& path);
void save_image(const RgbImage& image, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_jpeg(const RgbImage& image, int quality = 90);

/// Downscales so the longest edge is at most max_edge, preserving aspect.
/// Images already within the limit are returned unchanged.
RgbImage fit_within(const RgbImage& image, int max_edge);

}  // namespace photoprior
