#include "photoprior/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "photoprior/error.hpp"

namespace photoprior {
namespace {

cv::Mat to_bgr(const RgbImage& image) {
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

RgbImage from_bgr(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage out(rgb.cols, rgb.rows);
  for (int r = 0; r < rgb.rows; ++r)
    std::copy_n(rgb.ptr<std::uint8_t>(r), rgb.cols * 3, out.pixels.data() + static_cast<size_t>(r) * rgb.cols * 3);
  return out;
}

}  // namespace

RgbImage decode_image(std::span<const std::uint8_t> encoded) {
  if (encoded.empty()) throw Error(Errc::decode, "empty image buffer");
  cv::Mat buf(1, static_cast<int>(encoded.size()), CV_8UC1, const_cast<std::uint8_t*>(encoded.data()));
  cv::Mat bgr = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error(Errc::decode, "not a decodable image");
  return from_bgr(bgr);
}

RgbImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::not_found, "cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_image(bytes);
  } catch (const Error& e) {
    throw Error(Errc::decode, path.string() + ": " + e.what());
  }
}

void save_image(const RgbImage& image, const std::filesystem::path& path) {
  if (!image.valid()) throw Error(Errc::invalid_argument, "cannot save an empty image");
  if (!cv::imwrite(path.string(), to_bgr(image)))
    throw Error(Errc::io, "cannot write image " + path.string());
}

std::vector<std::uint8_t> encode_jpeg(const RgbImage& image, int quality) {
  if (!image.valid()) throw Error(Errc::invalid_argument, "cannot encode an empty image");
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".jpg", to_bgr(image), out, {cv::IMWRITE_JPEG_QUALITY, quality}))
    throw Error(Errc::encode, "jpeg encoding failed");
  return out;
}

RgbImage fit_within(const RgbImage& image, int max_edge) {
  if (max_edge <= 0) throw Error(Errc::invalid_argument, "max_edge must be positive");
  const int longest = std::max(image.width, image.height);
  if (longest <= max_edge) return image;
  const double s = static_cast<double>(max_edge) / longest;
  const int w = std::clamp(static_cast<int>(std::lround(image.width * s)), 1, max_edge);
  const int h = std::clamp(static_cast<int>(std::lround(image.height * s)), 1, max_edge);
  cv::Mat resized;
  cv::resize(to_bgr(image), resized, cv::Size(w, h), 0, 0, cv::INTER_AREA);
  return from_bgr(resized);
}

}  // namespace photoprior
