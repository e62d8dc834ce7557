#include "crowdmt/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "crowdmt/errors.hpp"

namespace crowdmt {

Image read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ValidationError("cannot decode image " + path.string());
  Image img(bgr.rows, bgr.cols, 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2];
      img.at(y, x, 1) = row[x][1];
      img.at(y, x, 2) = row[x][0];
    }
  }
  return img;
}

void write_image_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 3) throw std::invalid_argument("write_image_png expects 3 channels");
  cv::Mat bgr(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(std::round(image.at(y, x, c)), 0.0f, 255.0f);
        row[x][2 - c] = static_cast<unsigned char>(v);
      }
    }
  }
  if (!cv::imwrite(path.string(), bgr)) throw std::runtime_error("cannot write image " + path.string());
}

Image resize_bilinear(const Image& image, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) throw std::invalid_argument("resize target must be positive");
  if (image.height == out_height && image.width == out_width) return image;
  Image out(out_height, out_width, image.channels);
  const cv::Mat src(image.height, image.width, CV_32FC(image.channels), const_cast<float*>(image.pixels.data()));
  cv::Mat dst(out_height, out_width, CV_32FC(out.channels), out.pixels.data());
  cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
  return out;
}

}  // namespace crowdmt
