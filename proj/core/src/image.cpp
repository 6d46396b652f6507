#include "speckle/image.hpp"

#include <cmath>
#include <string>

#include "speckle/error.hpp"

namespace speckle {

PlainImage::PlainImage(std::size_t height, std::size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height_ < 2 || width_ < 2) {
    throw InvalidArgument("plain image must be at least 2x2, got " + std::to_string(height_) +
                          "x" + std::to_string(width_));
  }
  if (data_.size() != height_ * width_) {
    throw InvalidArgument("plain image buffer holds " + std::to_string(data_.size()) +
                          " values, expected " + std::to_string(height_ * width_));
  }
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidArgument("plain image value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

PlainImage PlainImage::filled(std::size_t height, std::size_t width, double value) {
  return PlainImage(height, width, std::vector<double>(height * width, value));
}

void validate(const SpecklePattern& speckle) {
  if (speckle.height == 0 || speckle.width == 0 ||
      speckle.data.size() != speckle.height * speckle.width) {
    throw InvalidArgument("speckle shape " + std::to_string(speckle.height) + "x" +
                          std::to_string(speckle.width) + " does not match " +
                          std::to_string(speckle.data.size()) + " values");
  }
  for (double v : speckle.data) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InvalidArgument("speckle value " + std::to_string(v) + " outside [0, 1]");
    }
  }
  if (!(speckle.raw_scale >= 0.0) || !std::isfinite(speckle.raw_scale)) {
    throw InvalidArgument("speckle raw_scale must be finite and non-negative");
  }
}

}  // namespace speckle
