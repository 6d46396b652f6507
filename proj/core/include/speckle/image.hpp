#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace speckle {

/// Row-major grayscale plaintext with every pixel in [0, 1].
class PlainImage {
 public:
  PlainImage() = default;

  /// Throws InvalidArgument unless height, width >= 2, the buffer length
  /// matches, and every value is finite and inside [0, 1].
  PlainImage(std::size_t height, std::size_t width, std::vector<double> data);

  static PlainImage filled(std::size_t height, std::size_t width, double value);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  double operator()(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }

  friend bool operator==(const PlainImage&, const PlainImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

/// Normalised detector intensity: the ciphertext.
///
/// `raw_scale` is the peak intensity before max-normalisation;
/// `key_fingerprint` identifies the physical key that produced it
/// (0 for data that did not come from a key).
struct SpecklePattern {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;
  double raw_scale = 0.0;
  std::uint64_t key_fingerprint = 0;

  std::size_t size() const { return data.size(); }
  double operator()(std::size_t row, std::size_t col) const { return data[row * width + col]; }

  friend bool operator==(const SpecklePattern&, const SpecklePattern&) = default;
};

/// Throws InvalidArgument if the pattern's shape or values are inconsistent.
void validate(const SpecklePattern& speckle);

}  // namespace speckle
