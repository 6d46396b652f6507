#include "speckle/optics.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "byte_order.hpp"
#include "speckle/error.hpp"
#include "speckle/hash.hpp"
#include "speckle/parallel.hpp"
#include "speckle/rng.hpp"

namespace speckle {

SpeckleShape square_shape(std::size_t n_out) {
  auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n_out))));
  if (side * side != n_out) {
    throw InvalidArgument("n_out=" + std::to_string(n_out) +
                          " is not a perfect square; give the speckle height and width");
  }
  return {side, side};
}

FovSpec quarter_fov(SpeckleShape shape) {
  return {0, 0, shape.height / 2, shape.width / 2};
}

std::uint64_t key_fingerprint(const Eigen::MatrixXcd& matrix) {
  std::vector<std::byte> row;
  std::uint64_t state = kFnvOffset;
  for (Eigen::Index j = 0; j < matrix.rows(); ++j) {
    row.clear();
    for (Eigen::Index k = 0; k < matrix.cols(); ++k) {
      detail::put_le(row, matrix(j, k).real());
      detail::put_le(row, matrix(j, k).imag());
    }
    state = fnv1a(row, state);
  }
  return state;
}

PhysicalKey generate_key(std::uint64_t seed, std::size_t n_in, std::size_t n_out) {
  if (n_in == 0 || n_out == 0) {
    throw InvalidArgument("key dimensions must be positive, got n_in=" + std::to_string(n_in) +
                          " n_out=" + std::to_string(n_out));
  }
  PhysicalKey key;
  key.seed = seed;
  key.n_in = n_in;
  key.n_out = n_out;
  key.matrix.resize(static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(n_in));

  Xoshiro256 rng(derive_seed(seed, "key"));
  const double part_sd = std::sqrt(1.0 / (2.0 * static_cast<double>(n_in)));
  for (Eigen::Index j = 0; j < key.matrix.rows(); ++j) {
    for (Eigen::Index k = 0; k < key.matrix.cols(); ++k) {
      const double re = part_sd * rng.normal();
      const double im = part_sd * rng.normal();
      key.matrix(j, k) = {re, im};
    }
  }
  key.fingerprint = key_fingerprint(key.matrix);
  return key;
}

Eigen::VectorXcd phase_encode(const PlainImage& image) {
  Eigen::VectorXcd x(static_cast<Eigen::Index>(image.size()));
  const auto pixels = image.data();
  for (std::size_t k = 0; k < pixels.size(); ++k) {
    const double phase = 2.0 * std::numbers::pi * pixels[k];
    x[static_cast<Eigen::Index>(k)] = {std::cos(phase), std::sin(phase)};
  }
  return x;
}

namespace {

void check_input(const PhysicalKey& key, const PlainImage& image) {
  if (image.size() != key.n_in) {
    throw InvalidArgument("plaintext has " + std::to_string(image.height()) + "x" +
                          std::to_string(image.width()) + "=" + std::to_string(image.size()) +
                          " pixels but the key expects n_in=" + std::to_string(key.n_in));
  }
}

}  // namespace

Eigen::VectorXcd detect_field(const PhysicalKey& key, const PlainImage& image) {
  check_input(key, image);
  return key.matrix * phase_encode(image);
}

SpecklePattern encrypt(const PhysicalKey& key, const PlainImage& image, SpeckleShape shape) {
  if (shape.size() != key.n_out) {
    throw InvalidArgument("speckle shape " + std::to_string(shape.height) + "x" +
                          std::to_string(shape.width) + " does not match key n_out=" +
                          std::to_string(key.n_out));
  }
  const Eigen::VectorXcd field = detect_field(key, image);

  SpecklePattern out;
  out.height = shape.height;
  out.width = shape.width;
  out.key_fingerprint = key.fingerprint;
  out.data.resize(key.n_out);
  double peak = 0.0;
  for (std::size_t j = 0; j < key.n_out; ++j) {
    const double intensity = std::norm(field[static_cast<Eigen::Index>(j)]);
    out.data[j] = intensity;
    peak = std::max(peak, intensity);
  }
  if (!(peak > 0.0) || !std::isfinite(peak)) {
    throw InternalError("detected intensity is zero or non-finite everywhere");
  }
  for (double& v : out.data) v /= peak;
  out.raw_scale = peak;
  return out;
}

SpecklePattern encrypt(const PhysicalKey& key, const PlainImage& image) {
  return encrypt(key, image, square_shape(key.n_out));
}

std::vector<SpecklePattern> encrypt_all(const PhysicalKey& key, std::span<const PlainImage> images,
                                        SpeckleShape shape, unsigned threads) {
  std::vector<SpecklePattern> out(images.size());
  parallel_for(images.size(), threads, [&](std::size_t i) { out[i] = encrypt(key, images[i], shape); });
  return out;
}

SpecklePattern add_noise(const SpecklePattern& speckle, const NoiseSpec& spec) {
  if (!(spec.sd_fraction >= 0.0) || !std::isfinite(spec.sd_fraction)) {
    throw InvalidArgument("noise sd_fraction must be finite and >= 0");
  }
  validate(speckle);
  if (spec.sd_fraction == 0.0) return speckle;

  double mean = 0.0;
  for (double v : speckle.data) mean += v;
  mean /= static_cast<double>(speckle.data.size());
  const double sigma = spec.sd_fraction * mean;

  SpecklePattern out = speckle;
  Xoshiro256 rng(derive_seed(spec.seed, "noise"));
  for (double& v : out.data) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return out;
}

SpecklePattern crop_fov(const SpecklePattern& speckle, const FovSpec& spec) {
  if (spec.crop_height == 0 || spec.crop_width == 0 ||
      spec.origin_row + spec.crop_height > speckle.height ||
      spec.origin_col + spec.crop_width > speckle.width) {
    throw InvalidArgument("crop window rows [" + std::to_string(spec.origin_row) + ", " +
                          std::to_string(spec.origin_row + spec.crop_height) + ") cols [" +
                          std::to_string(spec.origin_col) + ", " +
                          std::to_string(spec.origin_col + spec.crop_width) +
                          ") is not inside a " + std::to_string(speckle.height) + "x" +
                          std::to_string(speckle.width) + " speckle");
  }
  SpecklePattern out;
  out.height = spec.crop_height;
  out.width = spec.crop_width;
  out.raw_scale = speckle.raw_scale;
  out.key_fingerprint = speckle.key_fingerprint;
  out.data.reserve(spec.crop_height * spec.crop_width);
  for (std::size_t r = 0; r < spec.crop_height; ++r) {
    for (std::size_t c = 0; c < spec.crop_width; ++c) {
      out.data.push_back(speckle(spec.origin_row + r, spec.origin_col + c));
    }
  }
  return out;
}

std::uint64_t key_length_bits(std::size_t n_in, std::size_t n_out) {
  const auto in = static_cast<std::uint64_t>(n_in);
  const auto out = static_cast<std::uint64_t>(n_out);
  if (in != 0 && out > std::numeric_limits<std::uint64_t>::max() / 64 / in) {
    throw InvalidArgument("key length overflows 64 bits");
  }
  return 64 * out * in;
}

std::uint64_t key_length_bits(const PhysicalKey& key) { return key_length_bits(key.n_in, key.n_out); }

}  // namespace speckle
