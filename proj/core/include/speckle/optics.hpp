#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "speckle/image.hpp"

namespace speckle {

/// Complex transmission matrix of a simulated scattering medium.
///
/// `matrix` is n_out x n_in; row j maps the phase-encoded plaintext onto
/// detector pixel j. The fingerprint is FNV-1a over the little-endian
/// (re, im) f64 pairs in row-major order and identifies the key in every
/// ciphertext it produces.
struct PhysicalKey {
  std::uint64_t seed = 0;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  Eigen::MatrixXcd matrix;
  std::uint64_t fingerprint = 0;
};

/// Detector geometry; height * width must equal the key's n_out.
struct SpeckleShape {
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return height * width; }
};

/// Square shape for `n_out` pixels. Throws InvalidArgument if n_out is not
/// a perfect square.
SpeckleShape square_shape(std::size_t n_out);

struct NoiseSpec {
  double sd_fraction = 0.0;  ///< noise SD as a fraction of the mean speckle value
  std::uint64_t seed = 0;
};

/// Crop window in detector pixels.
struct FovSpec {
  std::size_t origin_row = 0;
  std::size_t origin_col = 0;
  std::size_t crop_height = 0;
  std::size_t crop_width = 0;
};

/// Top-left quadrant of a speckle of the given shape.
FovSpec quarter_fov(SpeckleShape shape);

/// Draws an i.i.d. circular complex Gaussian matrix with per-entry variance
/// 1/n_in from the "key" stream of `seed`. Entries are generated row by row,
/// real part before imaginary part.
PhysicalKey generate_key(std::uint64_t seed, std::size_t n_in, std::size_t n_out);

/// Recomputes the fingerprint of a key matrix.
std::uint64_t key_fingerprint(const Eigen::MatrixXcd& matrix);

/// exp(i 2 pi p) per pixel.
Eigen::VectorXcd phase_encode(const PlainImage& image);

/// Complex output field y = T exp(i 2 pi p), i.e. what a holographic
/// detector would see.
Eigen::VectorXcd detect_field(const PhysicalKey& key, const PlainImage& image);

/// Phase-encodes, propagates, detects |y|^2 and max-normalises.
SpecklePattern encrypt(const PhysicalKey& key, const PlainImage& image, SpeckleShape shape);

/// Same as encrypt() with a square detector.
SpecklePattern encrypt(const PhysicalKey& key, const PlainImage& image);

/// Encrypts every image; output order follows input order. `threads` = 0
/// means use available hardware concurrency.
std::vector<SpecklePattern> encrypt_all(const PhysicalKey& key, std::span<const PlainImage> images,
                                        SpeckleShape shape, unsigned threads = 0);

/// Adds N(0, (sd_fraction * mean)^2) noise and clamps to [0, 1].
SpecklePattern add_noise(const SpecklePattern& speckle, const NoiseSpec& spec);

/// Extracts a sub-window. Values are not renormalised.
SpecklePattern crop_fov(const SpecklePattern& speckle, const FovSpec& spec);

/// 64 bits per complex entry times the matrix size.
std::uint64_t key_length_bits(std::size_t n_in, std::size_t n_out);
std::uint64_t key_length_bits(const PhysicalKey& key);

}  // namespace speckle
