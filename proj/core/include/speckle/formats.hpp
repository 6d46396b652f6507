#pragma once

#include <cstdint>
#include <filesystem>

#include "speckle/image.hpp"
#include "speckle/optics.hpp"

namespace speckle::io {

inline constexpr std::uint16_t kKeyFormatVersion = 1;
inline constexpr std::uint16_t kImageFormatVersion = 1;

// Key file (little-endian):
//   "SPKY" | u16 version | u64 seed | u32 n_in | u32 n_out
//   | n_out*n_in x (f64 re, f64 im), row-major | u64 fingerprint
void save_key(const PhysicalKey& key, const std::filesystem::path& path);
PhysicalKey load_key(const std::filesystem::path& path);

// Image file (little-endian):
//   "SPIM" | u16 version | u32 height | u32 width | f64 raw_scale
//   | u64 key_fingerprint | height*width x f32, row-major
// Plaintexts are stored with raw_scale 1 and fingerprint 0.
void save_speckle(const SpecklePattern& speckle, const std::filesystem::path& path);
SpecklePattern load_speckle(const std::filesystem::path& path);
void save_plain(const PlainImage& image, const std::filesystem::path& path);
PlainImage load_plain(const std::filesystem::path& path);

// 8-bit binary PGM (P5, maxval 255). v in [0,1] <-> round(v * 255).
void save_image_pgm(const PlainImage& image, const std::filesystem::path& path);
PlainImage load_image_pgm(const std::filesystem::path& path);

/// Loads a plaintext from .pgm or .spim, chosen by extension.
PlainImage load_any_plain(const std::filesystem::path& path);

}  // namespace speckle::io
