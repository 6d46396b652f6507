#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "speckle/image.hpp"

namespace speckle::dataset {

/// Face geometry and shading for one synthetic identity. Lengths are in
/// pixels of the rendered image; brightness values are in [0, 1].
struct FaceParams {
  double background = 0.5;
  double gradient_x = 0.0;  ///< background change across the full width
  double gradient_y = 0.0;
  double head_brightness = 0.5;
  double center_x = 0.0;  ///< head centre, pixels from the left edge
  double center_y = 0.0;
  double head_radius_x = 0.0;
  double head_radius_y = 0.0;
  double eye_offset_x = 0.0;  ///< each eye this far left/right of centre
  double eye_offset_y = 0.0;  ///< eyes this far above centre
  double eye_radius = 0.0;
  double eye_brightness = 0.0;
  double mouth_half_width = 0.0;
  double mouth_drop = 0.0;  ///< mouth this far below centre
  double mouth_curvature = 0.0;
  double mouth_brightness = 0.0;
};

struct Identity {
  std::size_t id = 0;
  FaceParams params;
};

struct FaceSample {
  std::size_t identity_id = 0;
  PlainImage image;
  std::uint64_t variation_seed = 0;
};

struct Corpus {
  std::size_t image_size = 0;
  std::vector<Identity> identities;
  std::vector<FaceSample> samples;  ///< identity-major order
};

/// Draws identity parameters inside the generator bounds for `image_size`.
FaceParams random_face(std::uint64_t seed, std::size_t image_size);

/// Renders one sample: 4x4 supersampled head ellipse, two eyes and a mouth
/// arc over a graded background, then per-sample variation from
/// `variation_seed` (integer jitter in {-1,0,1} px per axis, brightness
/// shift in [-0.05, 0.05], Gaussian texture noise of SD 0.02), clamped to
/// [0, 1].
PlainImage render_face(const FaceParams& params, std::size_t image_size, std::uint64_t variation_seed);

/// n_identities >= 2, samples_per_identity >= 1, image_size >= 8.
Corpus build_corpus(std::size_t n_identities, std::size_t samples_per_identity, std::size_t image_size,
                    std::uint64_t seed);

struct SplitSpec {
  std::size_t n_train = 0;
  std::size_t n_eval = 0;
  std::size_t n_test = 0;
};

struct DatasetSplit {
  std::vector<FaceSample> train;
  std::vector<FaceSample> eval;
  std::vector<FaceSample> test;
};

/// Seeded shuffle of the samples, then consecutive train/eval/test slices.
DatasetSplit split(std::span<const FaceSample> samples, const SplitSpec& spec, std::uint64_t seed);

std::vector<PlainImage> images_of(std::span<const FaceSample> samples);

/// Writes <dir>/<identity>/<sample>.pgm for every sample and
/// <dir>/manifest.json listing {path, identity_id, variation_seed} with
/// paths relative to <dir>.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Reads a manifest and the PGM files it lists.
std::vector<FaceSample> load_manifest(const std::filesystem::path& manifest_path);

}  // namespace speckle::dataset
