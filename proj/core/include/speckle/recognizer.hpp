#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "speckle/image.hpp"

namespace speckle::recognition {

inline constexpr std::size_t kEmbeddingSize = 128;

struct FaceEmbedding {
  std::array<double, kEmbeddingSize> vector{};
};

/// Deterministic stand-in for a learned face encoder.
///
/// Features: area-average the image to grid x grid, standardise to zero
/// mean and unit variance, optionally append horizontal and vertical finite
/// differences of the standardised grid. A seeded Gaussian projection with
/// unit-norm rows maps the features to 128 values, and the result is scaled
/// to unit length so distances fall in [0, 2].
struct EmbeddingModel {
  std::uint64_t seed = 0;
  std::size_t grid = 8;
  bool gradient_features = true;
  Eigen::MatrixXd projection;  ///< 128 x feature_length()

  std::size_t feature_length() const;
};

EmbeddingModel make_embedding_model(std::uint64_t seed, std::size_t grid = 8, bool gradient_features = true);

/// Throws InvalidArgument for images smaller than 8x8 or than the grid.
FaceEmbedding embed(const EmbeddingModel& model, const PlainImage& image);

double distance(const FaceEmbedding& a, const FaceEmbedding& b);

struct MatchConfig {
  double threshold = 0.6;
};

enum class MatchResult { match, mismatch };

/// Match iff distance <= threshold.
MatchResult match(const FaceEmbedding& a, const FaceEmbedding& b, const MatchConfig& config = {});
MatchResult match_distance(double distance, double threshold);

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

using EmbeddingPair = std::pair<FaceEmbedding, FaceEmbedding>;

/// Ground truth from the original pair distance, prediction from the
/// decrypted pair distance, both thresholded with <=.
ConfusionCounts confusion_counts(std::span<const EmbeddingPair> original_pairs,
                                 std::span<const EmbeddingPair> decrypted_pairs, const MatchConfig& config = {});

/// Same tally on precomputed distances.
ConfusionCounts confusion_counts(std::span<const double> original_distances,
                                 std::span<const double> decrypted_distances, double threshold);

struct RecognitionReport {
  double threshold = 0.0;
  ConfusionCounts counts;
  std::optional<double> recall;
  std::optional<double> precision;
  std::optional<double> accuracy;
  std::optional<double> f1;
};

/// Recall, precision, accuracy and F1; a zero denominator leaves the value
/// empty rather than reporting 0.
RecognitionReport report(const ConfusionCounts& counts, double threshold);

/// Distances of every unordered pair (i < j) among the originals and the
/// same pairs among the decrypted images.
struct PairDistances {
  std::vector<double> original;
  std::vector<double> decrypted;
};

PairDistances pair_distances(std::span<const FaceEmbedding> originals, std::span<const FaceEmbedding> decrypted);

/// Each decrypted image against its own original.
std::vector<double> self_distances(std::span<const FaceEmbedding> originals,
                                   std::span<const FaceEmbedding> decrypted);

inline const std::vector<double> kDefaultThresholds{0.50, 0.52, 0.54, 0.56, 0.58, 0.60};

/// One report per threshold; ground truth is recomputed at each threshold.
std::vector<RecognitionReport> threshold_sweep(const PairDistances& pairs,
                                               std::span<const double> thresholds = kDefaultThresholds);

/// threshold,recall,precision,accuracy,f1 with 6 decimals; undefined
/// values are written as null.
std::string sweep_csv(std::span<const RecognitionReport> rows);
/// JSON array including counts.
std::string sweep_json(std::span<const RecognitionReport> rows);

}  // namespace speckle::recognition
