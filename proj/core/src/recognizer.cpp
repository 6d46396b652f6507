#include "speckle/recognizer.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "json_util.hpp"
#include "speckle/error.hpp"
#include "speckle/metrics.hpp"
#include "speckle/rng.hpp"

namespace speckle::recognition {

std::size_t EmbeddingModel::feature_length() const {
  const std::size_t cells = grid * grid;
  return gradient_features ? cells + 2 * grid * (grid - 1) : cells;
}

EmbeddingModel make_embedding_model(std::uint64_t seed, std::size_t grid, bool gradient_features) {
  if (grid < 2) throw InvalidArgument("embedding grid must be at least 2");
  EmbeddingModel model;
  model.seed = seed;
  model.grid = grid;
  model.gradient_features = gradient_features;
  const auto d = static_cast<Eigen::Index>(model.feature_length());
  model.projection.resize(static_cast<Eigen::Index>(kEmbeddingSize), d);
  Xoshiro256 rng(derive_seed(seed, "embedding"));
  for (Eigen::Index r = 0; r < model.projection.rows(); ++r) {
    for (Eigen::Index c = 0; c < d; ++c) model.projection(r, c) = rng.normal();
    model.projection.row(r).normalize();
  }
  return model;
}

namespace {

// Area-weighted average of the source pixels covered by each target cell.
std::vector<double> area_downsample(const PlainImage& image, std::size_t grid) {
  const double sy = static_cast<double>(image.height()) / static_cast<double>(grid);
  const double sx = static_cast<double>(image.width()) / static_cast<double>(grid);
  std::vector<double> out(grid * grid, 0.0);
  for (std::size_t gy = 0; gy < grid; ++gy) {
    const double y0 = gy * sy;
    const double y1 = y0 + sy;
    for (std::size_t gx = 0; gx < grid; ++gx) {
      const double x0 = gx * sx;
      const double x1 = x0 + sx;
      double acc = 0.0;
      for (auto r = static_cast<std::size_t>(y0); r < image.height() && static_cast<double>(r) < y1; ++r) {
        const double wy = std::min(y1, r + 1.0) - std::max(y0, static_cast<double>(r));
        if (wy <= 0.0) continue;
        for (auto c = static_cast<std::size_t>(x0); c < image.width() && static_cast<double>(c) < x1; ++c) {
          const double wx = std::min(x1, c + 1.0) - std::max(x0, static_cast<double>(c));
          if (wx <= 0.0) continue;
          acc += wy * wx * image(r, c);
        }
      }
      out[gy * grid + gx] = acc / (sy * sx);
    }
  }
  return out;
}

}  // namespace

FaceEmbedding embed(const EmbeddingModel& model, const PlainImage& image) {
  if (image.height() < 8 || image.width() < 8 || image.height() < model.grid || image.width() < model.grid) {
    throw InvalidArgument("image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                          " is too small to embed (need at least 8x8 and the " + std::to_string(model.grid) +
                          "-cell grid)");
  }
  const std::size_t g = model.grid;
  std::vector<double> cells = area_downsample(image, g);

  double mean = 0.0;
  for (double v : cells) mean += v;
  mean /= static_cast<double>(cells.size());
  double var = 0.0;
  for (double v : cells) var += (v - mean) * (v - mean);
  var /= static_cast<double>(cells.size());
  const double inv_sd = var > 0.0 && !metrics::is_constant(cells) ? 1.0 / std::sqrt(var) : 0.0;
  for (double& v : cells) v = (v - mean) * inv_sd;

  Eigen::VectorXd features(static_cast<Eigen::Index>(model.feature_length()));
  Eigen::Index k = 0;
  for (double v : cells) features[k++] = v;
  if (model.gradient_features) {
    for (std::size_t y = 0; y < g; ++y) {
      for (std::size_t x = 0; x + 1 < g; ++x) features[k++] = cells[y * g + x + 1] - cells[y * g + x];
    }
    for (std::size_t y = 0; y + 1 < g; ++y) {
      for (std::size_t x = 0; x < g; ++x) features[k++] = cells[(y + 1) * g + x] - cells[y * g + x];
    }
  }

  Eigen::VectorXd projected = model.projection * features;
  const double norm = projected.norm();
  if (norm > 0.0) projected /= norm;
  FaceEmbedding e;
  for (std::size_t i = 0; i < kEmbeddingSize; ++i) e.vector[i] = projected[static_cast<Eigen::Index>(i)];
  return e;
}

double distance(const FaceEmbedding& a, const FaceEmbedding& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < kEmbeddingSize; ++i) {
    const double d = a.vector[i] - b.vector[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

MatchResult match_distance(double distance, double threshold) {
  return distance <= threshold ? MatchResult::match : MatchResult::mismatch;
}

MatchResult match(const FaceEmbedding& a, const FaceEmbedding& b, const MatchConfig& config) {
  return match_distance(distance(a, b), config.threshold);
}

ConfusionCounts confusion_counts(std::span<const double> original_distances,
                                 std::span<const double> decrypted_distances, double threshold) {
  if (original_distances.size() != decrypted_distances.size()) {
    throw InvalidArgument("original and decrypted pair lists differ in length: " +
                          std::to_string(original_distances.size()) + " vs " +
                          std::to_string(decrypted_distances.size()));
  }
  ConfusionCounts counts;
  for (std::size_t i = 0; i < original_distances.size(); ++i) {
    const bool positive = original_distances[i] <= threshold;
    const bool predicted = decrypted_distances[i] <= threshold;
    if (positive) {
      predicted ? ++counts.tp : ++counts.fn;
    } else {
      predicted ? ++counts.fp : ++counts.tn;
    }
  }
  return counts;
}

ConfusionCounts confusion_counts(std::span<const EmbeddingPair> original_pairs,
                                 std::span<const EmbeddingPair> decrypted_pairs, const MatchConfig& config) {
  if (original_pairs.size() != decrypted_pairs.size()) {
    throw InvalidArgument("original and decrypted pair lists differ in length: " +
                          std::to_string(original_pairs.size()) + " vs " + std::to_string(decrypted_pairs.size()));
  }
  std::vector<double> orig(original_pairs.size());
  std::vector<double> decr(decrypted_pairs.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    orig[i] = distance(original_pairs[i].first, original_pairs[i].second);
    decr[i] = distance(decrypted_pairs[i].first, decrypted_pairs[i].second);
  }
  return confusion_counts(orig, decr, config.threshold);
}

RecognitionReport report(const ConfusionCounts& counts, double threshold) {
  RecognitionReport r;
  r.threshold = threshold;
  r.counts = counts;
  const auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  r.recall = ratio(counts.tp, counts.tp + counts.fn);
  r.precision = ratio(counts.tp, counts.tp + counts.fp);
  r.accuracy = ratio(counts.tp + counts.tn, counts.total());
  if (r.recall && r.precision && (*r.recall + *r.precision) > 0.0) {
    r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
  }
  return r;
}

PairDistances pair_distances(std::span<const FaceEmbedding> originals, std::span<const FaceEmbedding> decrypted) {
  if (originals.size() != decrypted.size()) {
    throw InvalidArgument("original and decrypted embedding lists differ in length");
  }
  PairDistances out;
  const std::size_t n = originals.size();
  out.original.reserve(n * (n > 0 ? n - 1 : 0) / 2);
  out.decrypted.reserve(out.original.capacity());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      out.original.push_back(distance(originals[i], originals[j]));
      out.decrypted.push_back(distance(decrypted[i], decrypted[j]));
    }
  }
  return out;
}

std::vector<double> self_distances(std::span<const FaceEmbedding> originals,
                                   std::span<const FaceEmbedding> decrypted) {
  if (originals.size() != decrypted.size()) {
    throw InvalidArgument("original and decrypted embedding lists differ in length");
  }
  std::vector<double> out(originals.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = distance(originals[i], decrypted[i]);
  return out;
}

std::vector<RecognitionReport> threshold_sweep(const PairDistances& pairs, std::span<const double> thresholds) {
  if (thresholds.empty()) throw InvalidArgument("threshold sweep needs at least one threshold");
  std::vector<RecognitionReport> rows;
  rows.reserve(thresholds.size());
  for (double t : thresholds) {
    if (!(t > 0.0)) throw InvalidArgument("thresholds must be positive");
    rows.push_back(report(confusion_counts(pairs.original, pairs.decrypted, t), t));
  }
  return rows;
}

std::string sweep_csv(std::span<const RecognitionReport> rows) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("null");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  std::string out = "threshold,recall,precision,accuracy,f1\n";
  for (const auto& r : rows) {
    out += cell(r.threshold) + "," + cell(r.recall) + "," + cell(r.precision) + "," + cell(r.accuracy) + "," +
           cell(r.f1) + "\n";
  }
  return out;
}

std::string sweep_json(std::span<const RecognitionReport> rows) {
  return detail::sweep_to_json(rows).dump(2);
}

}  // namespace speckle::recognition
