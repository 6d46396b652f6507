#include "speckle/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include <json.hpp>

#include "speckle/error.hpp"
#include "speckle/formats.hpp"
#include "speckle/rng.hpp"

namespace speckle::dataset {

namespace {

constexpr int kSupersample = 4;
constexpr double kMouthHalfThickness = 0.6;

// Fraction of pixel (row, col) covered by `inside`, sampled on a 4x4 grid.
template <typename Inside>
double coverage(std::size_t row, std::size_t col, Inside inside) {
  int hits = 0;
  for (int i = 0; i < kSupersample; ++i) {
    const double y = static_cast<double>(row) + (i + 0.5) / kSupersample;
    for (int j = 0; j < kSupersample; ++j) {
      const double x = static_cast<double>(col) + (j + 0.5) / kSupersample;
      if (inside(x, y)) ++hits;
    }
  }
  return static_cast<double>(hits) / (kSupersample * kSupersample);
}

auto ellipse(double cx, double cy, double rx, double ry) {
  return [=](double x, double y) {
    const double dx = (x - cx) / rx;
    const double dy = (y - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  };
}

}  // namespace

FaceParams random_face(std::uint64_t seed, std::size_t image_size) {
  Xoshiro256 rng(seed);
  const double s = static_cast<double>(image_size) / 16.0;
  FaceParams p;
  p.background = rng.uniform(0.1, 0.9);
  p.gradient_x = rng.uniform(-0.5, 0.5);
  p.gradient_y = rng.uniform(-0.5, 0.5);
  p.head_brightness = rng.uniform(0.1, 0.9);
  p.center_x = image_size / 2.0 + s * rng.uniform(-0.5, 0.5);
  p.center_y = image_size / 2.0 + s * rng.uniform(-0.5, 0.5);
  p.head_radius_x = s * rng.uniform(3.5, 6.0);
  p.head_radius_y = s * rng.uniform(4.5, 7.0);
  p.eye_offset_x = s * rng.uniform(1.5, 3.0);
  p.eye_offset_y = s * rng.uniform(1.0, 2.5);
  p.eye_radius = s * rng.uniform(0.7, 1.4);
  p.eye_brightness = rng.uniform(0.0, 1.0);
  p.mouth_half_width = s * rng.uniform(1.5, 3.5);
  p.mouth_drop = s * rng.uniform(1.5, 3.5);
  p.mouth_curvature = rng.uniform(-0.15, 0.15) / s;
  p.mouth_brightness = rng.uniform(0.0, 1.0);
  return p;
}

PlainImage render_face(const FaceParams& p, std::size_t image_size, std::uint64_t variation_seed) {
  if (image_size < 8) throw InvalidArgument("image_size must be at least 8");
  Xoshiro256 rng(variation_seed);
  const double jitter_x = static_cast<double>(rng.below(3)) - 1.0;
  const double jitter_y = static_cast<double>(rng.below(3)) - 1.0;
  const double brightness = rng.uniform(-0.05, 0.05);

  const double cx = p.center_x + jitter_x;
  const double cy = p.center_y + jitter_y;
  const auto head = ellipse(cx, cy, p.head_radius_x, p.head_radius_y);
  const auto left_eye = ellipse(cx - p.eye_offset_x, cy - p.eye_offset_y, p.eye_radius, p.eye_radius);
  const auto right_eye = ellipse(cx + p.eye_offset_x, cy - p.eye_offset_y, p.eye_radius, p.eye_radius);
  const auto mouth = [&](double x, double y) {
    const double dx = x - cx;
    if (std::abs(dx) > p.mouth_half_width) return false;
    const double centre = cy + p.mouth_drop + p.mouth_curvature * dx * dx;
    return std::abs(y - centre) <= kMouthHalfThickness;
  };

  const double n = static_cast<double>(image_size);
  std::vector<double> pixels(image_size * image_size);
  for (std::size_t r = 0; r < image_size; ++r) {
    for (std::size_t c = 0; c < image_size; ++c) {
      const double x = (c + 0.5) / n - 0.5;
      const double y = (r + 0.5) / n - 0.5;
      double v = p.background + p.gradient_x * x + p.gradient_y * y;
      const double h = coverage(r, c, head);
      v = v * (1.0 - h) + p.head_brightness * h;
      for (const auto* eye : {&left_eye, &right_eye}) {
        const double e = coverage(r, c, *eye);
        v = v * (1.0 - e) + p.eye_brightness * e;
      }
      const double m = coverage(r, c, mouth);
      v = v * (1.0 - m) + p.mouth_brightness * m;
      pixels[r * image_size + c] = v;
    }
  }
  for (double& v : pixels) v = std::clamp(v + brightness + 0.02 * rng.normal(), 0.0, 1.0);
  return PlainImage(image_size, image_size, std::move(pixels));
}

Corpus build_corpus(std::size_t n_identities, std::size_t samples_per_identity, std::size_t image_size,
                    std::uint64_t seed) {
  if (n_identities < 2) throw InvalidArgument("corpus needs at least 2 identities");
  if (samples_per_identity < 1) throw InvalidArgument("corpus needs at least 1 sample per identity");
  if (image_size < 8) throw InvalidArgument("image_size must be at least 8, got " + std::to_string(image_size));

  Corpus corpus;
  corpus.image_size = image_size;
  const std::uint64_t identity_root = derive_seed(seed, "identity");
  const std::uint64_t variation_root = derive_seed(seed, "variation");
  corpus.identities.reserve(n_identities);
  corpus.samples.reserve(n_identities * samples_per_identity);
  for (std::size_t id = 0; id < n_identities; ++id) {
    Identity identity{id, random_face(derive_seed(identity_root, id), image_size)};
    for (std::size_t k = 0; k < samples_per_identity; ++k) {
      const std::uint64_t variation = derive_seed(variation_root, id * samples_per_identity + k);
      corpus.samples.push_back({id, render_face(identity.params, image_size, variation), variation});
    }
    corpus.identities.push_back(identity);
  }
  return corpus;
}

DatasetSplit split(std::span<const FaceSample> samples, const SplitSpec& spec, std::uint64_t seed) {
  if (spec.n_train == 0 || spec.n_eval == 0 || spec.n_test == 0) {
    throw InvalidArgument("each split must hold at least one sample");
  }
  const std::size_t wanted = spec.n_train + spec.n_eval + spec.n_test;
  if (wanted > samples.size()) {
    throw InvalidArgument("split asks for " + std::to_string(wanted) + " samples but the corpus has " +
                          std::to_string(samples.size()));
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Xoshiro256 rng(derive_seed(seed, "split"));
  shuffle_indices(order, rng);

  DatasetSplit out;
  auto take = [&](std::size_t from, std::size_t count, std::vector<FaceSample>& dst) {
    dst.reserve(count);
    for (std::size_t i = from; i < from + count; ++i) dst.push_back(samples[order[i]]);
  };
  take(0, spec.n_train, out.train);
  take(spec.n_train, spec.n_eval, out.eval);
  take(spec.n_train + spec.n_eval, spec.n_test, out.test);
  return out;
}

std::vector<PlainImage> images_of(std::span<const FaceSample> samples) {
  std::vector<PlainImage> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.image);
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
  std::vector<std::size_t> per_identity(corpus.identities.size(), 0);
  for (const auto& sample : corpus.samples) {
    const std::size_t index = per_identity.at(sample.identity_id)++;
    const fs::path relative = fs::path(std::to_string(sample.identity_id)) / (std::to_string(index) + ".pgm");
    fs::create_directories(dir / relative.parent_path());
    io::save_image_pgm(sample.image, dir / relative);
    manifest.push_back({{"path", relative.generic_string()},
                        {"identity_id", sample.identity_id},
                        {"variation_seed", sample.variation_seed}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

std::vector<FaceSample> load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_array()) throw FormatError(manifest_path.string() + ": manifest must be a JSON array");
  const auto base = manifest_path.parent_path();
  std::vector<FaceSample> samples;
  samples.reserve(manifest.size());
  for (const auto& entry : manifest) {
    try {
      FaceSample s;
      s.identity_id = entry.at("identity_id").get<std::size_t>();
      s.variation_seed = entry.at("variation_seed").get<std::uint64_t>();
      s.image = io::load_image_pgm(base / entry.at("path").get<std::string>());
      samples.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(manifest_path.string() + ": bad manifest entry: " + e.what());
    }
  }
  return samples;
}

}  // namespace speckle::dataset
