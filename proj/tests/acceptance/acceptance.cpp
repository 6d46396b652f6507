// One PASS/FAIL line per acceptance criterion. Exit status is non-zero if
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "../../tools/cli.hpp"
#include "grad_oracle.hpp"
#include "layer_fixtures.hpp"
#include "reference_metrics.hpp"
#include "speckle/dataset.hpp"
#include "speckle/decoder.hpp"
#include "speckle/harness.hpp"
#include "speckle/metrics.hpp"
#include "speckle/optics.hpp"
#include "speckle/recognizer.hpp"
#include "speckle/rng.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace speckle;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

class Runner {
 public:
  void run(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > budget_s) {
      o.pass = false;
      o.detail += fmt("; over budget of %.0f s", budget_s);
    }
    std::printf("%s %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), elapsed);
    std::fflush(stdout);
    failures_ += o.pass ? 0 : 1;
  }

  int failures() const { return failures_; }

 private:
  int failures_ = 0;
};

// ---- 1 ----------------------------------------------------------------------

Outcome key_length() {
  std::ostringstream out, err;
  const int code = cli::dispatch({"speckle", "keylen", "--n-in", "4096", "--n-out", "65536"}, out, err);
  const std::string printed = out.str();
  return {code == 0 && printed == "17179869184\n", "printed " + printed.substr(0, printed.find('\n')) + " bits"};
}

// ---- 2 ----------------------------------------------------------------------

Outcome metric_oracles() {
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto a = test::random_values(256, 2 * i + 1);
    const auto b = test::random_values(256, 2 * i + 2);
    worst = std::max({worst, std::abs(metrics::pcc(a, b) - test::ref::pcc(a, b)),
                      std::abs(metrics::mse(a, b) - test::ref::mse(a, b)),
                      std::abs(metrics::psnr(a, b) - test::ref::psnr(a, b)),
                      std::abs(metrics::ssim(a, b) - test::ref::ssim(a, b))});
  }
  return {worst <= 1e-9, fmt("max abs deviation %.3g over 100 pairs", worst)};
}

// ---- 3 ----------------------------------------------------------------------

Outcome gradients() {
  constexpr double kTol = 1e-4;
  double worst = 0.0;
  std::string worst_at = "none";
  bool coverage = true;
  std::size_t checked = 0;
  auto note = [&](double err, const std::string& where) {
    if (err > worst) {
      worst = err;
      worst_at = where;
    }
  };

  // loss with respect to the estimate, every coordinate
  {
    const auto y = test::random_values(256, 1);
    auto yh = test::random_values(256, 2);
    const auto g = loss_gradient(yh, y);
    const double h = 1e-5;
    for (std::size_t k = 0; k < yh.size(); ++k) {
      const double saved = yh[k];
      yh[k] = saved + h;
      const double up = loss(yh, y);
      yh[k] = saved - h;
      const double down = loss(yh, y);
      yh[k] = saved;
      note(test::relative_error((up - down) / (2 * h), g[k]), "loss");
      ++checked;
    }
  }

  // every parametric layer inside real decoders
  const auto key = generate_key(5, 64, 256);
  const auto plain = test::random_image(8, 8, 6);
  const auto speckle = encrypt(key, plain, SpeckleShape{16, 16});
  auto spec = DecoderSpec{16, 16, 8, 8, InputMode::amplitude, false, 0, 4};
  std::vector<DecoderSpec> specs;
  specs.push_back(spec);
  spec.input_mode = InputMode::intensity;
  specs.push_back(spec);
  spec.input_mode = InputMode::amplitude;
  spec.conv_stem = true;
  spec.channels = 24;
  specs.push_back(spec);
  spec.conv_stem = false;
  spec.unet_levels = 2;
  spec.channels = 4;
  specs.push_back(spec);
  std::size_t nonsmooth = 0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto model = make_decoder(specs[i], 10 + i);
    // zero biases put dead ReLUs exactly on their kink; check at a generic point
    Xoshiro256 jitter(30 + i);
    for (auto& layer : model.layers) {
      for (auto span : nn::parameters(layer)) {
        for (auto& v : span) v += jitter.normal(0.0, 0.01);
      }
    }
    const auto r = grad_check(model, speckle, plain, GradCheckOptions{200, 1e-5, 1e-5, 20 + i});
    checked += r.checked;
    for (const auto& l : r.layers) {
      note(l.max_error, fmt("decoder %zu layer %zu (%s)", i, l.layer_index, l.layer_name));
      const std::size_t available = nn::parameter_count(model.layers[l.layer_index]);
      coverage = coverage && l.checked == std::min<std::size_t>(200, available - l.nonsmooth);
      nonsmooth += l.nonsmooth;
    }
  }

  // parameters and input gradients of each layer type in isolation
  using test::check_stack;
  using test::random_batch;
  const std::vector<std::pair<std::vector<nn::Layer>, nn::Batch>> stacks = {
      {{test::dense({1, 4, 4}, 16, 31)}, random_batch({1, 4, 4}, 2, false, 32)},
      {{test::dense({1, 4, 4}, 16, 33)}, random_batch({1, 4, 4}, 2, true, 34)},
      {{nn::Modulus{}}, random_batch({1, 6, 6}, 2, true, 35)},
      {{test::conv(4, 8, 36)}, random_batch({4, 6, 6}, 2, false, 37)},
      {{nn::Downsample{}, test::conv(2, 3, 38), nn::Upsample{}}, random_batch({2, 6, 8}, 2, false, 39)},
      {{nn::OutputSquash{1.3, -0.2}}, random_batch({1, 4, 4}, 3, false, 40)},
  };
  for (std::size_t i = 0; i < stacks.size(); ++i) {
    const auto r = check_stack(stacks[i].first, stacks[i].second, 50 + i);
    note(r.max_param_error, fmt("stack %zu parameters", i));
    note(r.max_input_error, fmt("stack %zu inputs", i));
    for (std::size_t l = 0; l < r.params_checked.size(); ++l) {
      coverage = coverage && r.params_checked[l] == std::min<std::size_t>(200, nn::parameter_count(stacks[i].first[l]));
      checked += r.params_checked[l];
    }
    checked += r.inputs_checked;
  }
  return {worst < kTol && coverage,
          fmt("max relative error %.3g (%s) over %zu derivatives, %zu probes across a kink skipped%s", worst,
              worst_at.c_str(), checked, nonsmooth, coverage ? "" : ", sampling short")};
}

// ---- 4 ----------------------------------------------------------------------

Outcome pinv_oracle() {
  const auto key = generate_key(41, 256, 1024);
  const auto corpus = dataset::build_corpus(10, 1, 16, 42);
  std::vector<PlainImage> plaintexts;
  // keep phases clear of the 0 / 2 pi seam so one anchor fixes the offset
  for (const auto& s : corpus.samples) {
    std::vector<double> v(s.image.data().begin(), s.image.data().end());
    for (auto& x : v) x = 0.0005 + 0.999 * x;
    plaintexts.emplace_back(16, 16, std::move(v));
  }
  for (std::uint64_t i = 0; i < 10; ++i) plaintexts.push_back(test::random_image(16, 16, 43 + i, 0.0005, 0.9995));

  double worst = 1.0;
  for (const auto& p : plaintexts) {
    const auto rec = pinv_decode(key, detect_field(key, p));
    const double shift = p.data()[0] - rec.data()[0];
    std::vector<double> anchored(rec.size());
    for (std::size_t k = 0; k < rec.size(); ++k) {
      double v = rec.data()[k] + shift;
      anchored[k] = v - std::floor(v);
    }
    worst = std::min(worst, metrics::pcc(p.data(), anchored));
  }
  return {worst >= 1.0 - 1e-6, fmt("min anchored PCC 1 - %.3g over %zu plaintexts", 1.0 - worst, plaintexts.size())};
}

// ---- 5 ----------------------------------------------------------------------

Outcome decorrelation() {
  const auto key = generate_key(51, 256, 1024);
  const auto corpus = dataset::build_corpus(50, 2, 16, 52);
  double upsampled = 0.0, truncated = 0.0;
  for (const auto& s : corpus.samples) {
    const auto c = encrypt(key, s.image, SpeckleShape{32, 32});
    std::vector<double> up(1024);
    for (std::size_t r = 0; r < 32; ++r) {
      for (std::size_t col = 0; col < 32; ++col) up[r * 32 + col] = s.image.data()[(r / 2) * 16 + col / 2];
    }
    upsampled += std::abs(metrics::pcc(up, c.data));
    truncated += std::abs(metrics::pcc(s.image.data(), std::span<const double>(c.data).first(256)));
  }
  upsampled /= 100.0;
  truncated /= 100.0;
  return {upsampled < 0.1 && truncated < 0.1,
          fmt("mean |PCC| %.4f upsampled, %.4f truncated, 100 pairs", upsampled, truncated)};
}

// ---- 6, 7, 9, 11 share one desk run ------------------------------------------

struct DeskRun {
  harness::ExperimentConfig config;
  std::optional<harness::PipelineOutcome> outcome;
};

Outcome convergence(DeskRun& desk) {
  desk.outcome = harness::run_pipeline(desk.config);
  const auto& r = desk.outcome->report;
  const double pcc = r.condition("test").pcc_mean;
  const auto& h = r.history.epochs;
  if (h.size() != 30) return {false, fmt("expected 30 epochs, history has %zu", h.size())};
  const double first = h.front().eval_pcc, last = h.back().eval_pcc;
  return {pcc >= 0.85 && last > first,
          fmt("test PCC %.4f, eval PCC epoch 1 %.4f -> epoch 30 %.4f", pcc, first, last)};
}

Outcome noise(const DeskRun& desk) {
  if (!desk.outcome) return {false, "no trained model"};
  const auto& c = desk.config;
  const std::vector<double> sds{0.0, 0.1, 0.3, 0.5, 1.0};
  const auto r = harness::noise_sweep(*desk.outcome->model, desk.outcome->data.key, c.speckle,
                                      desk.outcome->data.test_plain, sds, c.noise_seed, c.threads);
  std::vector<double> p;
  std::string trace;
  for (const auto& cond : r.conditions) {
    p.push_back(cond.pcc_mean);
    trace += fmt("%s%.4f", trace.empty() ? "" : " ", cond.pcc_mean);
  }
  bool monotone = true;
  for (std::size_t i = 1; i < p.size(); ++i) monotone = monotone && p[i] <= p[i - 1] + 0.02;
  const double drop = p[0] - p[1];
  return {std::abs(drop) <= 0.05 && monotone, fmt("PCC at SD 0/0.1/0.3/0.5/1.0: %s", trace.c_str())};
}

Outcome fov(const DeskRun& desk) {
  const auto r = harness::fov_experiment(desk.config);
  const double full = r.condition("full_fov").pcc_mean;
  const double quarter = r.condition("quarter_fov").pcc_mean;
  return {full - quarter <= 0.10, fmt("full %.4f, quarter %.4f, gap %.4f", full, quarter, full - quarter)};
}

Outcome wrong_key(const DeskRun& desk) {
  if (!desk.outcome) return {false, "no trained model"};
  const auto& c = desk.config;
  const auto key_b = generate_key(c.attack_key_seed, c.n_in(), c.n_out());
  const auto r = harness::wrong_key_attack(*desk.outcome->model, desk.outcome->data.key, key_b, c.speckle,
                                           desk.outcome->data.test_plain, c.threads);
  const double same = r.condition("same_key").pcc_mean;
  const double wrong = r.condition("wrong_key").pcc_mean;
  return {wrong < 0.2 && same - wrong >= 0.3, fmt("same key %.4f, wrong key %.4f, margin %.4f", same, wrong, same - wrong)};
}

std::string canonical_bytes(const fs::path& p) {
  if (p.extension() == ".json") {
    auto j = nlohmann::ordered_json::parse(std::ifstream(p));
    j.erase("wall_clock_s");
    return j.dump();
  }
  const auto b = test::read_bytes(p);
  return {b.begin(), b.end()};
}

Outcome determinism(const DeskRun& desk, const fs::path& second_dir) {
  if (!desk.outcome) return {false, "no first run"};
  auto c = desk.config;
  c.output_dir = second_dir;
  harness::run_pipeline(c);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(desk.config.output_dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), desk.config.output_dir));
  }
  std::size_t second_count = 0;
  for (const auto& e : fs::recursive_directory_iterator(second_dir)) second_count += e.is_regular_file() ? 1 : 0;
  std::size_t differing = 0;
  for (const auto& f : files) {
    const auto other = second_dir / f;
    if (!fs::exists(other) || canonical_bytes(desk.config.output_dir / f) != canonical_bytes(other)) ++differing;
  }
  return {differing == 0 && second_count == files.size() && !files.empty(),
          fmt("%zu artifacts compared, %zu differ", files.size(), differing)};
}

// ---- 10 ---------------------------------------------------------------------

Outcome recognition_exactness() {
  using namespace recognition;
  const auto corpus = dataset::build_corpus(5, 4, 16, 61);
  const auto model = make_embedding_model(62);
  std::vector<FaceEmbedding> orig, dec;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& img = corpus.samples[i].image;
    auto noise = test::random_values(img.size(), 63 + i, -0.15, 0.15);
    for (std::size_t k = 0; k < img.size(); ++k) noise[k] = std::clamp(img.data()[k] + noise[k], 0.0, 1.0);
    orig.push_back(embed(model, img));
    dec.push_back(embed(model, PlainImage(16, 16, noise)));
  }
  const auto pairs = pair_distances(orig, dec);
  std::vector<double> thresholds = kDefaultThresholds;
  auto sorted = pairs.original;
  std::sort(sorted.begin(), sorted.end());
  for (double q : {0.1, 0.25, 0.5, 0.75}) thresholds.push_back(sorted[static_cast<std::size_t>(q * sorted.size())]);
  const auto rows = threshold_sweep(pairs, thresholds);

  bool exact = pairs.original.size() == 190 && rows.size() == thresholds.size();
  std::size_t mixed = 0;
  for (std::size_t r = 0; r < rows.size() && exact; ++r) {
    const double t = thresholds[r];
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < orig.size(); ++i) {
      for (std::size_t j = i + 1; j < orig.size(); ++j) {
        double so = 0.0, sd = 0.0;
        for (std::size_t k = 0; k < kEmbeddingSize; ++k) {
          so += (orig[i].vector[k] - orig[j].vector[k]) * (orig[i].vector[k] - orig[j].vector[k]);
          sd += (dec[i].vector[k] - dec[j].vector[k]) * (dec[i].vector[k] - dec[j].vector[k]);
        }
        const bool truth = std::sqrt(so) <= t, pred = std::sqrt(sd) <= t;
        tp += truth && pred;
        fp += !truth && pred;
        tn += !truth && !pred;
        fn += truth && !pred;
      }
    }
    const auto& row = rows[r];
    exact = exact && row.counts.tp == tp && row.counts.fp == fp && row.counts.tn == tn && row.counts.fn == fn;
    const double d = static_cast<double>(tp + fp + tn + fn);
    exact = exact && row.accuracy && *row.accuracy == static_cast<double>(tp + tn) / d;
    if (tp + fn > 0) exact = exact && row.recall && *row.recall == static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (tp + fp > 0)
      exact = exact && row.precision && *row.precision == static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (row.recall && row.precision && *row.recall + *row.precision > 0.0) {
      exact = exact && row.f1 &&
              std::abs(*row.f1 - 2.0 * *row.recall * *row.precision / (*row.recall + *row.precision)) <= 1e-15;
    }
    mixed += (tp > 0 && tn > 0) ? 1 : 0;
  }

  // distance exactly at the threshold is a match
  FaceEmbedding a, b;
  a.vector[0] = 1.0;
  b.vector[1] = 1.0;
  const double t = distance(a, b);
  const std::vector<double> at{t};
  const auto boundary = confusion_counts(at, at, t);
  const bool edge = match(a, b, MatchConfig{t}) == MatchResult::match &&
                    match_distance(std::nextafter(t, 10.0), t) == MatchResult::mismatch && boundary.tp == 1 &&
                    boundary.total() == 1;
  return {exact && edge && mixed > 0,
          fmt("%zu thresholds x 190 pairs %s, boundary %s", rows.size(), exact ? "exact" : "MISMATCH",
              edge ? "matches" : "WRONG")};
}

}  // namespace

int main() {
  Runner runner;
  runner.run(1, "key length", 1.0, key_length);
  runner.run(2, "metric oracle equivalence", 5.0, metric_oracles);
  runner.run(3, "gradient correctness", 60.0, gradients);
  runner.run(4, "pseudo-inverse oracle", 10.0, pinv_oracle);
  runner.run(5, "plaintext-ciphertext decorrelation", 10.0, decorrelation);

  test::TempDir first("acceptance_a"), second("acceptance_b");
  DeskRun desk;
  desk.config = harness::load_config(fs::path(SPECKLE_CONFIG_DIR) / "desk.json");
  desk.config.output_dir = first.path();
  double desk_seconds = 0.0;
  {
    const auto start = std::chrono::steady_clock::now();
    runner.run(6, "training convergence", 900.0, [&] { return convergence(desk); });
    desk_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  runner.run(7, "noise robustness", 120.0, [&] { return noise(desk); });
  runner.run(8, "field-of-view insensitivity", 1800.0, [&] { return fov(desk); });
  runner.run(9, "wrong-key attack", 120.0, [&] { return wrong_key(desk); });
  runner.run(10, "recognition metric exactness", 5.0, recognition_exactness);
  runner.run(11, "determinism", 2.0 * desk_seconds,
             [&] { return determinism(desk, second.path()); });
  return runner.failures() == 0 ? 0 : 1;
}
