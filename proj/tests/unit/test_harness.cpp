#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include <json.hpp>

#include "speckle/error.hpp"
#include "speckle/harness.hpp"
#include "speckle/metrics.hpp"
#include "support.hpp"

using namespace speckle;
using namespace speckle::harness;

namespace {

ExperimentConfig tiny_config(const std::filesystem::path& out) {
  ExperimentConfig c;
  c.corpus = {10, 4, 8, 1};
  c.speckle = {16, 16};
  c.split = {30, 5, 5};
  c.train.epochs = 2;
  c.noise_sd = {0.0, 0.2};
  c.embedding_grid = 4;
  c.output_dir = out;
  return c;
}

std::string without_wall_clock(const std::filesystem::path& p) {
  auto j = nlohmann::ordered_json::parse(std::ifstream(p));
  j.erase("wall_clock_s");
  return j.dump();
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config defaults match the desk setting") {
    const auto c = config_from_json("{}");
    CHECK(c.corpus.identities == 220);
    CHECK(c.corpus.samples_per_identity == 10);
    CHECK(c.n_in() == 256);
    CHECK(c.n_out() == 1024);
    CHECK(c.split.n_train == 2000);
    CHECK(c.split.n_eval == 100);
    CHECK(c.split.n_test == 100);
    CHECK(c.train.epochs == 30);
    CHECK(c.train.learning_rate == 0.15);
    CHECK(c.input_mode == InputMode::amplitude);
    const auto fov = c.fov_window();
    CHECK(fov.crop_height == 16);
    CHECK(fov.crop_width == 16);
    CHECK(fov.crop_height * fov.crop_width == c.n_out() / 4);
  }

  TEST_CASE("config parsing reads nested fields and rejects unknown ones") {
    const auto c = config_from_json(R"({"key_seed": 99, "corpus": {"image_size": 8},
      "decoder": {"input_mode": "intensity", "unet_levels": 1},
      "noise": {"sd_list": [0, 0.5]}, "fov": {"origin_row": 2, "origin_col": 3, "height": 4, "width": 5}})");
    CHECK(c.key_seed == 99);
    CHECK(c.corpus.image_size == 8);
    CHECK(c.corpus.identities == 220);
    CHECK(c.input_mode == InputMode::intensity);
    CHECK(c.unet_levels == 1);
    CHECK(c.noise_sd == std::vector<double>{0.0, 0.5});
    REQUIRE(c.fov.has_value());
    CHECK(c.fov->origin_col == 3);
    CHECK(c.fov->crop_width == 5);

    CHECK_THROWS_AS(config_from_json(R"({"keyseed": 1})"), InvalidArgument);
    CHECK_THROWS_AS(config_from_json(R"({"corpus": {"size": 1}})"), InvalidArgument);
    CHECK_THROWS_AS(config_from_json(R"({"decoder": {"input_mode": "phase"}})"), InvalidArgument);
    CHECK_THROWS_AS(config_from_json("{not json"), InvalidArgument);
    CHECK_THROWS_AS(config_from_json(R"({"key_seed": "seven"})"), InvalidArgument);
  }

  TEST_CASE("config validation") {
    ExperimentConfig c;
    CHECK_NOTHROW(validate(c));
    c.split.n_train = 2150;
    CHECK_THROWS_AS(validate(c), InvalidArgument);
    c = {};
    c.fov = FovSpec{20, 0, 16, 16};
    CHECK_THROWS_AS(validate(c), InvalidArgument);
    c = {};
    c.thresholds = {0.5, -1.0};
    CHECK_THROWS_AS(validate(c), InvalidArgument);
    c = {};
    c.speckle = {1, 8};
    CHECK_THROWS_AS(validate(c), InvalidArgument);
  }

  TEST_CASE("config hash ignores output location and thread count") {
    ExperimentConfig a, b;
    b.output_dir = "elsewhere";
    b.threads = 3;
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    b.key_seed = 70;
    CHECK(config_hash(a) != config_hash(b));
    const auto roundtrip = config_from_json(config_to_json(a));
    CHECK(config_to_json(roundtrip) == config_to_json(a));
  }

  TEST_CASE("summarize averages the metrics") {
    std::vector<PlainImage> refs, ests;
    for (std::uint64_t i = 0; i < 5; ++i) {
      refs.push_back(test::random_image(8, 8, 100 + i));
      ests.push_back(test::random_image(8, 8, 200 + i));
    }
    const auto s = summarize("x", refs, ests);
    double pcc = 0.0, mse = 0.0, ssim = 0.0;
    std::vector<double> p;
    for (std::size_t i = 0; i < 5; ++i) {
      p.push_back(metrics::pcc(refs[i].data(), ests[i].data()));
      pcc += p.back();
      mse += metrics::mse(refs[i].data(), ests[i].data());
      ssim += metrics::ssim(refs[i].data(), ests[i].data());
    }
    pcc /= 5;
    double var = 0.0;
    for (double v : p) var += (v - pcc) * (v - pcc);
    CHECK(s.n == 5);
    CHECK(s.pcc_n == 5);
    CHECK(s.pcc_mean == doctest::Approx(pcc).epsilon(1e-12));
    CHECK(s.pcc_std == doctest::Approx(std::sqrt(var / 5)).epsilon(1e-9));
    CHECK(s.mse_mean == doctest::Approx(mse / 5).epsilon(1e-12));
    CHECK(s.ssim_mean == doctest::Approx(ssim / 5).epsilon(1e-12));
    CHECK(s.psnr_n == 5);

    ests[2] = PlainImage(8, 8, std::vector<double>(64, 0.3));
    const auto partial = summarize("y", refs, ests);
    CHECK(partial.pcc_n == 4);
    CHECK(partial.n == 5);

    std::vector<PlainImage> flat(2, PlainImage(8, 8, std::vector<double>(64, 0.3)));
    CHECK_THROWS_AS(summarize("z", std::span(refs).first(2), flat), UndefinedMetric);
    CHECK_THROWS_AS(summarize("z", refs, std::span(ests).first(2)), InvalidArgument);
  }

  TEST_CASE("reports are never overwritten") {
    test::TempDir dir("reports");
    ExperimentReport r;
    r.kind = "demo";
    r.config_hash = "0123456789abcdef";
    r.config_json = "{}";
    const auto p0 = write_report(r, dir.path());
    const auto p1 = write_report(r, dir.path());
    const auto p2 = write_report(r, dir.path());
    CHECK(p0.filename() == "demo_0123456789abcdef.json");
    CHECK(p1.filename() == "demo_0123456789abcdef_1.json");
    CHECK(p2.filename() == "demo_0123456789abcdef_2.json");
    const auto j = nlohmann::json::parse(std::ifstream(p0));
    CHECK(j.at("kind") == "demo");
    CHECK(j.contains("wall_clock_s"));
    CHECK_FALSE(nlohmann::json::parse(to_json(r, false)).contains("wall_clock_s"));
  }

  TEST_CASE("perfect decryption gives full accuracy at every threshold") {
    test::TempDir dir("perfect");
    auto c = tiny_config(dir.path());
    const auto out = run_pipeline(c, {.perfect_decoder = true, .persist = false});
    CHECK_FALSE(out.model.has_value());
    CHECK(out.report.kind == "pipeline_perfect");
    REQUIRE(out.report.recognition.size() == c.thresholds.size());
    for (const auto& r : out.report.recognition) {
      REQUIRE(r.accuracy.has_value());
      CHECK(*r.accuracy == 1.0);
    }
    CHECK(out.report.condition("test").pcc_mean == doctest::Approx(1.0));
  }

  TEST_CASE("pipeline artifacts are reproducible byte for byte") {
    test::TempDir a("pipe_a"), b("pipe_b");
    const auto ra = run_pipeline(tiny_config(a.path()));
    const auto rb = run_pipeline(tiny_config(b.path()));
    CHECK(without_wall_clock(ra.report_path) == without_wall_clock(rb.report_path));
    for (const char* name : {"key.spky", "model.spmd", "history.csv", "recognition.csv", "conditions.csv",
                             "test/plain_0000.spim", "test/speckle_0004.spim", "test/decrypted_0004.spim"}) {
      INFO(name);
      REQUIRE(std::filesystem::exists(a.path() / name));
      CHECK(test::read_bytes(a.path() / name) == test::read_bytes(b.path() / name));
    }
    CHECK(ra.report.history.epochs.size() == 2);
  }

  TEST_CASE("thread count does not change results") {
    auto c = tiny_config("unused");
    c.threads = 1;
    const auto one = run_pipeline(c, {.persist = false});
    c.threads = 4;
    const auto four = run_pipeline(c, {.persist = false});
    CHECK(to_json(one.report, false) == to_json(four.report, false));
  }

  TEST_CASE("noise sweep at zero SD equals the clean evaluation") {
    auto c = tiny_config("unused");
    const auto out = run_pipeline(c, {.persist = false});
    const auto sweep = noise_sweep(*out.model, out.data.key, c.speckle, out.data.test_plain, c.noise_sd, c.noise_seed);
    REQUIRE(sweep.conditions.size() == 2);
    CHECK(sweep.conditions[0].label == "sd=0");
    CHECK(sweep.conditions[1].label == "sd=0.2");
    CHECK(sweep.conditions[0].pcc_mean == out.report.condition("test").pcc_mean);
    CHECK(sweep.conditions[0].mse_mean == out.report.condition("test").mse_mean);
    CHECK(sweep.conditions[1].pcc_mean != sweep.conditions[0].pcc_mean);
  }

  TEST_CASE("attack with the training key reproduces the clean result") {
    auto c = tiny_config("unused");
    const auto out = run_pipeline(c, {.persist = false});
    const auto same = wrong_key_attack(*out.model, out.data.key, out.data.key, c.speckle, out.data.test_plain);
    CHECK(same.condition("same_key").pcc_mean == same.condition("wrong_key").pcc_mean);
    CHECK(same.condition("same_key").pcc_mean == out.report.condition("test").pcc_mean);

    const auto other = generate_key(c.attack_key_seed, c.n_in(), c.n_out());
    const auto attack = wrong_key_attack(*out.model, out.data.key, other, c.speckle, out.data.test_plain);
    CHECK(attack.condition("wrong_key").pcc_mean < attack.condition("same_key").pcc_mean);

    const auto mismatched = generate_key(1, c.n_in(), 4 * c.n_out());
    CHECK_THROWS_AS(wrong_key_attack(*out.model, out.data.key, mismatched, c.speckle, out.data.test_plain),
                    InvalidArgument);
  }

  TEST_CASE("field-of-view run uses a quarter of the detector") {
    auto c = tiny_config("unused");
    const auto r = fov_experiment(c);
    CHECK(r.kind == "fov");
    const auto crop = std::find_if(r.extras.begin(), r.extras.end(), [](const auto& e) { return e.first == "crop_pixels"; });
    const auto full = std::find_if(r.extras.begin(), r.extras.end(), [](const auto& e) { return e.first == "full_pixels"; });
    REQUIRE(crop != r.extras.end());
    REQUIRE(full != r.extras.end());
    CHECK(full->second == static_cast<double>(c.n_out()));
    CHECK(crop->second == static_cast<double>(c.n_out() / 4));
    CHECK(r.condition("full_fov").n == 5);
    CHECK(r.condition("quarter_fov").n == 5);
    CHECK_THROWS_AS(r.condition("missing"), InvalidArgument);
  }
}
