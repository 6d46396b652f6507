#include <doctest.h>

#include <cmath>

#include "small_problem.hpp"
#include "speckle/error.hpp"
#include "speckle/metrics.hpp"
#include "support.hpp"

using namespace speckle;
using test::random_image;

namespace {

// Distance on the unit circle, so 0.999 and 0.001 are close.
double circular_error(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

}  // namespace

TEST_SUITE("pinv") {
  TEST_CASE("noiseless field inverts to the plaintext up to a global phase") {
    const auto key = generate_key(31, 256, 1024);
    for (std::uint64_t i = 0; i < 5; ++i) {
      const auto image = random_image(16, 16, 40 + i, 0.0, 0.999);
      const auto rec = pinv_decode(key, detect_field(key, image));
      REQUIRE(rec.height() == 16);
      // anchor pixel 0
      const double shift = image.data()[0] - rec.data()[0];
      double worst = 0.0;
      std::vector<double> anchored;
      for (std::size_t k = 0; k < image.size(); ++k) {
        const double v = std::fmod(rec.data()[k] + shift + 2.0, 1.0);
        anchored.push_back(v);
        worst = std::max(worst, circular_error(v, image.data()[k]));
      }
      CHECK(worst < 1e-6);
      CHECK(metrics::pcc(image.data(), anchored) >= 1.0 - 1e-6);
    }
  }

  TEST_CASE("phase read-out lies in [0, 1)") {
    const auto key = generate_key(2, 16, 64);
    const auto rec = pinv_decode(key, detect_field(key, random_image(4, 4, 3)), 4, 4);
    for (double v : rec.data()) {
      CHECK(v >= 0.0);
      CHECK(v < 1.0);
    }
  }

  TEST_CASE("preconditions") {
    const auto wide = generate_key(1, 64, 16);
    CHECK_THROWS_AS(pinv_decode(wide, Eigen::VectorXcd::Ones(16), 8, 8), InvalidArgument);
    const auto key = generate_key(1, 16, 64);
    CHECK_THROWS_AS(pinv_decode(key, Eigen::VectorXcd::Ones(63), 4, 4), InvalidArgument);
    CHECK_THROWS_AS(pinv_decode(key, Eigen::VectorXcd::Ones(64), 2, 4), InvalidArgument);
  }

  TEST_CASE("rank-deficient keys are reported as numerical failures") {
    auto key = generate_key(1, 16, 64);
    key.matrix.col(3) = key.matrix.col(2);
    CHECK_THROWS_AS(pinv_decode(key, detect_field(key, random_image(4, 4, 1)), 4, 4), NumericalFailure);
  }

  TEST_CASE("the field oracle beats a trained intensity decoder") {
    const test::SmallProblem p;
    const auto trained = train(make_decoder(test::SmallProblem::spec(), 1), p.train_set(), p.eval_set(),
                               TrainConfig{0.15, 4, 8, 1});
    double oracle = 0.0, learned = 0.0;
    for (std::size_t i = 0; i < p.eval_plain.size(); ++i) {
      // Phases 0 and 2*pi coincide, so the oracle sees the plaintext mapped
      // into [0.001, 0.999]; PCC is unchanged by that affine map.
      std::vector<double> inner;
      for (double v : p.eval_plain[i].data()) inner.push_back(0.001 + 0.998 * v);
      const PlainImage image(8, 8, inner);
      const auto rec = pinv_decode(p.key, detect_field(p.key, image), 8, 8);
      const double shift = image.data()[0] - rec.data()[0];
      std::vector<double> anchored;
      for (double v : rec.data()) anchored.push_back(std::fmod(v + shift + 2.0, 1.0));
      oracle += metrics::pcc(p.eval_plain[i].data(), anchored);
      learned += metrics::pcc(p.eval_plain[i].data(), forward(trained.model, p.eval_speckle[i]).data());
    }
    CHECK(oracle >= learned);
  }
}
