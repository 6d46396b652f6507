#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "small_problem.hpp"
#include "speckle/error.hpp"

using namespace speckle;
using test::SmallProblem;

TEST_SUITE("training") {
  TEST_CASE("cosine schedule") {
    CHECK(cosine_learning_rate(0.15, 0, 100) == doctest::Approx(0.15));
    CHECK(cosine_learning_rate(0.15, 50, 100) == doctest::Approx(0.075));
    CHECK(std::abs(cosine_learning_rate(0.15, 100, 100)) < 1e-15);
    CHECK(cosine_learning_rate(0.15, 99, 100) < 1e-3);
    for (std::size_t t = 0; t < 100; ++t) {
      const double expect = 0.5 * 0.15 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / 100.0));
      CHECK(cosine_learning_rate(0.15, t, 100) == doctest::Approx(expect).epsilon(1e-14));
      CHECK(cosine_learning_rate(0.15, t + 1, 100) <= cosine_learning_rate(0.15, t, 100));
    }
  }

  TEST_CASE("config validation") {
    CHECK_NOTHROW(validate(TrainConfig{}));
    CHECK(TrainConfig{}.learning_rate == 0.15);
    CHECK(TrainConfig{}.epochs == 30);
    CHECK_THROWS_AS(validate(TrainConfig{0.0, 30, 8, 0}), InvalidArgument);
    CHECK_THROWS_AS(validate(TrainConfig{0.1, 0, 8, 0}), InvalidArgument);
    CHECK_THROWS_AS(validate(TrainConfig{0.1, 30, 0, 0}), InvalidArgument);
    CHECK_THROWS_AS(validate(TrainConfig{std::numeric_limits<double>::quiet_NaN(), 30, 8, 0}), InvalidArgument);
  }

  TEST_CASE("training improves eval PCC and records one entry per epoch") {
    const SmallProblem p;
    std::vector<EpochRecord> seen;
    const auto result = train(make_decoder(SmallProblem::spec(), 1), p.train_set(), p.eval_set(),
                              TrainConfig{0.15, 8, 8, 2}, [&](const EpochRecord& e) { seen.push_back(e); });
    REQUIRE(result.history.epochs.size() == 8);
    CHECK(seen.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) CHECK(result.history.epochs[i].epoch == i + 1);
    CHECK(result.history.epochs.back().eval_pcc > result.history.epochs.front().eval_pcc);
    CHECK(result.history.epochs.back().eval_pcc > 0.6);
    CHECK(result.history.epochs.back().train_loss < result.history.epochs.front().train_loss);
    const auto summary = evaluate_model(result.model, p.eval_set());
    CHECK(summary.mean_pcc == doctest::Approx(result.history.epochs.back().eval_pcc).epsilon(1e-12));
  }

  TEST_CASE("identical seeds give bit-identical models and histories") {
    const SmallProblem p;
    const TrainConfig cfg{0.15, 2, 8, 7};
    const auto a = train(make_decoder(SmallProblem::spec(), 1), p.train_set(), p.eval_set(), cfg);
    const auto b = train(make_decoder(SmallProblem::spec(), 1), p.train_set(), p.eval_set(), cfg);
    CHECK(to_csv(a.history) == to_csv(b.history));
    const auto& da = std::get<nn::ComplexDense>(a.model.layers[0]);
    const auto& db = std::get<nn::ComplexDense>(b.model.layers[0]);
    CHECK(da.weight_re == db.weight_re);
    CHECK(da.weight_im == db.weight_im);
    CHECK(std::get<nn::OutputSquash>(a.model.layers[2]).gain == std::get<nn::OutputSquash>(b.model.layers[2]).gain);

    const auto c = train(make_decoder(SmallProblem::spec(), 1), p.train_set(), p.eval_set(), TrainConfig{0.15, 2, 8, 8});
    CHECK(std::get<nn::ComplexDense>(c.model.layers[0]).weight_re != da.weight_re);
  }

  TEST_CASE("U-Net variant trains") {
    const SmallProblem p;
    auto spec = SmallProblem::spec();
    spec.unet_levels = 1;
    spec.channels = 2;
    const auto r = train(make_decoder(spec, 3), p.train_set(), p.eval_set(), TrainConfig{0.15, 2, 8, 1});
    CHECK(std::isfinite(r.history.epochs.back().eval_loss));
  }

  TEST_CASE("inconsistent inputs are rejected") {
    const SmallProblem p;
    const auto m = make_decoder(SmallProblem::spec(), 1);
    const SampleSet uneven{std::span(p.train_speckle).first(10), std::span(p.train_plain).first(9)};
    CHECK_THROWS_AS(train(m, uneven, p.eval_set(), TrainConfig{}), InvalidArgument);
    const SampleSet empty{};
    CHECK_THROWS_AS(train(m, empty, p.eval_set(), TrainConfig{}), InvalidArgument);
    auto wrong = SmallProblem::spec();
    wrong.speckle_height = 8;
    wrong.speckle_width = 8;
    CHECK_THROWS_AS(train(make_decoder(wrong, 1), p.train_set(), p.eval_set(), TrainConfig{0.1, 1, 8, 0}),
                    InvalidArgument);
  }

  TEST_CASE("a diverging run aborts with a numerical failure") {
    const SmallProblem p;
    CHECK_THROWS_AS(train(make_decoder(SmallProblem::spec(), 1), p.train_set(), p.eval_set(), TrainConfig{1e300, 1, 8, 0}),
                    NumericalFailure);
  }

  TEST_CASE("history CSV") {
    TrainHistory h;
    h.epochs.push_back({1, -0.5, -0.4, 0.6});
    const auto csv = to_csv(h);
    CHECK(csv.rfind("epoch,train_loss,eval_loss,eval_pcc\n", 0) == 0);
    CHECK(csv.find("1,-0.500000000,-0.400000000,0.600000000") != std::string::npos);
  }
}
