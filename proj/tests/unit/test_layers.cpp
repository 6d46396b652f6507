#include <doctest.h>

#include "grad_oracle.hpp"
#include "layer_fixtures.hpp"
#include "speckle/error.hpp"
#include "speckle/layers.hpp"

using namespace speckle;
using test::check_stack;
using test::conv;
using test::dense;
using test::random_batch;

namespace {

constexpr double kTol = 1e-4;

}  // namespace

TEST_SUITE("layers") {
  TEST_CASE("complex dense on real input") {
    const auto r = check_stack({dense({1, 4, 4}, 12, 1)}, random_batch({1, 4, 4}, 3, false, 2), 3);
    CHECK(r.params_checked[0] == 200);
    CHECK(r.max_param_error < kTol);
    CHECK(r.max_input_error < kTol);
  }

  TEST_CASE("complex dense on complex input") {
    const auto r = check_stack({dense({1, 4, 4}, 12, 4)}, random_batch({1, 4, 4}, 2, true, 5), 6);
    CHECK(r.max_param_error < kTol);
    CHECK(r.max_input_error < kTol);
  }

  TEST_CASE("modulus") {
    const auto r = check_stack({nn::Modulus{}}, random_batch({1, 3, 5}, 2, true, 7), 8);
    CHECK(r.max_input_error < kTol);
    CHECK(r.inputs_checked > 0);
    const auto real = check_stack({nn::Modulus{}}, random_batch({1, 3, 5}, 2, false, 9), 10);
    CHECK(real.max_input_error < kTol);
  }

  TEST_CASE("conv block") {
    const auto r = check_stack({conv(4, 8, 11)}, random_batch({4, 6, 6}, 2, false, 12), 13);
    CHECK(r.params_checked[0] == 200);
    CHECK(r.max_param_error < kTol);
    CHECK(r.max_input_error < kTol);
  }

  TEST_CASE("downsample and upsample with skip") {
    const auto r = check_stack({nn::Downsample{}, conv(2, 3, 14), nn::Upsample{}},
                               random_batch({2, 6, 8}, 2, false, 15), 16);
    CHECK(r.max_param_error < kTol);
    CHECK(r.max_input_error < kTol);
  }

  TEST_CASE("output squash") {
    nn::OutputSquash s;
    s.gain = 1.7;
    s.offset = -0.3;
    const auto r = check_stack({s}, random_batch({1, 4, 4}, 3, false, 17), 18);
    CHECK(r.params_checked[0] == 2);
    CHECK(r.max_param_error < kTol);
    CHECK(r.max_input_error < kTol);
  }

  TEST_CASE("full chain: conv, pool, dense, modulus, squash") {
    const auto r = check_stack({conv(1, 3, 19), nn::Downsample{}, conv(3, 6, 20), nn::Upsample{}, conv(9, 1, 21),
                                dense({1, 8, 8}, 16, 22), nn::Modulus{}, nn::OutputSquash{}},
                               random_batch({1, 8, 8}, 2, false, 23, 0.0, 1.0), 24);
    CHECK(r.max_param_error < kTol);
    CHECK(r.max_input_error < kTol);
  }

  TEST_CASE("shape propagation") {
    std::vector<nn::Shape> skips;
    CHECK(nn::output_shape(conv(1, 4, 1), {1, 8, 8}, skips) == nn::Shape{4, 8, 8});
    CHECK(nn::output_shape(nn::Downsample{}, {4, 8, 8}, skips) == nn::Shape{4, 4, 4});
    REQUIRE(skips.size() == 1);
    CHECK(nn::output_shape(nn::Upsample{}, {8, 4, 4}, skips) == nn::Shape{12, 8, 8});
    CHECK(skips.empty());
    CHECK_THROWS_AS(nn::output_shape(nn::Upsample{}, {8, 4, 4}, skips), InvalidArgument);
    CHECK_THROWS_AS(nn::output_shape(nn::Downsample{}, {1, 5, 4}, skips), InvalidArgument);
    CHECK_THROWS_AS(nn::output_shape(conv(2, 4, 1), {1, 8, 8}, skips), InvalidArgument);
    CHECK_THROWS_AS(nn::output_shape(dense({1, 4, 4}, 3, 1), {1, 4, 5}, skips), InvalidArgument);
  }

  TEST_CASE("max-pool picks the window maximum and nearest upsampling repeats") {
    nn::Batch b;
    b.shape = {1, 2, 4};
    b.re.resize(8, 1);
    b.re << 1, 5, 2, 0, 3, 4, 8, 7;
    std::vector<nn::Batch> trace;
    const nn::Batch out = nn::forward_stack(std::vector<nn::Layer>{nn::Downsample{}, nn::Upsample{}}, b, &trace);
    const nn::Batch& pooled = trace[1];
    CHECK(pooled.re(0, 0) == 5);
    CHECK(pooled.re(1, 0) == 8);
    // upsample output: pooled values repeated, then the 1x2x4 skip channel
    CHECK(out.shape == nn::Shape{2, 2, 4});
    CHECK(out.re(0, 0) == 5);
    CHECK(out.re(1, 0) == 5);
    CHECK(out.re(2, 0) == 8);
    CHECK(out.re(7, 0) == 8);
    CHECK(out.re(8, 0) == 1);
    CHECK(out.re(15, 0) == 7);
  }

  TEST_CASE("parameter counts and zeros") {
    CHECK(nn::parameter_count(dense({1, 4, 4}, 3, 1)) == 2 * 3 * 16 + 2 * 3);
    CHECK(nn::parameter_count(conv(2, 5, 1)) == 5 * 2 * 9 + 5);
    CHECK(nn::parameter_count(nn::OutputSquash{}) == 2);
    CHECK(nn::parameter_count(nn::Modulus{}) == 0);
    nn::Layer z = nn::zeros_like(conv(2, 5, 1));
    for (auto s : nn::parameters(z)) {
      for (double v : s) CHECK(v == 0.0);
    }
  }
}
