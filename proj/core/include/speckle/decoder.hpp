#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "speckle/image.hpp"
#include "speckle/layers.hpp"
#include "speckle/optics.hpp"

namespace speckle {

enum class InputMode : std::uint8_t { intensity = 0, amplitude = 1 };

/// Trainable decryptor: speckle in, plaintext estimate out.
struct DecoderModel {
  InputMode input_mode = InputMode::amplitude;
  std::size_t speckle_height = 0;
  std::size_t speckle_width = 0;
  std::size_t output_height = 0;
  std::size_t output_width = 0;
  std::vector<nn::Layer> layers;
};

/// Architecture recipe for make_decoder().
///
///   unet_levels = 0, conv_stem = false:  dense -> |.| -> squash
///   unet_levels = 0, conv_stem = true:   conv(1->c) -> dense -> |.| -> squash
///   unet_levels = L > 0:                 conv(1->c), L x [down, conv x2 ch],
///                                        L x [up + skip, conv], conv(c->1),
///                                        dense -> |.| -> squash
struct DecoderSpec {
  std::size_t speckle_height = 32;
  std::size_t speckle_width = 32;
  std::size_t output_height = 16;
  std::size_t output_width = 16;
  InputMode input_mode = InputMode::amplitude;
  bool conv_stem = false;
  std::size_t unet_levels = 0;
  std::size_t channels = 4;
};

/// Builds and seeds a model. Dense weights are complex Gaussian with
/// variance 1/fan_in, conv kernels uniform in +-sqrt(6/(fan_in+fan_out)),
/// biases zero, squash gain 1 and offset 0.
DecoderModel make_decoder(const DecoderSpec& spec, std::uint64_t seed);

/// Throws InvalidArgument if the layer chain does not map the declared
/// speckle shape onto the declared output shape through an OutputSquash.
void validate(const DecoderModel& model);

std::size_t parameter_count(const DecoderModel& model);

/// Column-per-sample network input (intensity or sqrt(intensity)).
nn::Batch make_input(const DecoderModel& model, std::span<const SpecklePattern* const> speckles);

PlainImage forward(const DecoderModel& model, const SpecklePattern& speckle);
std::vector<PlainImage> forward_all(const DecoderModel& model, std::span<const SpecklePattern> speckles,
                                    unsigned threads = 0);

// ---- loss ----------------------------------------------------------------

/// MSE(estimate, reference) - PCC(estimate, reference). A constant estimate
/// has no PCC; the loss then falls back to the MSE term alone and a warning
/// is logged.
double loss(std::span<const double> estimate, std::span<const double> reference);

/// d loss / d estimate, population statistics.
std::vector<double> loss_gradient(std::span<const double> estimate, std::span<const double> reference);

// ---- training ------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.15;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

/// 0.5 * lr0 * (1 + cos(pi * step / total_steps)).
double cosine_learning_rate(double lr0, std::size_t step, std::size_t total_steps);

struct EpochRecord {
  std::size_t epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double eval_loss = 0.0;
  double eval_pcc = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

/// epoch,train_loss,eval_loss,eval_pcc
std::string to_csv(const TrainHistory& history);

/// Speckles paired index-by-index with their plaintexts.
struct SampleSet {
  std::span<const SpecklePattern> speckles;
  std::span<const PlainImage> plaintexts;

  std::size_t size() const { return speckles.size(); }
};

struct TrainResult {
  DecoderModel model;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Plain mini-batch SGD on MSE - PCC with per-step cosine annealing.
/// Mini-batch order is a seeded shuffle per epoch; every run with the same
/// inputs and seed is bit-identical. Throws NumericalFailure on a
/// non-finite loss.
TrainResult train(DecoderModel model, SampleSet train_set, SampleSet eval_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct EvalSummary {
  double mean_loss = 0.0;
  double mean_pcc = 0.0;
};

/// Mean loss and mean PCC over a sample set. A constant output counts as
/// PCC 0.
EvalSummary evaluate_model(const DecoderModel& model, SampleSet samples);

// ---- gradient verification ----------------------------------------------

struct GradCheckOptions {
  std::size_t per_layer = 200;  ///< smooth probes wanted per parametric layer
  double step = 1e-5;
  /// Smallest denominator of the relative error. Rounding noise in the
  /// loss (~1e-15) leaves ~1e-10 in a quotient over step 1e-5, so smaller
  /// components cannot be resolved to 1e-4 relative.
  double abs_floor = 1e-5;
  std::uint64_t seed = 0;
};

struct LayerGradCheck {
  std::size_t layer_index = 0;
  const char* layer_name = "";
  std::size_t checked = 0;
  double max_error = 0.0;
  std::size_t nonsmooth = 0;  ///< probes skipped because [-step, step] spans a kink
};

struct GradCheckResult {
  double max_error = 0.0;
  std::size_t checked = 0;
  std::vector<LayerGradCheck> layers;
};

/// Backprop parameter gradients versus central finite differences of the
/// single-sample loss. Error is |numeric - analytic| divided by
/// max(|numeric|, |analytic|, abs_floor). Each probe is also evaluated at
/// +-step/2; if the central quotients or the one-sided asymmetry do not
/// scale as a smooth function's would (a ReLU or max-pool switch inside the
/// interval), it is counted as nonsmooth and the next sampled parameter
/// takes its place.
GradCheckResult grad_check(const DecoderModel& model, const SpecklePattern& speckle, const PlainImage& plaintext,
                           const GradCheckOptions& options = {});

// ---- exact oracle --------------------------------------------------------

/// Ridge-regularised least squares on a detected complex field followed by
/// phase read-out: argmin ||T x - y||^2 + 1e-9 ||x||^2, then arg(x)/(2 pi)
/// wrapped into [0, 1). Needs n_out >= n_in; throws NumericalFailure when
/// the condition number of T^H T exceeds 1e12.
PlainImage pinv_decode(const PhysicalKey& key, const Eigen::VectorXcd& field, std::size_t height,
                       std::size_t width);
PlainImage pinv_decode(const PhysicalKey& key, const Eigen::VectorXcd& field);

// ---- model file ----------------------------------------------------------

inline constexpr std::uint16_t kModelFormatVersion = 1;

// "SPMD" | u16 version | u16 layer count | u8 input mode
// | u32 speckle h | u32 speckle w | u32 output h | u32 output w
// | per layer: u8 tag, then
//     complex_dense: u32 inputs, u32 outputs, f64 W_re[out*in], f64 W_im[out*in],
//                    f64 b_re[out], f64 b_im[out]   (row-major)
//     conv_block:    u32 in_ch, u32 out_ch, f64 kernels[out*in*9], f64 bias[out]
//     output_squash: f64 gain, f64 offset
//     modulus, downsample, upsample: no payload
// All integers and floats little-endian.
void save_model(const DecoderModel& model, const std::filesystem::path& path);
DecoderModel load_model(const std::filesystem::path& path);

}  // namespace speckle
