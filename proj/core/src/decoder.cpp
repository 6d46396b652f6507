#include "speckle/decoder.hpp"

#include <cmath>
#include <string>

#include "log.hpp"
#include "speckle/error.hpp"
#include "speckle/metrics.hpp"
#include "speckle/parallel.hpp"
#include "speckle/rng.hpp"

namespace speckle {

namespace {

nn::ComplexDense make_dense(nn::Shape input, std::size_t outputs, Xoshiro256& rng) {
  nn::ComplexDense d;
  d.input = input;
  d.outputs = outputs;
  const auto rows = static_cast<Eigen::Index>(outputs);
  const auto cols = static_cast<Eigen::Index>(input.size());
  d.weight_re.resize(rows, cols);
  d.weight_im.resize(rows, cols);
  const double part_sd = std::sqrt(1.0 / (2.0 * static_cast<double>(input.size())));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      d.weight_re(r, c) = part_sd * rng.normal();
      d.weight_im(r, c) = part_sd * rng.normal();
    }
  }
  d.bias_re = Eigen::VectorXd::Zero(rows);
  d.bias_im = Eigen::VectorXd::Zero(rows);
  return d;
}

nn::ConvBlock make_conv(std::size_t in_ch, std::size_t out_ch, Xoshiro256& rng) {
  nn::ConvBlock c;
  c.in_channels = in_ch;
  c.out_channels = out_ch;
  c.kernels.resize(static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(in_ch * 9));
  const double limit = std::sqrt(6.0 / static_cast<double>(in_ch * 9 + out_ch * 9));
  for (Eigen::Index r = 0; r < c.kernels.rows(); ++r) {
    for (Eigen::Index k = 0; k < c.kernels.cols(); ++k) c.kernels(r, k) = rng.uniform(-limit, limit);
  }
  c.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out_ch));
  return c;
}

void check_speckle(const DecoderModel& model, const SpecklePattern& s) {
  if (s.height != model.speckle_height || s.width != model.speckle_width) {
    throw InvalidArgument("speckle is " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                          " but the decoder expects " + std::to_string(model.speckle_height) + "x" +
                          std::to_string(model.speckle_width));
  }
  if (s.data.size() != s.height * s.width) throw InvalidArgument("speckle buffer does not match its shape");
}

}  // namespace

DecoderModel make_decoder(const DecoderSpec& spec, std::uint64_t seed) {
  if (spec.speckle_height == 0 || spec.speckle_width == 0 || spec.output_height < 2 || spec.output_width < 2) {
    throw InvalidArgument("decoder shapes must be positive and the output at least 2x2");
  }
  if ((spec.conv_stem || spec.unet_levels > 0) && spec.channels == 0) {
    throw InvalidArgument("decoder channel count must be positive");
  }
  Xoshiro256 rng(derive_seed(seed, "decoder-init"));
  DecoderModel model;
  model.input_mode = spec.input_mode;
  model.speckle_height = spec.speckle_height;
  model.speckle_width = spec.speckle_width;
  model.output_height = spec.output_height;
  model.output_width = spec.output_width;

  nn::Shape shape{1, spec.speckle_height, spec.speckle_width};
  const std::size_t c = spec.channels;
  if (spec.unet_levels > 0) {
    model.layers.emplace_back(make_conv(1, c, rng));
    std::size_t ch = c;
    for (std::size_t l = 0; l < spec.unet_levels; ++l) {
      model.layers.emplace_back(nn::Downsample{});
      model.layers.emplace_back(make_conv(ch, 2 * ch, rng));
      ch *= 2;
    }
    for (std::size_t l = 0; l < spec.unet_levels; ++l) {
      model.layers.emplace_back(nn::Upsample{});
      model.layers.emplace_back(make_conv(ch + ch / 2, ch / 2, rng));
      ch /= 2;
    }
    model.layers.emplace_back(make_conv(ch, 1, rng));
  } else if (spec.conv_stem) {
    model.layers.emplace_back(make_conv(1, c, rng));
    shape.channels = c;
  }
  model.layers.emplace_back(make_dense(shape, spec.output_height * spec.output_width, rng));
  model.layers.emplace_back(nn::Modulus{});
  model.layers.emplace_back(nn::OutputSquash{});
  validate(model);
  return model;
}

void validate(const DecoderModel& model) {
  if (model.layers.empty()) throw InvalidArgument("decoder has no layers");
  if (!std::holds_alternative<nn::OutputSquash>(model.layers.back())) {
    throw InvalidArgument("decoder must end with an output squash layer");
  }
  nn::Shape shape{1, model.speckle_height, model.speckle_width};
  std::vector<nn::Shape> skips;
  for (const auto& layer : model.layers) shape = nn::output_shape(layer, shape, skips);
  if (!skips.empty()) throw InvalidArgument("decoder has unmatched downsample layers");
  if (shape.size() != model.output_height * model.output_width) {
    throw InvalidArgument("decoder produces " + std::to_string(shape.size()) + " values, expected " +
                          std::to_string(model.output_height) + "x" + std::to_string(model.output_width));
  }
  // The squash is the only layer allowed to see real input at the end, so a
  // dense layer must be followed by a modulus somewhere before it.
  bool complex_live = false;
  for (const auto& layer : model.layers) {
    if (std::holds_alternative<nn::ComplexDense>(layer)) complex_live = true;
    if (std::holds_alternative<nn::Modulus>(layer)) complex_live = false;
    if (complex_live && (std::holds_alternative<nn::ConvBlock>(layer) ||
                         std::holds_alternative<nn::OutputSquash>(layer))) {
      throw InvalidArgument("complex activations must pass through a modulus layer first");
    }
  }
}

std::size_t parameter_count(const DecoderModel& model) {
  std::size_t n = 0;
  for (const auto& layer : model.layers) n += nn::parameter_count(layer);
  return n;
}

nn::Batch make_input(const DecoderModel& model, std::span<const SpecklePattern* const> speckles) {
  nn::Batch batch;
  batch.shape = {1, model.speckle_height, model.speckle_width};
  batch.re.resize(static_cast<Eigen::Index>(batch.shape.size()), static_cast<Eigen::Index>(speckles.size()));
  for (std::size_t b = 0; b < speckles.size(); ++b) {
    const SpecklePattern& s = *speckles[b];
    check_speckle(model, s);
    for (std::size_t i = 0; i < s.data.size(); ++i) {
      const double v = s.data[i];
      batch.re(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) =
          model.input_mode == InputMode::amplitude ? std::sqrt(std::max(v, 0.0)) : v;
    }
  }
  return batch;
}

PlainImage forward(const DecoderModel& model, const SpecklePattern& speckle) {
  const SpecklePattern* ptr = &speckle;
  const nn::Batch out = nn::forward_stack(model.layers, make_input(model, std::span(&ptr, 1)), nullptr);
  std::vector<double> pixels(out.re.data(), out.re.data() + out.re.rows());
  return PlainImage(model.output_height, model.output_width, std::move(pixels));
}

std::vector<PlainImage> forward_all(const DecoderModel& model, std::span<const SpecklePattern> speckles,
                                    unsigned threads) {
  std::vector<PlainImage> out(speckles.size());
  parallel_for(speckles.size(), threads, [&](std::size_t i) { out[i] = forward(model, speckles[i]); });
  return out;
}

// ---- loss ----------------------------------------------------------------

namespace {

struct LossTerms {
  double mean_est = 0.0;
  double mean_ref = 0.0;
  double sd_est = 0.0;
  double sd_ref = 0.0;
  double cov = 0.0;
  bool constant = false;  ///< either side constant
};

LossTerms loss_terms(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size() || est.empty()) {
    throw InvalidArgument("loss inputs differ in size: " + std::to_string(est.size()) + " vs " +
                          std::to_string(ref.size()));
  }
  const auto n = static_cast<double>(est.size());
  LossTerms t;
  for (std::size_t i = 0; i < est.size(); ++i) {
    t.mean_est += est[i];
    t.mean_ref += ref[i];
  }
  t.mean_est /= n;
  t.mean_ref /= n;
  double var_est = 0.0;
  double var_ref = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double de = est[i] - t.mean_est;
    const double dr = ref[i] - t.mean_ref;
    var_est += de * de;
    var_ref += dr * dr;
    t.cov += de * dr;
  }
  t.sd_est = std::sqrt(var_est / n);
  t.sd_ref = std::sqrt(var_ref / n);
  t.cov /= n;
  t.constant = metrics::is_constant(est) || metrics::is_constant(ref);
  return t;
}

bool pcc_defined(const LossTerms& t) { return !t.constant && t.sd_est > 0.0 && t.sd_ref > 0.0; }

}  // namespace

double loss(std::span<const double> estimate, std::span<const double> reference) {
  const LossTerms t = loss_terms(estimate, reference);
  const double mse = metrics::mse(reference, estimate);
  if (!pcc_defined(t)) {
    detail::log_warning("PCC undefined for a constant image; loss falls back to MSE");
    return mse;
  }
  return mse - t.cov / (t.sd_est * t.sd_ref);
}

std::vector<double> loss_gradient(std::span<const double> estimate, std::span<const double> reference) {
  const LossTerms t = loss_terms(estimate, reference);
  const auto n = static_cast<double>(estimate.size());
  std::vector<double> grad(estimate.size());
  for (std::size_t k = 0; k < estimate.size(); ++k) grad[k] = 2.0 * (estimate[k] - reference[k]) / n;
  if (!pcc_defined(t)) {
    detail::log_warning("PCC undefined for a constant image; gradient uses MSE only");
    return grad;
  }
  // d pcc / d est_k = [ (ref_k - mean_ref) / (sd_ref sd_est) - pcc (est_k - mean_est) / sd_est^2 ] / n
  const double r = t.cov / (t.sd_est * t.sd_ref);
  const double a = 1.0 / (n * t.sd_ref * t.sd_est);
  const double b = r / (n * t.sd_est * t.sd_est);
  for (std::size_t k = 0; k < estimate.size(); ++k) {
    grad[k] -= a * (reference[k] - t.mean_ref) - b * (estimate[k] - t.mean_est);
  }
  return grad;
}

EvalSummary evaluate_model(const DecoderModel& model, SampleSet samples) {
  if (samples.speckles.size() != samples.plaintexts.size()) {
    throw InvalidArgument("sample set has mismatched speckle and plaintext counts");
  }
  EvalSummary summary;
  if (samples.size() == 0) return summary;
  constexpr std::size_t kChunk = 64;
  std::vector<const SpecklePattern*> ptrs;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    ptrs.clear();
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&samples.speckles[i]);
    const nn::Batch out = nn::forward_stack(model.layers, make_input(model, ptrs), nullptr);
    for (std::size_t i = start; i < end; ++i) {
      const auto col = static_cast<Eigen::Index>(i - start);
      std::span<const double> est(out.re.col(col).data(), static_cast<std::size_t>(out.re.rows()));
      const auto ref = samples.plaintexts[i].data();
      summary.mean_loss += loss(est, ref);
      const LossTerms t = loss_terms(est, ref);
      if (pcc_defined(t)) summary.mean_pcc += t.cov / (t.sd_est * t.sd_ref);
    }
  }
  summary.mean_loss /= static_cast<double>(samples.size());
  summary.mean_pcc /= static_cast<double>(samples.size());
  return summary;
}

}  // namespace speckle
