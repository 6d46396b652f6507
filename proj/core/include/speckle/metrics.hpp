#pragma once

#include <optional>
#include <span>
#include <string>

#include "speckle/image.hpp"

namespace speckle::metrics {

/// Stabilising constants of the luminance, contrast and structure terms.
struct SsimConstants {
  double c1 = 1e-5;
  double c2 = 1e-5;
  double c3 = 1e-5;
};

// All metrics use whole-image population (divide-by-N) statistics.
// `reference` is the ground truth y, `estimate` the decrypted image.

/// True when every pixel equals the first. A rounding-level variance from
/// the mean is not treated as structure.
bool is_constant(std::span<const double> image);

/// Pearson correlation. Throws UndefinedMetric if either image is constant.
double pcc(std::span<const double> reference, std::span<const double> estimate);
double mse(std::span<const double> reference, std::span<const double> estimate);
/// 20 log10(peak / sqrt(MSE)) where peak is the largest pixel of either
/// image. Throws UndefinedMetric when MSE is zero.
double psnr(std::span<const double> reference, std::span<const double> estimate);
double ssim(std::span<const double> reference, std::span<const double> estimate,
            const SsimConstants& k = {});

/// Peak value used by psnr(): global maximum over both images.
double psnr_peak(std::span<const double> reference, std::span<const double> estimate);

struct MetricReport {
  double pcc = 0.0;
  double mse = 0.0;
  std::optional<double> psnr;  ///< empty when MSE is zero
  double ssim = 0.0;
};

/// All four metrics. PCC is still required to be defined.
MetricReport evaluate(std::span<const double> reference, std::span<const double> estimate,
                      const SsimConstants& k = {});
MetricReport evaluate(const PlainImage& reference, const PlainImage& estimate, const SsimConstants& k = {});

/// {"pcc":..,"mse":..,"psnr":..|null,"ssim":..}
std::string to_json(const MetricReport& report);

}  // namespace speckle::metrics
