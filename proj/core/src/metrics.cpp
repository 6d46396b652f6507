#include "speckle/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <json.hpp>

#include "speckle/error.hpp"

namespace speckle::metrics {

namespace {

struct Moments {
  double mean_ref = 0.0;
  double mean_est = 0.0;
  double var_ref = 0.0;
  double var_est = 0.0;
  double cov = 0.0;
};

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("metric inputs differ in size: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  if (a.empty()) throw InvalidArgument("metric inputs are empty");
}

Moments moments(std::span<const double> ref, std::span<const double> est) {
  const auto n = static_cast<double>(ref.size());
  Moments m;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    m.mean_ref += ref[i];
    m.mean_est += est[i];
  }
  m.mean_ref /= n;
  m.mean_est /= n;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double dr = ref[i] - m.mean_ref;
    const double de = est[i] - m.mean_est;
    m.var_ref += dr * dr;
    m.var_est += de * de;
    m.cov += dr * de;
  }
  m.var_ref /= n;
  m.var_est /= n;
  m.cov /= n;
  return m;
}

}  // namespace

bool is_constant(std::span<const double> image) {
  return std::all_of(image.begin(), image.end(), [&](double v) { return v == image.front(); });
}

double pcc(std::span<const double> reference, std::span<const double> estimate) {
  check_pair(reference, estimate);
  const Moments m = moments(reference, estimate);
  if (is_constant(reference) || is_constant(estimate) || !(m.var_ref > 0.0) || !(m.var_est > 0.0)) {
    throw UndefinedMetric("PCC is undefined for a constant image");
  }
  const double r = m.cov / (std::sqrt(m.var_ref) * std::sqrt(m.var_est));
  return std::clamp(r, -1.0, 1.0);
}

double mse(std::span<const double> reference, std::span<const double> estimate) {
  check_pair(reference, estimate);
  double acc = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = estimate[i] - reference[i];
    acc += d * d;
  }
  return acc / static_cast<double>(reference.size());
}

double psnr_peak(std::span<const double> reference, std::span<const double> estimate) {
  check_pair(reference, estimate);
  return std::max(*std::max_element(reference.begin(), reference.end()),
                  *std::max_element(estimate.begin(), estimate.end()));
}

double psnr(std::span<const double> reference, std::span<const double> estimate) {
  const double err = mse(reference, estimate);
  if (!(err > 0.0)) throw UndefinedMetric("PSNR is undefined when MSE is zero");
  return 20.0 * std::log10(psnr_peak(reference, estimate) / std::sqrt(err));
}

double ssim(std::span<const double> reference, std::span<const double> estimate, const SsimConstants& k) {
  check_pair(reference, estimate);
  if (!(k.c1 > 0.0 && k.c2 > 0.0 && k.c3 > 0.0)) {
    throw InvalidArgument("SSIM constants must be positive");
  }
  const Moments m = moments(reference, estimate);
  const double sd_ref = std::sqrt(m.var_ref);
  const double sd_est = std::sqrt(m.var_est);
  const double luminance = (2.0 * m.mean_ref * m.mean_est + k.c1) /
                           (m.mean_ref * m.mean_ref + m.mean_est * m.mean_est + k.c1);
  const double contrast = (2.0 * sd_ref * sd_est + k.c2) / (m.var_ref + m.var_est + k.c2);
  const double structure = (m.cov + k.c3) / (sd_ref * sd_est + k.c3);
  return luminance * contrast * structure;
}

MetricReport evaluate(std::span<const double> reference, std::span<const double> estimate,
                      const SsimConstants& k) {
  MetricReport r;
  r.pcc = pcc(reference, estimate);
  r.mse = mse(reference, estimate);
  if (r.mse > 0.0) r.psnr = psnr(reference, estimate);
  r.ssim = ssim(reference, estimate, k);
  return r;
}

MetricReport evaluate(const PlainImage& reference, const PlainImage& estimate, const SsimConstants& k) {
  if (reference.height() != estimate.height() || reference.width() != estimate.width()) {
    throw InvalidArgument("image shapes differ");
  }
  return evaluate(reference.data(), estimate.data(), k);
}

std::string to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["pcc"] = report.pcc;
  j["mse"] = report.mse;
  j["psnr"] = report.psnr ? nlohmann::ordered_json(*report.psnr) : nlohmann::ordered_json(nullptr);
  j["ssim"] = report.ssim;
  return j.dump();
}

}  // namespace speckle::metrics
