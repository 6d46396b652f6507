#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "speckle/decoder.hpp"
#include "speckle/error.hpp"

namespace speckle {

namespace {
constexpr double kRidge = 1e-9;
constexpr double kMaxCondition = 1e12;
}  // namespace

PlainImage pinv_decode(const PhysicalKey& key, const Eigen::VectorXcd& field, std::size_t height,
                       std::size_t width) {
  if (key.n_out < key.n_in) {
    throw InvalidArgument("pseudo-inverse decoding needs n_out >= n_in, got n_out=" + std::to_string(key.n_out) +
                          " n_in=" + std::to_string(key.n_in));
  }
  if (static_cast<std::size_t>(field.size()) != key.n_out) {
    throw InvalidArgument("field has " + std::to_string(field.size()) + " entries, key n_out=" +
                          std::to_string(key.n_out));
  }
  if (height * width != key.n_in) {
    throw InvalidArgument("output shape " + std::to_string(height) + "x" + std::to_string(width) +
                          " does not match key n_in=" + std::to_string(key.n_in));
  }

  const Eigen::Index n = static_cast<Eigen::Index>(key.n_in);
  Eigen::MatrixXcd normal = key.matrix.adjoint() * key.matrix;

  // Conditioning of the unregularised system; the ridge alone would cap the
  // estimate near max_eig / 1e-9 and hide rank deficiency.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(normal, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalFailure("eigenvalue estimate of the normal matrix failed");
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kMaxCondition) {
    throw NumericalFailure("normal matrix is ill-conditioned (condition estimate " + std::to_string(hi / lo) + ")");
  }
  normal.diagonal().array() += kRidge;

  const Eigen::LLT<Eigen::MatrixXcd> llt(normal);
  if (llt.info() != Eigen::Success) throw NumericalFailure("Cholesky factorisation failed");
  const Eigen::VectorXcd x = llt.solve(key.matrix.adjoint() * field);

  std::vector<double> pixels(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    double p = std::arg(x[k]) / (2.0 * std::numbers::pi);
    p -= std::floor(p);
    if (p >= 1.0) p = 0.0;
    pixels[static_cast<std::size_t>(k)] = p;
  }
  return PlainImage(height, width, std::move(pixels));
}

PlainImage pinv_decode(const PhysicalKey& key, const Eigen::VectorXcd& field) {
  const SpeckleShape side = square_shape(key.n_in);
  return pinv_decode(key, field, side.height, side.width);
}

}  // namespace speckle
