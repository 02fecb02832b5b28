#include "invot/procrustes.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <random>
#include <string>

namespace invot {

namespace {

struct FullSvd {
  Matrix u;
  Vector sigma;
  Matrix v;
};

FullSvd full_svd(const Matrix& m) {
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

bool routes_to_nuclear(const NormOrder& p) {
  return !p.is_infinite() && p.value() < kNearOneOrder;
}

// Support point of {s : |s|_p <= k} in direction sigma (sigma >= 0, descending).
Vector spectrum_for(const Vector& sigma, const NormOrder& p, double k) {
  const Index d = sigma.size();
  if (p.is_infinite()) return Vector::Constant(d, k);
  if (routes_to_nuclear(p)) {
    // First index attaining the maximum (ties within 1e-12 relative).
    const double peak = sigma.maxCoeff();
    Index pick = 0;
    for (Index i = 0; i < d; ++i) {
      if (sigma[i] >= peak * (1.0 - 1e-12)) {
        pick = i;
        break;
      }
    }
    Vector s = Vector::Zero(d);
    s[pick] = k;
    return s;
  }
  const double q = p.dual().value();
  const double peak = sigma.maxCoeff();
  Vector s(d);
  for (Index i = 0; i < d; ++i) {
    const double r = sigma[i] / peak;
    s[i] = r > 0.0 ? std::pow(r, q - 1.0) : 0.0;
  }
  return k * s / lp_norm(s, p);
}

}  // namespace

double dual_norm_value(const Vector& sigma, const NormOrder& p) {
  if (routes_to_nuclear(p)) return lp_norm(sigma, NormOrder::infinity());
  return lp_norm(sigma, p.dual());
}

SpectralSolution optimal_map_in_ball(const Matrix& m, const InvarianceBall& ball) {
  require_finite(m, "procrustes input");
  if (m.rows() != m.cols()) {
    throw InvalidInput("unbalanced Procrustes (" + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ") is not supported");
  }
  if (m.rows() != ball.dim()) {
    throw InvalidInput("procrustes input has dimension " + std::to_string(m.rows()) +
                       " but the ball has dimension " + std::to_string(ball.dim()));
  }
  const Index d = m.rows();
  const double k = ball.radius();
  const FullSvd svd = full_svd(m);

  if (svd.sigma.maxCoeff() == 0.0) {
    const double identity_norm = lp_norm(Vector::Ones(d), ball.order());
    const Vector spectrum = Vector::Constant(d, k / identity_norm);
    return SpectralSolution{LinearMap((k / identity_norm) * Matrix::Identity(d, d), ball),
                            svd.sigma, spectrum, 0.0, true};
  }

  const Vector s = spectrum_for(svd.sigma, ball.order(), k);
  Matrix p = svd.u * s.asDiagonal() * svd.v.transpose();
  const double value = k * dual_norm_value(svd.sigma, ball.order());
  return SpectralSolution{LinearMap(std::move(p), ball), svd.sigma, s, value, false};
}

LinearMap random_feasible_map(Index d, const InvarianceBall& ball, std::uint64_t seed) {
  if (d < 1) throw InvalidInput("map dimension must be >= 1");
  if (d != ball.dim()) throw InvalidInput("map dimension differs from ball dimension");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  const FullSvd svd = full_svd(g);
  const Vector s = ball.radius() * svd.sigma / lp_norm(svd.sigma, ball.order());
  return LinearMap(svd.u * s.asDiagonal() * svd.v.transpose(), ball);
}

Matrix random_orthogonal(Index d, std::uint64_t seed) {
  if (d < 1) throw InvalidInput("dimension must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix g(d, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < d; ++i) g(i, j) = normal(rng);
  const FullSvd svd = full_svd(g);
  return svd.u * svd.v.transpose();
}

}  // namespace invot
