#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's numerical routines.

#include "invot/core.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

using invot::Index;
using invot::Matrix;
using invot::Vector;

inline Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

inline Matrix uniform01(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = u(rng);
  return m;
}

inline Matrix rotation(Index d, std::mt19937_64& rng) {
  // Gram-Schmidt on a Gaussian matrix.
  Matrix q = gaussian(d, d, rng);
  for (Index j = 0; j < d; ++j) {
    for (Index k = 0; k < j; ++k) q.col(j) -= q.col(k).dot(q.col(j)) * q.col(k);
    q.col(j) /= q.col(j).norm();
  }
  return q;
}

inline Vector singular_values(const Matrix& m) {
  return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

inline double vec_norm(const Vector& v, double p) {
  if (std::isinf(p)) return v.cwiseAbs().maxCoeff();
  double acc = 0.0;
  for (Index i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v[i]), p);
  return std::pow(acc, 1.0 / p);
}

inline double schatten(const Matrix& m, double p) { return vec_norm(singular_values(m), p); }

inline Matrix sq_dist(const Matrix& x, const Matrix& y) {
  Matrix c(x.cols(), y.cols());
  for (Index i = 0; i < x.cols(); ++i)
    for (Index j = 0; j < y.cols(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < x.rows(); ++k) s += (x(k, i) - y(k, j)) * (x(k, i) - y(k, j));
      c(i, j) = s;
    }
  return c;
}

inline double entropy(const Matrix& g) {
  double h = 0.0;
  for (Index j = 0; j < g.cols(); ++j)
    for (Index i = 0; i < g.rows(); ++i)
      if (g(i, j) > 0.0) h -= g(i, j) * (std::log(g(i, j)) - 1.0);
  return h;
}

inline double inner(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i) s += a(i, j) * b(i, j);
  return s;
}

// Minimum of <Gamma, C> over permutation couplings (uniform square case).
inline double best_permutation_cost(const Matrix& c, std::vector<Index>* best_perm = nullptr) {
  const Index n = c.rows();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += c(i, perm[static_cast<std::size_t>(i)]);
    if (s < best) {
      best = s;
      if (best_perm) *best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

// Plain Sinkhorn in the exp domain, for well-conditioned kernels only.
inline Matrix plain_sinkhorn(const Matrix& c, const Vector& p, const Vector& q, double lambda,
                             int iters) {
  const Matrix k = (-c / lambda).array().exp().matrix();
  Vector a = Vector::Ones(p.size()), b = Vector::Ones(q.size());
  for (int t = 0; t < iters; ++t) {
    a = p.cwiseQuotient(k * b);
    b = q.cwiseQuotient(k.transpose() * a);
  }
  return a.asDiagonal() * k * b.asDiagonal();
}

inline Vector random_simplex(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Vector w(n);
  for (Index i = 0; i < n; ++i) w[i] = u(rng);
  return w / w.sum();
}

}  // namespace oracle
