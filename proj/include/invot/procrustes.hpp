#pragma once

#include "invot/core.hpp"

#include <cstdint>

namespace invot {

/// Orders p below this are handled as the nuclear-norm ball.
inline constexpr double kNearOneOrder = 1.0 + 1e-6;

struct SpectralSolution {
  LinearMap map;
  Vector singular_values;  // of M, descending
  Vector spectrum;         // s, singular values of the returned map
  double optimal_value = 0.0;
  /// M was zero: every feasible map is optimal and a scaled identity is returned.
  bool degenerate = false;
};

/// argmax <P, M> over the Schatten ball: P = U diag(s) V^T with s the support
/// point of the vector l_p ball in direction sigma(M).
SpectralSolution optimal_map_in_ball(const Matrix& m, const InvarianceBall& ball);

/// Random Gaussian matrix with its spectrum rescaled onto the ball boundary.
LinearMap random_feasible_map(Index d, const InvarianceBall& ball, std::uint64_t seed);

/// U V^T from the SVD of a seeded standard Gaussian matrix.
Matrix random_orthogonal(Index d, std::uint64_t seed);

/// |sigma|_q for the dual exponent q of p.
double dual_norm_value(const Vector& sigma, const NormOrder& p);

}  // namespace invot
