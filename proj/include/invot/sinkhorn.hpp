#pragma once

#include "invot/core.hpp"

#include <functional>
#include <optional>

namespace invot {

enum class CostKind { SquaredEuclidean, NegativeInner };

struct CostMatrix {
  Matrix cost;
  CostKind kind = CostKind::SquaredEuclidean;

  /// Throws InvalidInput on non-finite entries or negative squared distances.
  void validate() const;
  Index rows() const { return cost.rows(); }
  Index cols() const { return cost.cols(); }
};

/// C_ij = |x_i - y_j|^2, via the |x|^2 + |y|^2 - 2<x,y> expansion with tiny
/// negatives clamped to zero.
CostMatrix pairwise_sq_dist(const Matrix& x, const Matrix& y);

struct SinkhornSettings {
  double lambda = 1.0;  // K = exp(-C / lambda)
  int max_inner_iters = 1000;
  double marginal_tol = kDefaultMarginalTol;

  void validate() const;
};

/// Dual potentials in cost units: Gamma_ij = exp((f_i + g_j - C_ij) / lambda).
struct DualPotentials {
  Vector f;
  Vector g;
};

struct SinkhornResult {
  Matrix gamma;
  bool converged = false;
  int iterations = 0;
  /// Max-norm marginal residual of `gamma` (rows and columns).
  double residual = 0.0;
  /// True when the kernel underflowed and the stabilized log-domain path ran.
  bool log_domain = false;
  DualPotentials potentials;

  /// Wraps the plan as a Coupling; throws if it violates the marginals at `tol`.
  Coupling coupling(const Histogram& p, const Histogram& q,
                    double tol = kDefaultMarginalTol) const;
};

/// Called after every full (row, column) scaling sweep with the current plan.
using SweepObserver = std::function<void(int sweep, const Matrix& gamma)>;

struct SinkhornOptions {
  /// Potentials from a previous solve (possibly at another lambda). Forces the
  /// stabilized path.
  const DualPotentials* warm_start = nullptr;
  SweepObserver observer;
};

/// Entropic OT: returns diag(a) K diag(b) with K = exp(-C/lambda). Plain scaling
/// when K is representable; otherwise a log-stabilized scaling with absorption
/// of the scalings into dual potentials.
SinkhornResult sinkhorn_solve(const CostMatrix& c, const Histogram& p, const Histogram& q,
                              const SinkhornSettings& settings, const SinkhornOptions& options = {});

/// H(Gamma) = -sum Gamma_ij (log Gamma_ij - 1), with 0 log 0 = 0.
double entropy(const Matrix& gamma);
inline double entropy(const Coupling& gamma) { return entropy(gamma.gamma()); }

/// <Gamma, C>.
double transport_cost(const Matrix& gamma, const CostMatrix& c);
inline double transport_cost(const Coupling& gamma, const CostMatrix& c) {
  return transport_cost(gamma.gamma(), c);
}

/// Projects a nonnegative matrix onto Pi(p, q): rows and columns with excess
/// mass are scaled down, then the deficit is restored with a rank-one update.
Matrix round_to_polytope(const Matrix& gamma, const Histogram& p, const Histogram& q);

}  // namespace invot
