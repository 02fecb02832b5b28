#pragma once

#include "invot/core.hpp"
#include "invot/sinkhorn.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace invot {

/// Which condition makes the bilinear objective <X Gamma Y^T, P> equivalent to
/// the squared-distance problem.
enum class Enforcement {
  /// Maps are restricted to the angle-preserving (orthogonal) members of the ball.
  AnglePreserving,
  /// The target is nu-whitened: Y diag(q)^2 Y^T = I.
  Whitened,
};

struct SolverConfig {
  InvarianceBall ball;
  double lambda0 = 1.0;
  double decay = 0.95;
  double lambda_min = 1e-3;
  int outer_max_iters = 300;
  double outer_tol = 1e-6;  // relative change of the transport cost
  SinkhornSettings sinkhorn;  // lambda is driven by the annealing schedule
  std::uint64_t seed = 0;
  Enforcement enforcement = Enforcement::AnglePreserving;
  double whiteness_tol = 1e-6;
  /// Independent random starts (seed, seed+1, ...); the run with the lowest final
  /// transport cost is returned. Ignored when an initial map is supplied.
  int restarts = 1;

  explicit SolverConfig(InvarianceBall b) : ball(std::move(b)) {}
  void validate() const;
};

struct TraceRecord {
  int start = 0;  // restart index
  int iteration = 0;
  double lambda = 0.0;
  double objective = 0.0;              // <Gamma, C_P>
  double regularized_objective = 0.0;  // <Gamma, X^T P Y> + lambda H(Gamma)
  double delta_map = 0.0;              // |P_t - P_{t-1}|_F
  double delta_gamma = 0.0;            // |Gamma_t - Gamma_{t-1}|_F
  int sinkhorn_iterations = 0;
  bool sinkhorn_converged = false;
};

using SolveTrace = std::vector<TraceRecord>;
using TraceCallback = std::function<void(const TraceRecord&)>;

struct AlignmentResult {
  Coupling gamma;
  LinearMap map;
  SolveTrace trace;
  bool converged = false;
  int start = 0;  // index of the start that produced this result
};

struct SolveOptions {
  /// Starting map; a random feasible map from cfg.seed when absent.
  std::optional<Matrix> initial_map;
  TraceCallback on_iteration;
};

/// Annealed alternating maximization of <Gamma, X^T P Y> + lambda H(Gamma):
/// Sinkhorn against |x_i - P y_j|^2, then the closed-form map update from
/// X Gamma Y^T, then lambda <- max(lambda * decay, lambda_min).
/// The returned map sends target points into the source space.
AlignmentResult solve(const PointSet& x, const PointSet& y, const SolverConfig& cfg,
                      const SolveOptions& options = {});

struct WhitenessReport {
  bool white = false;
  double residual = 0.0;  // |Y diag(q)^2 Y^T - I|_F
};

WhitenessReport whiteness_check(const PointSet& y, double tol);

/// Returns S^{-1/2} Y with S = Y diag(q)^2 Y^T.
PointSet whiten_pointset(const PointSet& y);

/// The inverse square root used by whiten_pointset.
Matrix whitening_transform(const PointSet& y);

/// <Gamma, X^T P Y> + lambda H(Gamma).
double regularized_objective(const Matrix& x, const Matrix& y, const Matrix& gamma,
                             const Matrix& p, double lambda);

/// |X Gamma Y^T|_* ; the optimal value of the map step over the unit spectral ball.
double nuclear_objective(const Matrix& x, const Matrix& y, const Matrix& gamma);

}  // namespace invot
