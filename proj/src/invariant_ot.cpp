#include "invot/invariant_ot.hpp"

#include "invot/procrustes.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace invot {

namespace {

constexpr double kObjectiveFloor = 1e-12;

// Ball actually searched by the map step under the chosen enforcement.
InvarianceBall update_ball(const SolverConfig& cfg) {
  if (cfg.enforcement == Enforcement::Whitened) return cfg.ball;
  const Index d = cfg.ball.dim();
  const double identity_norm = lp_norm(Vector::Ones(d), cfg.ball.order());
  if (cfg.ball.radius() < identity_norm * (1.0 - 1e-12)) {
    throw InvalidInput("ball of radius " + std::to_string(cfg.ball.radius()) +
                       " contains no angle-preserving map");
  }
  return InvarianceBall(NormOrder::infinity(), 1.0, d);
}

// <Gamma, C_P> for C_ij = |x_i - P y_j|^2, from the realized marginals of Gamma.
double transport_objective(const Matrix& x, const Matrix& y, const Matrix& gamma,
                           const Matrix& cross, const Matrix& p) {
  const Vector rows = gamma.rowwise().sum();
  const Vector cols = gamma.colwise().sum().transpose();
  const double source_term = x.colwise().squaredNorm().dot(rows.transpose());
  const Matrix py = p * y;
  const double target_term = py.colwise().squaredNorm().dot(cols.transpose());
  return source_term + target_term - 2.0 * cross.cwiseProduct(p).sum();
}

bool close_enough(double prev, double cur, double tol) {
  const double scale = std::max({std::abs(prev), std::abs(cur), kObjectiveFloor});
  return std::abs(cur - prev) <= tol * scale;
}

}  // namespace

void SolverConfig::validate() const {
  if (!(lambda0 > 0.0) || !(lambda_min > 0.0)) throw InvalidInput("lambda0 and lambda_min must be positive");
  if (lambda_min > lambda0) throw InvalidInput("lambda_min must not exceed lambda0");
  if (!(decay > 0.0 && decay < 1.0)) throw InvalidInput("decay must lie in (0, 1)");
  if (outer_max_iters < 1) throw InvalidInput("outer_max_iters must be >= 1");
  if (!(outer_tol > 0.0)) throw InvalidInput("outer_tol must be positive");
  if (restarts < 1) throw InvalidInput("restarts must be >= 1");
  SinkhornSettings check = sinkhorn;
  check.lambda = lambda0;
  check.validate();
}

namespace {

AlignmentResult solve_once(const PointSet& x, const PointSet& y, const SolverConfig& cfg,
                           const InvarianceBall& ball, const Matrix& initial_map,
                           const TraceCallback& on_iteration, int start) {
  Matrix p = LinearMap(initial_map, ball).matrix();

  const Histogram& mu = x.weights();
  const Histogram& nu = y.weights();
  Matrix gamma = mu.mass() * nu.mass().transpose();
  SinkhornSettings settings = cfg.sinkhorn;
  DualPotentials potentials;
  bool have_potentials = false;

  SolveTrace trace;
  double lambda = cfg.lambda0;
  bool converged = false;
  std::optional<double> previous_at_floor;

  for (int t = 0; t < cfg.outer_max_iters; ++t) {
    settings.lambda = lambda;
    const CostMatrix cost = pairwise_sq_dist(x.data(), p * y.data());
    SinkhornOptions sk_options;
    if (have_potentials) sk_options.warm_start = &potentials;
    SinkhornResult sk;
    try {
      sk = sinkhorn_solve(cost, mu, nu, settings, sk_options);
    } catch (const NumericalFailure& e) {
      std::ostringstream os;
      os << "outer iteration " << t << " (lambda=" << lambda << "): " << e.what();
      throw NumericalFailure(os.str());
    }
    potentials = std::move(sk.potentials);
    have_potentials = potentials.f.allFinite() && potentials.g.allFinite();
    Matrix next_gamma = sk.converged ? std::move(sk.gamma) : round_to_polytope(sk.gamma, mu, nu);

    const Matrix cross = x.data() * next_gamma * y.data().transpose();
    const SpectralSolution step = optimal_map_in_ball(cross, ball);

    TraceRecord rec;
    rec.start = start;
    rec.iteration = t;
    rec.lambda = lambda;
    rec.objective = transport_objective(x.data(), y.data(), next_gamma, cross, step.map.matrix());
    rec.regularized_objective =
        cross.cwiseProduct(step.map.matrix()).sum() + lambda * entropy(next_gamma);
    rec.delta_map = (step.map.matrix() - p).norm();
    rec.delta_gamma = (next_gamma - gamma).norm();
    rec.sinkhorn_iterations = sk.iterations;
    rec.sinkhorn_converged = sk.converged;
    if (on_iteration) on_iteration(rec);
    trace.push_back(rec);

    p = step.map.matrix();
    gamma = std::move(next_gamma);

    if (lambda == cfg.lambda_min) {
      if (previous_at_floor && close_enough(*previous_at_floor, rec.objective, cfg.outer_tol)) {
        converged = true;
        break;
      }
      previous_at_floor = rec.objective;
    }
    lambda = std::max(lambda * cfg.decay, cfg.lambda_min);
  }

  return AlignmentResult{Coupling(std::move(gamma), mu, nu, std::max(cfg.sinkhorn.marginal_tol, 1e-9)),
                         LinearMap(std::move(p), cfg.ball), std::move(trace), converged};
}

}  // namespace

AlignmentResult solve(const PointSet& x, const PointSet& y, const SolverConfig& cfg,
                      const SolveOptions& options) {
  cfg.validate();
  if (x.dim() != y.dim()) {
    throw InvalidInput("source has dimension " + std::to_string(x.dim()) + " but target has " +
                       std::to_string(y.dim()));
  }
  if (x.dim() != cfg.ball.dim()) {
    throw InvalidInput("invariance ball dimension " + std::to_string(cfg.ball.dim()) +
                       " differs from data dimension " + std::to_string(x.dim()));
  }
  if (cfg.enforcement == Enforcement::Whitened) {
    const WhitenessReport w = whiteness_check(y, cfg.whiteness_tol);
    if (!w.white) {
      throw InvalidInput("target is not nu-whitened (residual " + std::to_string(w.residual) + ")");
    }
  }
  const InvarianceBall ball = update_ball(cfg);
  if (options.initial_map) {
    return solve_once(x, y, cfg, ball, *options.initial_map, options.on_iteration, 0);
  }

  std::optional<AlignmentResult> best;
  for (int s = 0; s < cfg.restarts; ++s) {
    const Matrix init = random_feasible_map(x.dim(), ball, cfg.seed + static_cast<std::uint64_t>(s)).matrix();
    AlignmentResult run = solve_once(x, y, cfg, ball, init, options.on_iteration, s);
    run.start = s;
    if (!best || run.trace.back().objective < best->trace.back().objective) best = std::move(run);
  }
  return std::move(*best);
}

WhitenessReport whiteness_check(const PointSet& y, double tol) {
  const Matrix yq = y.data() * y.weights().mass().asDiagonal();
  const Matrix s = yq * yq.transpose();
  WhitenessReport report;
  report.residual = (s - Matrix::Identity(y.dim(), y.dim())).norm();
  report.white = report.residual <= tol;
  return report;
}

Matrix whitening_transform(const PointSet& y) {
  const Matrix yq = y.data() * y.weights().mass().asDiagonal();
  const Matrix s = yq * yq.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  const Vector& ev = eig.eigenvalues();
  const double largest = ev.maxCoeff();
  const double smallest = ev.minCoeff();
  if (!(largest > 0.0) || smallest <= 1e-12 * largest) {
    std::ostringstream os;
    os << "whitening needs a nonsingular second-moment matrix; eigenvalues span [" << smallest << ", "
       << largest << "]";
    throw SingularInput(os.str());
  }
  return eig.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
         eig.eigenvectors().transpose();
}

PointSet whiten_pointset(const PointSet& y) {
  return PointSet(whitening_transform(y) * y.data(), y.weights());
}

double regularized_objective(const Matrix& x, const Matrix& y, const Matrix& gamma,
                             const Matrix& p, double lambda) {
  if (x.cols() != gamma.rows() || y.cols() != gamma.cols() || x.rows() != y.rows() ||
      p.rows() != x.rows() || p.cols() != y.rows()) {
    throw InvalidInput("regularized_objective: inconsistent shapes");
  }
  const Matrix cross = x * gamma * y.transpose();
  return cross.cwiseProduct(p).sum() + lambda * entropy(gamma);
}

double nuclear_objective(const Matrix& x, const Matrix& y, const Matrix& gamma) {
  if (x.cols() != gamma.rows() || y.cols() != gamma.cols() || x.rows() != y.rows()) {
    throw InvalidInput("nuclear_objective: inconsistent shapes");
  }
  return schatten_norm(x * gamma * y.transpose(), NormOrder::finite(1.0));
}

}  // namespace invot
