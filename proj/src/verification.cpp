#include "invot/verification.hpp"

#include "invot/gromov.hpp"
#include "invot/procrustes.hpp"
#include "invot/sinkhorn.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <limits>
#include <cmath>
#include <random>

namespace invot {

namespace {

Matrix unit_columns(Index d, Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(d, n);
  for (Index j = 0; j < n; ++j) {
    do {
      for (Index i = 0; i < d; ++i) m(i, j) = normal(rng);
    } while (m.col(j).norm() < 1e-8);
    m.col(j).normalize();
  }
  return m;
}

Histogram random_histogram(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Vector w(n);
  for (Index i = 0; i < n; ++i) w[i] = u(rng);
  return Histogram(w / w.sum());
}

double ball_norm(const Vector& sigma, const NormOrder& p) {
  if (p.is_infinite()) return sigma.maxCoeff();
  const double e = p.value();
  double acc = 0.0;
  for (Index i = 0; i < sigma.size(); ++i) acc += std::pow(sigma[i], e);
  return std::pow(acc, 1.0 / e);
}

double dual_value(const Vector& sigma, const NormOrder& p) {
  if (p.is_infinite()) return sigma.sum();
  if (p.value() == 1.0) return sigma.maxCoeff();
  const double q = p.value() / (p.value() - 1.0);
  double acc = 0.0;
  for (Index i = 0; i < sigma.size(); ++i) acc += std::pow(sigma[i], q);
  return std::pow(acc, 1.0 / q);
}

}  // namespace

GwSuiteReport run_gw_suite(int trials, std::uint64_t seed, double tol) {
  if (trials < 1) throw InvalidInput("trials must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> dim(1, 10), size(1, 30);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GwSuiteReport report;
  report.trials = trials;
  report.tol = tol;
  for (int t = 0; t < trials; ++t) {
    const Index d = dim(rng), n = size(rng), m = size(rng);
    const Matrix x = unit_columns(d, n, rng);
    const Matrix y = unit_columns(d, m, rng);
    Matrix c(n, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < n; ++i) c(i, j) = unit(rng);
    SinkhornSettings s;
    s.lambda = 0.05 + unit(rng);
    const Histogram p = random_histogram(n, rng);
    const Histogram q = random_histogram(m, rng);
    const SinkhornResult sk = sinkhorn_solve(CostMatrix{c, CostKind::SquaredEuclidean}, p, q, s);
    const Matrix gamma = sk.converged ? sk.gamma : round_to_polytope(sk.gamma, p, q);
    const GwEquivalenceReport r = gw_equivalence(x, y, gamma, tol);
    report.quartic_checked += r.used_quartic_oracle;
    report.max_abs_diff = std::max(report.max_abs_diff, r.abs_diff);
  }
  report.passed = report.max_abs_diff <= tol;
  return report;
}

ProcrustesSuiteReport run_procrustes_suite(int instances, int maps_per_instance, std::uint64_t seed,
                                           double value_tol, double margin_tol) {
  if (instances < 1 || maps_per_instance < 0) throw InvalidInput("bad suite size");
  const std::array<Index, 3> dims{2, 3, 5};
  const std::array<NormOrder, 5> orders{NormOrder::finite(1.0), NormOrder::finite(1.5),
                                        NormOrder::finite(2.0), NormOrder::finite(4.0),
                                        NormOrder::infinity()};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ProcrustesSuiteReport report;
  report.instances = instances;
  report.maps_per_instance = maps_per_instance;
  report.worst_margin = std::numeric_limits<double>::infinity();
  bool ok = true;

  for (int t = 0; t < instances; ++t) {
    const Index d = dims[static_cast<std::size_t>(t) % dims.size()];
    Matrix m(d, d);
    for (Index j = 0; j < d; ++j)
      for (Index i = 0; i < d; ++i) m(i, j) = normal(rng);
    const Eigen::JacobiSVD<Matrix> oracle(m);
    const Vector sigma = oracle.singularValues();

    for (const NormOrder& p : orders) {
      const double k = 0.5 + 2.0 * unit(rng);
      const InvarianceBall ball(p, k, d);
      const SpectralSolution sol = optimal_map_in_ball(m, ball);
      const double attained = sol.map.matrix().cwiseProduct(m).sum();
      const double expected = k * dual_value(sigma, p);
      const double rel = std::abs(attained - expected) / std::max(expected, 1e-300);
      report.max_value_rel_error = std::max(report.max_value_rel_error, rel);
      ok = ok && rel <= value_tol;

      const Eigen::JacobiSVD<Matrix> check(sol.map.matrix());
      const double violation = std::max(0.0, ball_norm(check.singularValues(), p) / k - 1.0);
      report.max_ball_violation = std::max(report.max_ball_violation, violation);
      ok = ok && violation <= 1e-8;

      for (int r = 0; r < maps_per_instance; ++r) {
        Matrix g(d, d);
        for (Index j = 0; j < d; ++j)
          for (Index i = 0; i < d; ++i) g(i, j) = normal(rng);
        const Eigen::JacobiSVD<Matrix> gs(g);
        // Scale onto the ball, then shrink uniformly into its interior.
        const double scale = k * unit(rng) / ball_norm(gs.singularValues(), p);
        const double value = scale * g.cwiseProduct(m).sum();
        const double margin = (attained - value) / std::max(expected, 1.0);
        report.worst_margin = std::min(report.worst_margin, margin);
        ok = ok && margin >= -margin_tol;
      }
    }
  }
  if (maps_per_instance == 0) report.worst_margin = 0.0;
  report.passed = ok;
  return report;
}

}  // namespace invot
