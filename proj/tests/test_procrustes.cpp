#include "invot/procrustes.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace invot;

namespace {

Matrix diag43() {
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 4;
  m(1, 1) = 3;
  return m;
}

// Projected gradient ascent of <P, M> over the Frobenius ball of radius k.
Matrix frobenius_ball_ascent(const Matrix& m, double k) {
  Matrix p = Matrix::Zero(m.rows(), m.cols());
  for (int it = 0; it < 2000; ++it) {
    p += 0.05 * m;
    const double n = p.norm();
    if (n > k) p *= k / n;
  }
  return p;
}

// Best rank-one extreme point k u v^T of the 2x2 nuclear ball, by grid search
// over the angles of u and v with two rounds of local refinement.
double nuclear_ball_search(const Matrix& m, double k) {
  auto value = [&](double a, double b) {
    Vector u(2), v(2);
    u << std::cos(a), std::sin(a);
    v << std::cos(b), std::sin(b);
    return k * u.dot(m * v);
  };
  double best = -1e300, ba = 0.0, bb = 0.0;
  double lo_a = 0.0, lo_b = 0.0, span = 2.0 * M_PI;
  for (int round = 0; round < 3; ++round) {
    const int steps = 600;
    for (int i = 0; i < steps; ++i)
      for (int j = 0; j < steps; ++j) {
        const double a = lo_a + span * i / steps, b = lo_b + span * j / steps;
        const double v = value(a, b);
        if (v > best) {
          best = v;
          ba = a;
          bb = b;
        }
      }
    span /= 50.0;
    lo_a = ba - span / 2;
    lo_b = bb - span / 2;
  }
  return best;
}

std::vector<NormOrder> test_orders() {
  return {NormOrder::finite(1.0), NormOrder::finite(1.5), NormOrder::finite(2.0), NormOrder::finite(4.0),
          NormOrder::infinity()};
}

}  // namespace

TEST_CASE("optimal map examples") {
  const SpectralSolution eye = optimal_map_in_ball(Matrix::Identity(3, 3), InvarianceBall(NormOrder::infinity(), 1.0, 3));
  CHECK((eye.map.matrix() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(eye.optimal_value == doctest::Approx(3.0).epsilon(1e-12));

  const double r2 = std::sqrt(2.0);
  const SpectralSolution fro = optimal_map_in_ball(diag43(), InvarianceBall(NormOrder::finite(2.0), r2, 2));
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 4 * r2 / 5;
  expected(1, 1) = 3 * r2 / 5;
  CHECK((fro.map.matrix() - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(fro.optimal_value == doctest::Approx(5 * r2).epsilon(1e-12));
  const Matrix ascent = frobenius_ball_ascent(diag43(), r2);
  CHECK((ascent - fro.map.matrix()).cwiseAbs().maxCoeff() <= 1e-5);
  CHECK(std::abs(oracle::inner(ascent, diag43()) - 7.0710678) <= 1e-5);

  const SpectralSolution nuc = optimal_map_in_ball(diag43(), InvarianceBall(NormOrder::finite(1.0), 2.0, 2));
  expected.setZero();
  expected(0, 0) = 2;
  CHECK((nuc.map.matrix() - expected).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(nuc.optimal_value == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(std::abs(nuclear_ball_search(diag43(), 2.0) - 8.0) <= 1e-5);
}

TEST_CASE("p = 1 ties put all mass on the first index") {
  const SpectralSolution s = optimal_map_in_ball(Matrix::Identity(3, 3), InvarianceBall(NormOrder::finite(1.0), 1.0, 3));
  CHECK(s.spectrum[0] == doctest::Approx(1.0));
  CHECK(s.spectrum.tail(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.optimal_value == doctest::Approx(1.0));
  // Orders just above 1 take the same branch.
  const SpectralSolution near = optimal_map_in_ball(diag43(), InvarianceBall(NormOrder::finite(1.0 + 1e-8), 2.0, 2));
  CHECK(near.spectrum[1] == 0.0);
  CHECK(near.map.matrix().allFinite());
}

TEST_CASE("zero input is degenerate") {
  const InvarianceBall ball(NormOrder::finite(2.0), 3);
  const SpectralSolution s = optimal_map_in_ball(Matrix::Zero(3, 3), ball);
  CHECK(s.degenerate);
  CHECK(s.optimal_value == 0.0);
  CHECK(schatten_norm(s.map.matrix(), ball.order()) <= ball.radius() * (1 + 1e-12));
}

TEST_CASE("optimal map rejects bad input") {
  Matrix bad = Matrix::Identity(2, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(optimal_map_in_ball(bad, InvarianceBall(NormOrder::infinity(), 2)), InvalidInput);
  CHECK_THROWS_AS(optimal_map_in_ball(Matrix::Identity(2, 2), InvarianceBall(NormOrder::infinity(), 3)),
                  InvalidInput);
  CHECK_THROWS_AS(optimal_map_in_ball(Matrix::Zero(2, 3), InvarianceBall(NormOrder::infinity(), 2)), InvalidInput);
}

TEST_CASE("random feasible maps") {
  const LinearMap a = random_feasible_map(3, InvarianceBall(NormOrder::infinity(), 1.0, 3), 0);
  CHECK(oracle::singular_values(a.matrix()).maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  const LinearMap b = random_feasible_map(3, InvarianceBall(NormOrder::finite(2.0), std::sqrt(3.0), 3), 0);
  CHECK(b.matrix().norm() == doctest::Approx(std::sqrt(3.0)).epsilon(1e-12));
  const LinearMap c = random_feasible_map(3, InvarianceBall(NormOrder::finite(2.0), std::sqrt(3.0), 3), 0);
  CHECK(b.matrix() == c.matrix());
  const LinearMap e = random_feasible_map(3, InvarianceBall(NormOrder::finite(2.0), std::sqrt(3.0), 3), 1);
  CHECK(b.matrix() != e.matrix());

  const Matrix r = random_orthogonal(4, 9);
  CHECK((r.transpose() * r - Matrix::Identity(4, 4)).norm() <= 1e-12);
  CHECK(r == random_orthogonal(4, 9));
}

TEST_CASE("dual norm values") {
  Vector s(2);
  s << 4, 3;
  CHECK(dual_norm_value(s, NormOrder::infinity()) == doctest::Approx(7.0));
  CHECK(dual_norm_value(s, NormOrder::finite(1.0)) == doctest::Approx(4.0));
  CHECK(dual_norm_value(s, NormOrder::finite(2.0)) == doctest::Approx(5.0));
  CHECK(dual_norm_value(s, NormOrder::finite(4.0)) == doctest::Approx(oracle::vec_norm(s, 4.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("property: certificate and feasibility") {
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> radius(0.5, 2.5);
  for (int t = 0; t < 60; ++t) {
    const Index d = 2 + t % 4;
    const Matrix m = oracle::gaussian(d, d, rng);
    const Vector sigma = oracle::singular_values(m);
    for (const NormOrder& p : test_orders()) {
      const double k = radius(rng);
      const SpectralSolution s = optimal_map_in_ball(m, InvarianceBall(p, k, d));
      const double q = p.is_infinite() ? 1.0 : p.is_one() ? INFINITY : p.value() / (p.value() - 1.0);
      const double value = k * oracle::vec_norm(sigma, q);
      CHECK(std::abs(oracle::inner(s.map.matrix(), m) - value) <= 1e-8 * value);
      CHECK(std::abs(s.optimal_value - value) <= 1e-8 * value);
      const double pn = p.is_infinite() ? INFINITY : p.value();
      CHECK(oracle::schatten(s.map.matrix(), pn) <= k * (1 + 1e-8));
      CHECK(std::abs(s.spectrum.dot(s.singular_values) - value) <= 1e-8 * value);
    }
  }
}

TEST_CASE("property: no random feasible map beats the optimum") {
  std::uint64_t seed = 1000;
  std::mt19937_64 rng(31);
  for (Index d = 2; d <= 5; ++d) {
    const Matrix m = oracle::gaussian(d, d, rng);
    for (const NormOrder& p : test_orders()) {
      const InvarianceBall ball(p, d);
      const double best = optimal_map_in_ball(m, ball).optimal_value;
      for (int r = 0; r < 1000; ++r) {
        const LinearMap q = random_feasible_map(d, ball, seed++);
        CHECK(oracle::inner(q.matrix(), m) <= best + 1e-9);
      }
    }
  }
}

TEST_CASE("property: infinity-ball solutions are scaled orthogonal") {
  std::mt19937_64 rng(32);
  for (int t = 0; t < 30; ++t) {
    const Index d = 1 + t % 6;
    const double k = 0.5 + t * 0.1;
    const Matrix p = optimal_map_in_ball(oracle::gaussian(d, d, rng), InvarianceBall(NormOrder::infinity(), k, d)).map.matrix() / k;
    CHECK((p.transpose() * p - Matrix::Identity(d, d)).norm() <= 1e-8);
  }
}

TEST_CASE("property: unitary equivariance") {
  std::mt19937_64 rng(33);
  for (int t = 0; t < 30; ++t) {
    const Index d = 2 + t % 4;
    const Matrix m = oracle::gaussian(d, d, rng);
    const Matrix r1 = oracle::rotation(d, rng), r2 = oracle::rotation(d, rng);
    for (const NormOrder& p : test_orders()) {
      const InvarianceBall ball(p, d);
      const Matrix a = optimal_map_in_ball(r1 * m * r2, ball).map.matrix();
      const Matrix b = r1 * optimal_map_in_ball(m, ball).map.matrix() * r2;
      CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-8);
    }
  }
}
