#include "invot/gromov.hpp"
#include "invot/sinkhorn.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace invot;

namespace {

Matrix unit_columns(Index d, Index n, std::mt19937_64& rng) {
  Matrix m = oracle::gaussian(d, n, rng);
  m.colwise().normalize();
  return m;
}

// Quadruple loop written independently of the library.
double naive_gw(const Matrix& cx, const Matrix& cy, const Matrix& g) {
  double s = 0.0;
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < g.cols(); ++j)
      for (Index k = 0; k < g.rows(); ++k)
        for (Index l = 0; l < g.cols(); ++l) s += 0.5 * std::pow(cx(i, k) - cy(j, l), 2) * g(i, j) * g(k, l);
  return s;
}

double naive_frobenius(const Matrix& x, const Matrix& y, const Matrix& g) {
  double s = 0.0;
  for (Index a = 0; a < x.rows(); ++a)
    for (Index b = 0; b < y.rows(); ++b) {
      double e = 0.0;
      for (Index i = 0; i < g.rows(); ++i)
        for (Index j = 0; j < g.cols(); ++j) e += x(a, i) * g(i, j) * y(b, j);
      s += e * e;
    }
  return s;
}

Matrix sinkhorn_plan(Index n, Index m, std::mt19937_64& rng) {
  SinkhornSettings s;
  s.lambda = 0.1;
  return sinkhorn_solve(CostMatrix{oracle::uniform01(n, m, rng), CostKind::SquaredEuclidean},
                        Histogram(oracle::random_simplex(n, rng)), Histogram(oracle::random_simplex(m, rng)), s)
      .gamma;
}

}  // namespace

TEST_CASE("gw objective examples") {
  std::mt19937_64 rng(60);
  const Matrix x = unit_columns(3, 5, rng);
  const GwInstance same = GwInstance::from_unit_columns(x, x, Histogram::uniform(5), Histogram::uniform(5));
  const Matrix diag = Matrix::Identity(5, 5) / 5.0;
  CHECK(std::abs(gw_objective(same, diag)) <= 1e-12);
  CHECK(std::abs(gw_objective_quartic(same, diag)) <= 1e-12);

  Matrix one = Matrix::Ones(2, 1);
  one.colwise().normalize();
  const GwInstance single = GwInstance::from_unit_columns(one, one, Histogram::uniform(1), Histogram::uniform(1));
  CHECK(gw_objective(single, Matrix::Ones(1, 1)) == 0.0);

  const Matrix a = unit_columns(3, 4, rng), b = unit_columns(3, 5, rng);
  const GwInstance inst = GwInstance::from_unit_columns(a, b, Histogram::uniform(4), Histogram::uniform(5));
  const Matrix g = oracle::uniform01(4, 5, rng) / 10.0;
  const double naive = naive_gw(inst.cx, inst.cy, g);
  CHECK(std::abs(gw_objective(inst, g) - naive) <= 1e-10);
  CHECK(std::abs(gw_objective_quartic(inst, g) - naive) <= 1e-10);
}

TEST_CASE("gw instances validate their similarity matrices") {
  std::mt19937_64 rng(61);
  CHECK_THROWS_AS(GwInstance::from_unit_columns(oracle::gaussian(3, 4, rng), unit_columns(3, 4, rng),
                                                Histogram::uniform(4), Histogram::uniform(4)),
                  InvalidInput);
  GwInstance inst = GwInstance::from_unit_columns(unit_columns(3, 4, rng), unit_columns(3, 4, rng),
                                                  Histogram::uniform(4), Histogram::uniform(4));
  inst.cx(0, 1) += 1e-3;
  CHECK_THROWS_AS(inst.validate(), InvalidInput);
  inst.cx(0, 1) = inst.cx(1, 0);
  inst.cy(2, 2) = 0.5;
  CHECK_THROWS_AS(inst.validate(), InvalidInput);
  inst.cy(2, 2) = 1.0;
  CHECK_NOTHROW(inst.validate());
  CHECK_THROWS_AS(gw_objective(inst, Matrix::Zero(3, 4)), InvalidInput);
  CHECK_THROWS_AS(gw_objective_quartic(inst, Matrix::Zero(30, 30)), InvalidInput);
}

TEST_CASE("frobenius objective") {
  const Matrix eye = Matrix::Identity(4, 4);
  CHECK(frobenius_objective(eye, eye, eye / 4.0) == doctest::Approx(0.25).epsilon(1e-14));

  std::mt19937_64 rng(62);
  const Matrix x = unit_columns(3, 6, rng), y = unit_columns(3, 8, rng);
  const Vector p = oracle::random_simplex(6, rng), q = oracle::random_simplex(8, rng);
  const Matrix prod = p * q.transpose();
  CHECK(frobenius_objective(x, y, prod) ==
        doctest::Approx((x * p).squaredNorm() * (y * q).squaredNorm()).epsilon(1e-12));
  const Matrix g = oracle::uniform01(6, 8, rng);
  CHECK(std::abs(frobenius_objective(x, y, g) - naive_frobenius(x, y, g)) <= 1e-10);
  CHECK_THROWS_AS(frobenius_objective(2.0 * x, y, g), InvalidInput);
}

TEST_CASE("equivalence examples") {
  std::mt19937_64 rng(63);
  const Matrix x = unit_columns(3, 6, rng), y = unit_columns(3, 8, rng);
  const Vector p = oracle::random_simplex(6, rng), q = oracle::random_simplex(8, rng);
  const GwEquivalenceReport prod = gw_equivalence(x, y, p * q.transpose());
  CHECK(prod.used_quartic_oracle);
  CHECK(prod.abs_diff <= 1e-10);
  CHECK(prod.equal);

  Matrix perm = Matrix::Zero(6, 6);
  for (Index i = 0; i < 6; ++i) perm(i, (i + 2) % 6) = 1.0 / 6.0;
  const GwEquivalenceReport same = gw_equivalence(x, x, perm);
  CHECK(same.abs_diff <= 1e-12);
  CHECK(same.frobenius_value == doctest::Approx((x * perm * x.transpose()).squaredNorm()).epsilon(1e-12));

  // Above the cell limit the factored cross term is used.
  const Matrix big_x = unit_columns(4, 30, rng), big_y = unit_columns(4, 20, rng);
  const GwEquivalenceReport big = gw_equivalence(big_x, big_y, sinkhorn_plan(30, 20, rng));
  CHECK_FALSE(big.used_quartic_oracle);
  CHECK(big.abs_diff <= 1e-9);
}

TEST_CASE("property: equivalence on random Sinkhorn plans") {
  std::mt19937_64 rng(64);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Index d = 1 + t % 10, n = 1 + (t * 7) % 20, m = 1 + (t * 3) % 20;
    const GwEquivalenceReport r = gw_equivalence(unit_columns(d, n, rng), unit_columns(d, m, rng), sinkhorn_plan(n, m, rng));
    worst = std::max(worst, r.abs_diff);
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("property: gw objective is nonnegative and splits into constant and cross terms") {
  std::mt19937_64 rng(65);
  for (int t = 0; t < 40; ++t) {
    const Index d = 2 + t % 4, n = 2 + t % 7, m = 2 + (t * 3) % 6;
    const Matrix x = unit_columns(d, n, rng), y = unit_columns(d, m, rng);
    const Matrix g = sinkhorn_plan(n, m, rng);
    const GwInstance inst = GwInstance::from_unit_columns(x, y, Histogram(Vector(g.rowwise().sum())),
                                                          Histogram(Vector(g.colwise().sum().transpose())));
    const double gw = gw_objective(inst, g);
    CHECK(gw >= 0.0);
    CHECK(std::abs(gw - naive_gw(inst.cx, inst.cy, g)) <= 1e-10);
    const GwEquivalenceReport r = gw_equivalence(x, y, g);
    CHECK(std::abs(r.constant_half_loss - r.gw_cross_term - gw) <= 1e-10);
    // The unhalved loss doubles every term.
    CHECK(std::abs(r.constant_full_loss - 2.0 * r.gw_cross_term - 2.0 * gw) <= 1e-10);
  }
}

TEST_CASE("property: the best candidate is the same under both objectives") {
  std::mt19937_64 rng(66);
  for (int t = 0; t < 30; ++t) {
    const Index n = 5;
    const Matrix x = unit_columns(3, n, rng), y = unit_columns(3, n, rng);
    const GwInstance inst = GwInstance::from_unit_columns(x, y, Histogram::uniform(n), Histogram::uniform(n));
    std::vector<Matrix> candidates;
    std::vector<Index> perm{0, 1, 2, 3, 4};
    do {
      Matrix g = Matrix::Zero(n, n);
      for (Index i = 0; i < n; ++i) g(i, perm[static_cast<std::size_t>(i)]) = 1.0 / n;
      candidates.push_back(g);
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (int r = 0; r < 10; ++r) {
      SinkhornSettings s;
      s.lambda = 0.05 + 0.1 * r;
      candidates.push_back(sinkhorn_solve(CostMatrix{oracle::uniform01(n, n, rng), CostKind::SquaredEuclidean},
                                          Histogram::uniform(n), Histogram::uniform(n), s)
                               .gamma);
    }
    std::size_t best_gw = 0, best_fro = 0;
    for (std::size_t c = 1; c < candidates.size(); ++c) {
      if (gw_objective(inst, candidates[c]) < gw_objective(inst, candidates[best_gw])) best_gw = c;
      if (frobenius_objective(x, y, candidates[c]) > frobenius_objective(x, y, candidates[best_fro])) best_fro = c;
    }
    const double gap = std::abs(gw_objective(inst, candidates[best_gw]) - gw_objective(inst, candidates[best_fro]));
    // Distinct winners are acceptable only on numerical ties.
    CHECK((best_gw == best_fro || gap <= 1e-12));
  }
}
