#include "invot/gromov.hpp"

#include <cmath>
#include <string>

namespace invot {

namespace {

void require_unit_columns(const Matrix& m, const char* what) {
  for (Index j = 0; j < m.cols(); ++j) {
    if (std::abs(m.col(j).norm() - 1.0) > kUnitColumnTol) {
      throw InvalidInput(std::string(what) + " column " + std::to_string(j) + " is not unit-norm");
    }
  }
}

void require_gamma_shape(const Matrix& cx, const Matrix& cy, const Matrix& gamma) {
  if (gamma.rows() != cx.rows() || gamma.cols() != cy.rows()) {
    throw InvalidInput("coupling is " + std::to_string(gamma.rows()) + "x" +
                       std::to_string(gamma.cols()) + " but similarity matrices are " +
                       std::to_string(cx.rows()) + " and " + std::to_string(cy.rows()));
  }
}

void check_similarity(const Matrix& c, const char* what) {
  constexpr double slack = 1e-10;
  if (c.rows() != c.cols()) throw InvalidInput(std::string(what) + " must be square");
  require_finite(c, what);
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > slack) {
    throw InvalidInput(std::string(what) + " is not symmetric");
  }
  if (c.cwiseAbs().maxCoeff() > 1.0 + slack) {
    throw InvalidInput(std::string(what) + " has entries outside [-1, 1]");
  }
  if ((c.diagonal().array() - 1.0).abs().maxCoeff() > slack) {
    throw InvalidInput(std::string(what) + " does not have a unit diagonal");
  }
}

}  // namespace

GwInstance GwInstance::from_unit_columns(const Matrix& x, const Matrix& y, Histogram p,
                                         Histogram q) {
  require_unit_columns(x, "X");
  require_unit_columns(y, "Y");
  GwInstance inst{x.transpose() * x, y.transpose() * y, std::move(p), std::move(q)};
  // Rounding can push |cos| a hair past 1 and break exact symmetry.
  inst.cx = (0.5 * (inst.cx + inst.cx.transpose())).cwiseMax(-1.0).cwiseMin(1.0);
  inst.cy = (0.5 * (inst.cy + inst.cy.transpose())).cwiseMax(-1.0).cwiseMin(1.0);
  inst.cx.diagonal().setOnes();
  inst.cy.diagonal().setOnes();
  inst.validate();
  return inst;
}

void GwInstance::validate() const {
  check_similarity(cx, "Cx");
  check_similarity(cy, "Cy");
  if (p.size() != cx.rows() || q.size() != cy.rows()) {
    throw InvalidInput("histogram lengths do not match similarity matrices");
  }
}

double gw_cross_term(const Matrix& cx, const Matrix& cy, const Matrix& gamma) {
  require_gamma_shape(cx, cy, gamma);
  return (cx * gamma).cwiseProduct(gamma * cy).sum();
}

double gw_cross_term_quartic(const Matrix& cx, const Matrix& cy, const Matrix& gamma) {
  require_gamma_shape(cx, cy, gamma);
  const Index n = gamma.rows();
  const Index m = gamma.cols();
  if (n * m > kQuarticOracleMaxCells) throw InvalidInput("quartic oracle limited to 400 cells");
  double total = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      for (Index k = 0; k < n; ++k)
        for (Index l = 0; l < m; ++l) total += cx(i, k) * cy(j, l) * gamma(i, j) * gamma(k, l);
  return total;
}

double gw_objective(const GwInstance& inst, const Matrix& gamma) {
  require_gamma_shape(inst.cx, inst.cy, gamma);
  const Vector r = gamma.rowwise().sum();
  const Vector c = gamma.colwise().sum().transpose();
  const double constant =
      0.5 * (r.dot(inst.cx.cwiseAbs2() * r) + c.dot(inst.cy.cwiseAbs2() * c));
  return constant - gw_cross_term(inst.cx, inst.cy, gamma);
}

double gw_objective_quartic(const GwInstance& inst, const Matrix& gamma) {
  require_gamma_shape(inst.cx, inst.cy, gamma);
  const Index n = gamma.rows();
  const Index m = gamma.cols();
  if (n * m > kQuarticOracleMaxCells) throw InvalidInput("quartic oracle limited to 400 cells");
  double total = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < m; ++j)
      for (Index k = 0; k < n; ++k)
        for (Index l = 0; l < m; ++l) {
          const double diff = inst.cx(i, k) - inst.cy(j, l);
          total += 0.5 * diff * diff * gamma(i, j) * gamma(k, l);
        }
  return total;
}

double frobenius_objective(const Matrix& x, const Matrix& y, const Matrix& gamma) {
  require_unit_columns(x, "X");
  require_unit_columns(y, "Y");
  if (x.rows() != y.rows() || gamma.rows() != x.cols() || gamma.cols() != y.cols()) {
    throw InvalidInput("frobenius_objective: inconsistent shapes");
  }
  return (x * gamma * y.transpose()).squaredNorm();
}

GwEquivalenceReport gw_equivalence(const Matrix& x, const Matrix& y, const Matrix& gamma,
                                double tol) {
  const Matrix cx = x.transpose() * x;
  const Matrix cy = y.transpose() * y;
  GwEquivalenceReport report;
  report.used_quartic_oracle = gamma.rows() * gamma.cols() <= kQuarticOracleMaxCells;
  report.gw_cross_term = report.used_quartic_oracle ? gw_cross_term_quartic(cx, cy, gamma)
                                                    : gw_cross_term(cx, cy, gamma);
  report.frobenius_value = frobenius_objective(x, y, gamma);
  report.abs_diff = std::abs(report.gw_cross_term - report.frobenius_value);
  const Vector r = gamma.rowwise().sum();
  const Vector c = gamma.colwise().sum().transpose();
  const double squares = r.dot(cx.cwiseAbs2() * r) + c.dot(cy.cwiseAbs2() * c);
  report.constant_half_loss = 0.5 * squares;
  report.constant_full_loss = squares;
  report.equal = report.abs_diff <= tol;
  return report;
}

}  // namespace invot
