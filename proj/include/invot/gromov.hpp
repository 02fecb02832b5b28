#pragma once

#include "invot/core.hpp"

namespace invot {

/// Intra-space cosine similarity matrices with their histograms.
struct GwInstance {
  Matrix cx;  // n x n
  Matrix cy;  // m x m
  Histogram p;
  Histogram q;

  /// Cx = X^T X, Cy = Y^T Y for unit-norm columns.
  static GwInstance from_unit_columns(const Matrix& x, const Matrix& y, Histogram p, Histogram q);
  void validate() const;
};

inline constexpr Index kQuarticOracleMaxCells = 400;
inline constexpr double kUnitColumnTol = 1e-8;

/// sum_{ijkl} 1/2 (Cx_ik - Cy_jl)^2 Gamma_ij Gamma_kl, through the factored form
/// 1/2 (r^T (Cx.Cx) r + c^T (Cy.Cy) c) - <Cx Gamma, Gamma Cy>, where r, c are the
/// realized marginals of Gamma.
double gw_objective(const GwInstance& inst, const Matrix& gamma);

/// The same sum evaluated by four nested loops; n*m <= kQuarticOracleMaxCells.
double gw_objective_quartic(const GwInstance& inst, const Matrix& gamma);

/// sum_{ijkl} Cx_ik Cy_jl Gamma_ij Gamma_kl = <Cx Gamma, Gamma Cy>.
double gw_cross_term(const Matrix& cx, const Matrix& cy, const Matrix& gamma);

/// Quadruple-loop version of gw_cross_term.
double gw_cross_term_quartic(const Matrix& cx, const Matrix& cy, const Matrix& gamma);

/// |X Gamma Y^T|_F^2; X and Y must have unit columns.
double frobenius_objective(const Matrix& x, const Matrix& y, const Matrix& gamma);

struct GwEquivalenceReport {
  double gw_cross_term = 0.0;
  double frobenius_value = 0.0;
  double abs_diff = 0.0;
  /// Gamma-independent part of the GW objective with L = 1/2 |a-b|^2 ...
  double constant_half_loss = 0.0;
  /// ... and with L = |a-b|^2.
  double constant_full_loss = 0.0;
  bool used_quartic_oracle = false;
  bool equal = false;
};

/// Checks that the Gamma-dependent GW term equals |X Gamma Y^T|_F^2. The cross
/// term goes through the quadruple loop whenever n*m <= kQuarticOracleMaxCells.
GwEquivalenceReport gw_equivalence(const Matrix& x, const Matrix& y, const Matrix& gamma,
                                double tol = 1e-9);

}  // namespace invot
