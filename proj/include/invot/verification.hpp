#pragma once

#include "invot/core.hpp"

#include <cstdint>

namespace invot {

struct GwSuiteReport {
  int trials = 0;
  int quartic_checked = 0;  // trials small enough for the quadruple loop
  double max_abs_diff = 0.0;
  double tol = 0.0;
  bool passed = false;
};

/// Random unit-column instances (d <= 10, n, m <= 30) with couplings from
/// Sinkhorn on random costs; compares the GW cross term with |X Gamma Y^T|_F^2.
GwSuiteReport run_gw_suite(int trials, std::uint64_t seed, double tol = 1e-9);

struct ProcrustesSuiteReport {
  int instances = 0;
  int maps_per_instance = 0;
  double max_value_rel_error = 0.0;  // |<P,M> - k |sigma|_q| / (k |sigma|_q)
  double max_ball_violation = 0.0;   // |P|_p / k - 1, clipped at 0
  double worst_margin = 0.0;         // min over trials of <P*,M> - <P,M>, relative
  bool passed = false;
};

/// For each instance M (d cycling through 2, 3, 5) and each p in
/// {1, 1.5, 2, 4, inf}: the closed-form maximizer must reach the dual-norm value
/// (singular values from an independent Jacobi SVD) and beat random feasible maps.
ProcrustesSuiteReport run_procrustes_suite(int instances, int maps_per_instance, std::uint64_t seed,
                                           double value_tol = 1e-8, double margin_tol = 1e-9);

}  // namespace invot
