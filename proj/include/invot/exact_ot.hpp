#pragma once

#include "invot/core.hpp"
#include "invot/sinkhorn.hpp"

#include <vector>

namespace invot {

inline constexpr Index kExactSmallMaxCells = 64;

/// Globally optimal coupling of the unregularized problem min <Gamma, C> for
/// test-scale instances (n*m <= 64). Square uniform instances enumerate
/// permutation couplings; everything else runs successive shortest paths.
Coupling exact_ot_small(const CostMatrix& c, const Histogram& p, const Histogram& q);

/// Minimum-cost perfect matching for a square cost matrix (Hungarian method,
/// O(n^3)). Returns assignment[i] = column matched to row i.
std::vector<Index> exact_assignment(const Matrix& cost);

/// Permutation coupling with uniform marginals: Gamma(i, assignment[i]) = 1/n.
Coupling permutation_coupling(const std::vector<Index>& assignment);

}  // namespace invot
