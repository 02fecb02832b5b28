#pragma once

#include "invot/core.hpp"
#include "invot/invariant_ot.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace invot {

struct SyntheticInstance {
  PointSet source;
  PointSet target;
  LinearMap planted_map;
  /// target column planted_matching[i] is the image of source column i.
  std::vector<Index> planted_matching;
  double noise_sigma = 0.0;
  Matrix noise;  // d x n, in target column order
};

/// Standard normal source cloud, planted map from `family` (the orthogonal factor
/// of a Gaussian matrix for p = inf), uniform random matching, per-entry
/// Gaussian noise of standard deviation sigma. Cloud, map, matching and noise
/// come from separate streams, so identity_map only swaps the map.
SyntheticInstance generate_instance(Index d, Index n, const InvarianceBall& family, double sigma,
                                    std::uint64_t seed, bool identity_map = false);

/// psi[i] = first column index attaining the maximum of row i.
std::vector<Index> extract_matching(const Matrix& gamma);
inline std::vector<Index> extract_matching(const Coupling& gamma) {
  return extract_matching(gamma.gamma());
}

double matching_accuracy(const std::vector<Index>& psi, const std::vector<Index>& truth);

/// |estimated - planted|_F / |planted|_F.
double map_recovery_error(const Matrix& estimated, const Matrix& planted);
inline double map_recovery_error(const LinearMap& estimated, const LinearMap& planted) {
  return map_recovery_error(estimated.matrix(), planted.matrix());
}

enum class MethodKind { Emd, Sinkhorn, InvariantOT, Oracle };

struct Method {
  MethodKind kind = MethodKind::InvariantOT;
  NormOrder p = NormOrder::infinity();  // InvariantOT only

  /// "emd", "sinkhorn", "oracle", "invariant" (order = default_p) or "invariant:<p>".
  static Method parse(const std::string& text, const NormOrder& default_p);
  std::string name() const;
};

struct SweepConfig {
  Index d = 3;
  Index n = 100;
  NormOrder family = NormOrder::infinity();
  std::vector<double> sigmas{0.0};
  std::vector<Method> methods{Method{}};
  int repetitions = 5;
  std::uint64_t seed = 0;
  /// Template for the invariant solves; ball, enforcement and seed are set per cell.
  double lambda0 = 1.0;
  double decay = 0.95;
  double lambda_min = 1e-3;
  int outer_max_iters = 300;
  double outer_tol = 1e-6;
  int restarts = 1;
  /// Ball radius for InvariantOT; the default radius of each order when unset.
  std::optional<double> radius;
  /// Regularization of the Sinkhorn and Oracle baselines.
  double baseline_lambda = 1e-3;

  void validate() const;
};

struct SweepRow {
  std::string method;
  std::string p_family;
  Index sigma_index = 0;
  double sigma = 0.0;
  int repetition = 0;
  double accuracy = 0.0;
  double map_error = 0.0;
  double runtime_ms = 0.0;
};

struct SweepCell {
  std::string method;
  double sigma = 0.0;
  int repetitions = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // sample standard deviation, 0 for one repetition
  double map_error_mean = 0.0;
  double map_error_std = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::vector<SweepCell> cells;  // sigma-major, then method order
};

using SweepRowCallback = std::function<void(const SweepRow&)>;
/// Receives solver iterations of InvariantOT cells with the row they belong to
/// (accuracy and timing not yet filled in).
using SweepTraceCallback = std::function<void(const SweepRow&, const TraceRecord&)>;

/// Instance seeds depend on (seed, repetition) only, so every sigma and method
/// sees the same cloud, map and matching; solver seeds depend on
/// (seed, sigma index, method index, repetition).
SweepReport run_noise_sweep(const SweepConfig& cfg, const SweepRowCallback& on_row = {},
                            const SweepTraceCallback& on_trace = {});

/// Solves one instance with one method and scores it.
SweepRow run_method(const SyntheticInstance& inst, const Method& method, const SweepConfig& cfg,
                    std::uint64_t solver_seed, const TraceCallback& on_iteration = {});

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                       std::uint64_t c = 0);

void write_sweep_csv_header(std::ostream& os);
void write_sweep_csv_row(std::ostream& os, const SweepRow& row);

}  // namespace invot
