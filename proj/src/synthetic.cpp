#include "invot/synthetic.hpp"

#include "invot/exact_ot.hpp"
#include "invot/procrustes.hpp"
#include "invot/sinkhorn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

namespace invot {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

double stddev(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix(base);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  return splitmix(h ^ c);
}

SyntheticInstance generate_instance(Index d, Index n, const InvarianceBall& family, double sigma,
                                    std::uint64_t seed, bool identity_map) {
  if (d < 1) throw InvalidInput("d must be >= 1");
  if (n < 2) throw InvalidInput("n must be >= 2");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidInput("sigma must be finite and >= 0");
  if (family.dim() != d) throw InvalidInput("family dimension differs from d");

  std::mt19937_64 cloud_rng(mix_seed(seed, 1));
  std::mt19937_64 match_rng(mix_seed(seed, 3));
  std::mt19937_64 noise_rng(mix_seed(seed, 4));

  Matrix source = gaussian_matrix(d, n, cloud_rng);

  Matrix planted;
  if (identity_map) {
    planted = Matrix::Identity(d, d);
  } else if (family.order().is_infinite()) {
    planted = random_orthogonal(d, mix_seed(seed, 2));
  } else {
    planted = random_feasible_map(d, family, mix_seed(seed, 2)).matrix();
  }
  // The identity sits in every default ball but not necessarily in a shrunken one.
  const InvarianceBall planted_ball =
      identity_map ? InvarianceBall(family.order(),
                                    std::max(family.radius(), lp_norm(Vector::Ones(d), family.order())), d)
                   : family;

  std::vector<Index> matching(static_cast<std::size_t>(n));
  std::iota(matching.begin(), matching.end(), Index{0});
  std::shuffle(matching.begin(), matching.end(), match_rng);

  Matrix noise = sigma > 0.0 ? gaussian_matrix(d, n, noise_rng, sigma) : Matrix::Zero(d, n);
  Matrix target(d, n);
  const Matrix mapped = planted * source;
  for (Index i = 0; i < n; ++i) {
    const Index j = matching[static_cast<std::size_t>(i)];
    target.col(j) = mapped.col(i) + noise.col(j);
  }

  return SyntheticInstance{PointSet(std::move(source)), PointSet(std::move(target)),
                           LinearMap(std::move(planted), planted_ball), std::move(matching), sigma,
                           std::move(noise)};
}

std::vector<Index> extract_matching(const Matrix& gamma) {
  std::vector<Index> psi(static_cast<std::size_t>(gamma.rows()));
  for (Index i = 0; i < gamma.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < gamma.cols(); ++j) {
      if (gamma(i, j) > gamma(i, best)) best = j;
    }
    psi[static_cast<std::size_t>(i)] = best;
  }
  return psi;
}

double matching_accuracy(const std::vector<Index>& psi, const std::vector<Index>& truth) {
  if (psi.size() != truth.size()) {
    throw InvalidInput("matching has length " + std::to_string(psi.size()) + " but truth has " +
                       std::to_string(truth.size()));
  }
  if (psi.empty()) throw InvalidInput("empty matching");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < psi.size(); ++i) hits += psi[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(psi.size());
}

double map_recovery_error(const Matrix& estimated, const Matrix& planted) {
  if (estimated.rows() != planted.rows() || estimated.cols() != planted.cols()) {
    throw InvalidInput("map_recovery_error: dimension mismatch");
  }
  const double scale = planted.norm();
  if (!(scale > 0.0)) throw InvalidInput("planted map is zero");
  return (estimated - planted).norm() / scale;
}

Method Method::parse(const std::string& text, const NormOrder& default_p) {
  if (text == "emd") return Method{MethodKind::Emd, NormOrder::infinity()};
  if (text == "sinkhorn") return Method{MethodKind::Sinkhorn, NormOrder::infinity()};
  if (text == "oracle") return Method{MethodKind::Oracle, NormOrder::infinity()};
  if (text == "invariant") return Method{MethodKind::InvariantOT, default_p};
  const std::string prefix = "invariant:";
  if (text.rfind(prefix, 0) == 0) {
    return Method{MethodKind::InvariantOT, NormOrder::parse(text.substr(prefix.size()))};
  }
  throw InvalidInput("unknown method '" + text + "' (emd, sinkhorn, oracle, invariant[:p])");
}

std::string Method::name() const {
  switch (kind) {
    case MethodKind::Emd: return "emd";
    case MethodKind::Sinkhorn: return "sinkhorn";
    case MethodKind::Oracle: return "oracle";
    case MethodKind::InvariantOT: return "invariant:" + p.to_string();
  }
  return "?";
}

void SweepConfig::validate() const {
  if (d < 1) throw InvalidInput("d must be >= 1");
  if (n < 2) throw InvalidInput("n must be >= 2");
  if (repetitions < 1) throw InvalidInput("repetitions must be >= 1");
  if (sigmas.empty()) throw InvalidInput("at least one sigma is required");
  if (methods.empty()) throw InvalidInput("at least one method is required");
  for (double s : sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidInput("sigmas must be finite and >= 0");
  }
  if (!(baseline_lambda > 0.0)) throw InvalidInput("baseline_lambda must be positive");
  if (radius && !(*radius > 0.0)) throw InvalidInput("radius must be positive");
}

SweepRow run_method(const SyntheticInstance& inst, const Method& method, const SweepConfig& cfg,
                    std::uint64_t solver_seed, const TraceCallback& on_iteration) {
  const auto started = std::chrono::steady_clock::now();
  const Index d = inst.source.dim();
  const Matrix& x = inst.source.data();
  const Matrix& planted = inst.planted_map.matrix();
  const Matrix identity = Matrix::Identity(d, d);

  SweepRow row;
  row.method = method.name();
  row.p_family = inst.planted_map.ball().order().to_string();
  row.sigma = inst.noise_sigma;

  std::vector<Index> psi;
  Matrix estimate = identity;
  const Matrix* reference = &planted;

  switch (method.kind) {
    case MethodKind::Emd: {
      psi = exact_assignment(pairwise_sq_dist(x, inst.target.data()).cost);
      break;
    }
    case MethodKind::Sinkhorn:
    case MethodKind::Oracle: {
      Matrix y = inst.target.data();
      if (method.kind == MethodKind::Oracle) {
        for (Index i = 0; i < x.cols(); ++i) {
          const Index j = inst.planted_matching[static_cast<std::size_t>(i)];
          y.col(j) = x.col(i) + inst.noise.col(j);
        }
        reference = &identity;
      }
      SinkhornSettings s;
      s.lambda = cfg.baseline_lambda;
      const SinkhornResult sk =
          sinkhorn_solve(pairwise_sq_dist(x, y), inst.source.weights(), inst.target.weights(), s);
      psi = extract_matching(sk.gamma);
      break;
    }
    case MethodKind::InvariantOT: {
      // Roles are swapped so the learned map sends source points onto the target,
      // the same direction as the planted map.
      const InvarianceBall ball = cfg.radius ? InvarianceBall(method.p, *cfg.radius, d)
                                             : InvarianceBall(method.p, d);
      SolverConfig sc(ball);
      sc.lambda0 = cfg.lambda0;
      sc.decay = cfg.decay;
      sc.lambda_min = cfg.lambda_min;
      sc.outer_max_iters = cfg.outer_max_iters;
      sc.outer_tol = cfg.outer_tol;
      sc.restarts = cfg.restarts;
      sc.seed = solver_seed;
      Matrix whitener = identity;
      if (!method.p.is_infinite()) {
        sc.enforcement = Enforcement::Whitened;
        whitener = whitening_transform(inst.source);
      }
      const PointSet y(whitener * x, inst.source.weights());
      SolveOptions options;
      options.on_iteration = on_iteration;
      const AlignmentResult r = solve(inst.target, y, sc, options);
      psi = extract_matching(Matrix(r.gamma.gamma().transpose()));
      estimate = r.map.matrix() * whitener;
      break;
    }
  }

  row.accuracy = matching_accuracy(psi, inst.planted_matching);
  row.map_error = map_recovery_error(estimate, *reference);
  row.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return row;
}

SweepReport run_noise_sweep(const SweepConfig& cfg, const SweepRowCallback& on_row,
                            const SweepTraceCallback& on_trace) {
  cfg.validate();
  const InvarianceBall family(cfg.family, cfg.d);
  SweepReport report;
  for (std::size_t si = 0; si < cfg.sigmas.size(); ++si) {
    std::vector<std::vector<double>> acc(cfg.methods.size()), err(cfg.methods.size());
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      const SyntheticInstance inst = generate_instance(
          cfg.d, cfg.n, family, cfg.sigmas[si], mix_seed(cfg.seed, static_cast<std::uint64_t>(rep)));
      for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
        const std::uint64_t solver_seed = mix_seed(cfg.seed, si, mi, static_cast<std::uint64_t>(rep));
        TraceCallback forward;
        if (on_trace) {
          SweepRow context;
          context.method = cfg.methods[mi].name();
          context.p_family = cfg.family.to_string();
          context.sigma_index = static_cast<Index>(si);
          context.sigma = cfg.sigmas[si];
          context.repetition = rep;
          forward = [&on_trace, context](const TraceRecord& rec) { on_trace(context, rec); };
        }
        SweepRow row = run_method(inst, cfg.methods[mi], cfg, solver_seed, forward);
        row.sigma_index = static_cast<Index>(si);
        row.repetition = rep;
        acc[mi].push_back(row.accuracy);
        err[mi].push_back(row.map_error);
        if (on_row) on_row(row);
        report.rows.push_back(std::move(row));
      }
    }
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      SweepCell cell;
      cell.method = cfg.methods[mi].name();
      cell.sigma = cfg.sigmas[si];
      cell.repetitions = cfg.repetitions;
      cell.accuracy_mean = std::accumulate(acc[mi].begin(), acc[mi].end(), 0.0) / cfg.repetitions;
      cell.accuracy_std = stddev(acc[mi], cell.accuracy_mean);
      cell.map_error_mean = std::accumulate(err[mi].begin(), err[mi].end(), 0.0) / cfg.repetitions;
      cell.map_error_std = stddev(err[mi], cell.map_error_mean);
      report.cells.push_back(cell);
    }
  }
  return report;
}

void write_sweep_csv_header(std::ostream& os) {
  os << "method,p_family,sigma,repetition,accuracy,map_error,runtime_ms\n";
}

void write_sweep_csv_row(std::ostream& os, const SweepRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%.17g,%d,%.17g,%.17g,%.3f\n", row.method.c_str(),
                row.p_family.c_str(), row.sigma, row.repetition, row.accuracy, row.map_error,
                row.runtime_ms);
  os << buf;
}

}  // namespace invot
