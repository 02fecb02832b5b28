#include "invot/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace invot {

namespace {

constexpr double kUnderflow = 1e-300;
// Scalings beyond this range are absorbed into the dual potentials.
constexpr double kAbsorbHigh = 1e50;
constexpr double kAbsorbLow = 1e-50;

// f_i = lambda log p_i - lambda log sum_j exp((g_j - C_ij) / lambda)
void log_row_update(const Matrix& c, const Vector& log_p, const Vector& g, double lambda,
                    Vector& f) {
  const Index n = c.rows();
  const Index m = c.cols();
  Vector peak = Vector::Constant(n, -std::numeric_limits<double>::infinity());
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) peak[i] = std::max(peak[i], (g[j] - c(i, j)) / lambda);
  }
  Vector acc = Vector::Zero(n);
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) acc[i] += std::exp((g[j] - c(i, j)) / lambda - peak[i]);
  }
  for (Index i = 0; i < n; ++i) {
    f[i] = lambda * (log_p[i] - peak[i] - std::log(acc[i]));
  }
}

// g_j = lambda log q_j - lambda log sum_i exp((f_i - C_ij) / lambda)
void log_col_update(const Matrix& c, const Vector& log_q, const Vector& f, double lambda,
                    Vector& g) {
  const Index n = c.rows();
  for (Index j = 0; j < c.cols(); ++j) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) peak = std::max(peak, (f[i] - c(i, j)) / lambda);
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) acc += std::exp((f[i] - c(i, j)) / lambda - peak);
    g[j] = lambda * (log_q[j] - peak - std::log(acc));
  }
}

void build_kernel(const Matrix& c, const Vector& f, const Vector& g, double lambda, Matrix& k) {
  k.resize(c.rows(), c.cols());
  for (Index j = 0; j < c.cols(); ++j) {
    for (Index i = 0; i < c.rows(); ++i) k(i, j) = std::exp((f[i] + g[j] - c(i, j)) / lambda);
  }
}

Index first_bad(const Vector& v) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0) || !std::isfinite(v[i])) return i;
  }
  return -1;
}

double max_residual(const Matrix& gamma, const Vector& p, const Vector& q) {
  const double rows = (gamma.rowwise().sum() - p).cwiseAbs().maxCoeff();
  const double cols = (gamma.colwise().sum().transpose() - q).cwiseAbs().maxCoeff();
  return std::max(rows, cols);
}

bool needs_absorb(const Vector& a, const Vector& b) {
  return a.maxCoeff() > kAbsorbHigh || b.maxCoeff() > kAbsorbHigh || a.minCoeff() < kAbsorbLow ||
         b.minCoeff() < kAbsorbLow;
}

// Plain Sinkhorn-Knopp on K = exp(-C/lambda). Returns false if a scaling
// denominator vanished, in which case the caller retries in the log domain.
bool solve_plain(const Matrix& c, const Vector& p, const Vector& q, const SinkhornSettings& s,
                 const SweepObserver& observer, SinkhornResult& out) {
  const Matrix k = (-c / s.lambda).array().exp().matrix();
  if (k.minCoeff() < kUnderflow) return false;

  Vector a = Vector::Ones(p.size());
  Vector b = Vector::Ones(q.size());
  Vector kb = k * b;
  int it = 0;
  bool converged = false;
  while (it < s.max_inner_iters) {
    ++it;
    if (first_bad(kb) >= 0) return false;
    a = p.cwiseQuotient(kb);
    const Vector kta = k.transpose() * a;
    if (first_bad(kta) >= 0) return false;
    b = q.cwiseQuotient(kta);
    kb = k * b;
    const double res = (a.cwiseProduct(kb) - p).cwiseAbs().maxCoeff();
    if (observer) observer(it, a.asDiagonal() * k * b.asDiagonal());
    if (res <= s.marginal_tol) {
      converged = true;
      break;
    }
  }
  if (!a.allFinite() || !b.allFinite()) return false;
  out.gamma = a.asDiagonal() * k * b.asDiagonal();
  out.converged = converged;
  out.iterations = it;
  out.log_domain = false;
  out.potentials.f = s.lambda * a.array().log().matrix();
  out.potentials.g = s.lambda * b.array().log().matrix();
  return true;
}

void solve_stabilized(const Matrix& c, const Vector& p, const Vector& q,
                      const SinkhornSettings& s, const DualPotentials* warm,
                      const SweepObserver& observer, SinkhornResult& out) {
  const double lambda = s.lambda;
  const Vector log_p = p.array().log().matrix();
  const Vector log_q = q.array().log().matrix();
  Vector f = Vector::Zero(p.size());
  Vector g = Vector::Zero(q.size());
  if (warm != nullptr && warm->f.size() == p.size() && warm->g.size() == q.size() &&
      warm->f.allFinite() && warm->g.allFinite()) {
    f = warm->f;
    g = warm->g;
  }

  Matrix k;
  Vector a = Vector::Ones(p.size());
  Vector b = Vector::Ones(q.size());
  Vector kb;

  // Exact log-domain half steps; afterwards every kernel row carries its mass.
  auto restabilize = [&]() {
    f += lambda * a.array().log().matrix();
    g += lambda * b.array().log().matrix();
    if (!f.allFinite()) f.setZero();
    if (!g.allFinite()) g.setZero();
    log_col_update(c, log_q, f, lambda, g);
    log_row_update(c, log_p, g, lambda, f);
    a.setOnes();
    b.setOnes();
    build_kernel(c, f, g, lambda, k);
    kb = k * b;
    const Index bad = first_bad(kb);
    if (bad >= 0) {
      throw NumericalFailure("Sinkhorn kernel row " + std::to_string(bad) +
                             " vanished after log-domain stabilization (lambda=" +
                             std::to_string(lambda) + ")");
    }
  };
  a.setConstant(1.0);
  b.setConstant(1.0);
  restabilize();

  Vector kta(q.size());
  int it = 0;
  bool converged = false;
  while (it < s.max_inner_iters) {
    ++it;
    a = p.cwiseQuotient(kb);
    if (!a.allFinite()) {
      restabilize();
      a = p.cwiseQuotient(kb);
    }
    kta.noalias() = k.transpose() * a;
    b = q.cwiseQuotient(kta);
    if (!b.allFinite()) {
      restabilize();
      a = p.cwiseQuotient(kb);
      kta.noalias() = k.transpose() * a;
      if (const Index bad = first_bad(kta); bad >= 0) {
        throw NumericalFailure("Sinkhorn kernel column " + std::to_string(bad) +
                               " vanished after log-domain stabilization (lambda=" +
                               std::to_string(lambda) + ")");
      }
      b = q.cwiseQuotient(kta);
    }
    kb.noalias() = k * b;
    const double res = (a.cwiseProduct(kb) - p).cwiseAbs().maxCoeff();
    if (observer) observer(it, a.asDiagonal() * k * b.asDiagonal());
    if (res <= s.marginal_tol) {
      converged = true;
      break;
    }
    if (it % 8 == 0 && needs_absorb(a, b)) {
      f += lambda * a.array().log().matrix();
      g += lambda * b.array().log().matrix();
      a.setOnes();
      b.setOnes();
      build_kernel(c, f, g, lambda, k);
      kb.noalias() = k * b;
    }
  }
  out.gamma = a.asDiagonal() * k * b.asDiagonal();
  out.converged = converged;
  out.iterations = it;
  out.log_domain = true;
  out.potentials.f = f + lambda * a.array().log().matrix();
  out.potentials.g = g + lambda * b.array().log().matrix();
}

std::vector<Index> support(const Vector& mass) {
  std::vector<Index> idx;
  for (Index i = 0; i < mass.size(); ++i) {
    if (mass[i] > 0.0) idx.push_back(i);
  }
  return idx;
}

SinkhornResult solve_on_support(const Matrix& c, const Vector& p, const Vector& q,
                                const SinkhornSettings& s, const SinkhornOptions& options) {
  SinkhornResult out;
  const bool plain_ok =
      options.warm_start == nullptr && solve_plain(c, p, q, s, options.observer, out);
  if (!plain_ok) solve_stabilized(c, p, q, s, options.warm_start, options.observer, out);
  if (!out.gamma.allFinite()) {
    throw NumericalFailure("Sinkhorn produced non-finite plan (lambda=" + std::to_string(s.lambda) +
                           ")");
  }
  out.residual = max_residual(out.gamma, p, q);
  out.converged = out.converged && out.residual <= s.marginal_tol;
  return out;
}

}  // namespace

void CostMatrix::validate() const {
  require_finite(cost, "cost matrix");
  if (kind == CostKind::SquaredEuclidean && cost.size() > 0 && cost.minCoeff() < 0.0) {
    throw InvalidInput("squared-Euclidean cost matrix has negative entries");
  }
}

CostMatrix pairwise_sq_dist(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) {
    throw InvalidInput("pairwise distances need equal dimensions, got " + std::to_string(x.rows()) +
                       " and " + std::to_string(y.rows()));
  }
  const Vector xn = x.colwise().squaredNorm().transpose();
  const Vector yn = y.colwise().squaredNorm().transpose();
  Matrix c = -2.0 * (x.transpose() * y);
  c.colwise() += xn;
  c.rowwise() += yn.transpose();
  c = c.cwiseMax(0.0);
  return CostMatrix{std::move(c), CostKind::SquaredEuclidean};
}

void SinkhornSettings::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidInput("lambda must be positive");
  if (max_inner_iters < 1) throw InvalidInput("max_inner_iters must be >= 1");
  if (!(marginal_tol > 0.0)) throw InvalidInput("marginal_tol must be positive");
}

Coupling SinkhornResult::coupling(const Histogram& p, const Histogram& q, double tol) const {
  return Coupling(gamma, p, q, tol);
}

SinkhornResult sinkhorn_solve(const CostMatrix& c, const Histogram& p, const Histogram& q,
                              const SinkhornSettings& settings, const SinkhornOptions& options) {
  settings.validate();
  c.validate();
  if (c.rows() != p.size() || c.cols() != q.size()) {
    throw InvalidInput("cost matrix is " + std::to_string(c.rows()) + "x" +
                       std::to_string(c.cols()) + " but marginals have lengths " +
                       std::to_string(p.size()) + " and " + std::to_string(q.size()));
  }
  const std::vector<Index> rows = support(p.mass());
  const std::vector<Index> cols = support(q.mass());
  if (static_cast<Index>(rows.size()) == p.size() && static_cast<Index>(cols.size()) == q.size()) {
    return solve_on_support(c.cost, p.mass(), q.mass(), settings, options);
  }

  // Zero-mass points carry no plan; solve on the support and scatter back.
  const Index n = static_cast<Index>(rows.size());
  const Index m = static_cast<Index>(cols.size());
  Matrix sub(n, m);
  Vector sp(n), sq(m);
  for (Index i = 0; i < n; ++i) sp[i] = p[rows[i]];
  for (Index j = 0; j < m; ++j) sq[j] = q[cols[j]];
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) sub(i, j) = c.cost(rows[i], cols[j]);
  }
  DualPotentials warm_sub;
  SinkhornOptions sub_options;
  sub_options.observer = options.observer
                             ? SweepObserver([&](int it, const Matrix& g) {
                                 Matrix full = Matrix::Zero(p.size(), q.size());
                                 for (Index j = 0; j < m; ++j)
                                   for (Index i = 0; i < n; ++i) full(rows[i], cols[j]) = g(i, j);
                                 options.observer(it, full);
                               })
                             : SweepObserver{};
  if (options.warm_start != nullptr && options.warm_start->f.size() == p.size() &&
      options.warm_start->g.size() == q.size()) {
    warm_sub.f.resize(n);
    warm_sub.g.resize(m);
    for (Index i = 0; i < n; ++i) warm_sub.f[i] = options.warm_start->f[rows[i]];
    for (Index j = 0; j < m; ++j) warm_sub.g[j] = options.warm_start->g[cols[j]];
    sub_options.warm_start = &warm_sub;
  }
  SinkhornResult inner = solve_on_support(sub, sp, sq, settings, sub_options);
  SinkhornResult out;
  out.gamma = Matrix::Zero(p.size(), q.size());
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) out.gamma(rows[i], cols[j]) = inner.gamma(i, j);
  out.converged = inner.converged;
  out.iterations = inner.iterations;
  out.log_domain = inner.log_domain;
  out.residual = max_residual(out.gamma, p.mass(), q.mass());
  out.potentials.f = Vector::Constant(p.size(), -std::numeric_limits<double>::infinity());
  out.potentials.g = Vector::Constant(q.size(), -std::numeric_limits<double>::infinity());
  for (Index i = 0; i < n; ++i) out.potentials.f[rows[i]] = inner.potentials.f[i];
  for (Index j = 0; j < m; ++j) out.potentials.g[cols[j]] = inner.potentials.g[j];
  return out;
}

double entropy(const Matrix& gamma) {
  double h = 0.0;
  for (Index j = 0; j < gamma.cols(); ++j) {
    for (Index i = 0; i < gamma.rows(); ++i) {
      const double v = gamma(i, j);
      if (v > 0.0) h -= v * (std::log(v) - 1.0);
    }
  }
  return h;
}

double transport_cost(const Matrix& gamma, const CostMatrix& c) {
  if (gamma.rows() != c.rows() || gamma.cols() != c.cols()) {
    throw InvalidInput("coupling and cost matrix shapes differ");
  }
  return gamma.cwiseProduct(c.cost).sum();
}

Matrix round_to_polytope(const Matrix& gamma, const Histogram& p, const Histogram& q) {
  if (gamma.rows() != p.size() || gamma.cols() != q.size()) {
    throw InvalidInput("coupling and marginal shapes differ");
  }
  Matrix f = gamma.cwiseMax(0.0);
  const Vector rows = f.rowwise().sum();
  for (Index i = 0; i < f.rows(); ++i) {
    if (rows[i] > p[i]) f.row(i) *= p[i] / rows[i];
  }
  const Vector cols = f.colwise().sum().transpose();
  for (Index j = 0; j < f.cols(); ++j) {
    if (cols[j] > q[j]) f.col(j) *= q[j] / cols[j];
  }
  const Vector err_r = (p.mass() - f.rowwise().sum()).cwiseMax(0.0);
  const Vector err_c = (q.mass() - f.colwise().sum().transpose()).cwiseMax(0.0);
  const double total = err_r.sum();
  if (total > 0.0) f += err_r * err_c.transpose() / total;
  return f;
}

}  // namespace invot
