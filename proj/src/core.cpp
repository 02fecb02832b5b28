#include "invot/core.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <sstream>

namespace invot {

NormOrder NormOrder::finite(double p) {
  if (!std::isfinite(p) || p < 1.0) {
    throw InvalidInput("norm order must lie in [1, inf], got " + std::to_string(p));
  }
  return NormOrder{p};
}

NormOrder NormOrder::parse(const std::string& text) {
  if (text == "inf" || text == "Inf" || text == "INF" || text == "infinity") {
    return infinity();
  }
  std::size_t used = 0;
  double p = 0.0;
  try {
    p = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InvalidInput("cannot parse norm order '" + text + "'");
  }
  if (used != text.size()) {
    throw InvalidInput("cannot parse norm order '" + text + "'");
  }
  if (std::isinf(p) && p > 0) return infinity();
  return finite(p);
}

double NormOrder::value() const {
  if (!value_) throw InvalidInput("infinite norm order has no finite value");
  return *value_;
}

NormOrder NormOrder::dual() const {
  if (is_infinite()) return finite(1.0);
  if (*value_ == 1.0) return infinity();
  return finite(*value_ / (*value_ - 1.0));
}

std::string NormOrder::to_string() const {
  if (is_infinite()) return "inf";
  std::ostringstream os;
  os << *value_;
  return os.str();
}

double lp_norm(const Vector& v, const NormOrder& p) {
  if (v.size() == 0) return 0.0;
  const double peak = v.cwiseAbs().maxCoeff();
  if (p.is_infinite()) return peak;
  if (peak == 0.0) return 0.0;
  const double e = p.value();
  if (e == 1.0) return v.cwiseAbs().sum();
  if (e == 2.0) return peak * (v / peak).norm();
  double acc = 0.0;
  for (Index i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v[i]) / peak, e);
  return peak * std::pow(acc, 1.0 / e);
}

Histogram::Histogram(Vector mass) : mass_(std::move(mass)) {
  if (mass_.size() == 0) throw InvalidInput("histogram must be non-empty");
  for (Index i = 0; i < mass_.size(); ++i) {
    if (!std::isfinite(mass_[i]) || mass_[i] < 0.0) {
      throw InvalidInput("histogram entry " + std::to_string(i) + " is negative or non-finite");
    }
  }
  const double total = mass_.sum();
  if (std::abs(total - 1.0) > kHistogramMassTol) {
    throw InvalidInput("histogram mass " + std::to_string(total) + " deviates from 1");
  }
  mass_ /= total;
}

Histogram Histogram::uniform(Index n) {
  if (n < 1) throw InvalidInput("histogram must be non-empty");
  return Histogram(Vector::Constant(n, 1.0 / static_cast<double>(n)));
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + " contains non-finite entries");
}

PointSet::PointSet(Matrix data, Histogram weights)
    : data_(std::move(data)), weights_(std::move(weights)) {
  if (data_.rows() < 1 || data_.cols() < 1) throw InvalidInput("point set must be non-empty");
  require_finite(data_, "point set");
  if (weights_.size() != data_.cols()) {
    throw InvalidInput("point set has " + std::to_string(data_.cols()) + " points but " +
                       std::to_string(weights_.size()) + " weights");
  }
}

PointSet::PointSet(Matrix data)
    : PointSet(data, Histogram::uniform(std::max<Index>(data.cols(), 1))) {}

double InvarianceBall::default_radius(const NormOrder& order, Index dim) {
  if (order.is_infinite()) return 1.0;
  return std::pow(static_cast<double>(dim), 1.0 / order.value());
}

InvarianceBall::InvarianceBall(NormOrder order, Index dim)
    : InvarianceBall(order, default_radius(order, dim), dim) {}

InvarianceBall::InvarianceBall(NormOrder order, double radius, Index dim)
    : order_(order), radius_(radius), dim_(dim) {
  if (!(radius_ > 0.0) || !std::isfinite(radius_)) {
    throw InvalidInput("invariance ball radius must be positive");
  }
  if (dim_ < 1) throw InvalidInput("invariance ball dimension must be >= 1");
}

double schatten_norm(const Matrix& m, const NormOrder& p) {
  require_finite(m, "matrix");
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return lp_norm(svd.singularValues(), p);
}

LinearMap::LinearMap(Matrix matrix, InvarianceBall ball)
    : matrix_(std::move(matrix)), ball_(std::move(ball)) {
  if (matrix_.rows() != matrix_.cols() || matrix_.rows() != ball_.dim()) {
    throw InvalidInput("linear map must be " + std::to_string(ball_.dim()) + "x" +
                       std::to_string(ball_.dim()));
  }
  const double norm = schatten_norm(matrix_, ball_.order());
  if (norm > ball_.radius() * (1.0 + kBallSlack)) {
    throw InvalidInput("linear map has Schatten-" + ball_.order().to_string() + " norm " +
                       std::to_string(norm) + " above radius " + std::to_string(ball_.radius()));
  }
}

CouplingReport validate_coupling(const Matrix& gamma, const Histogram& p, const Histogram& q,
                                 double tol) {
  if (gamma.rows() != p.size() || gamma.cols() != q.size()) {
    throw InvalidInput("coupling is " + std::to_string(gamma.rows()) + "x" +
                       std::to_string(gamma.cols()) + " but marginals have lengths " +
                       std::to_string(p.size()) + " and " + std::to_string(q.size()));
  }
  CouplingReport report;
  if (gamma.size() == 0 || !gamma.allFinite()) return report;
  report.min_entry = gamma.minCoeff();
  report.max_row_residual = (gamma.rowwise().sum() - p.mass()).cwiseAbs().maxCoeff();
  report.max_col_residual = (gamma.colwise().sum().transpose() - q.mass()).cwiseAbs().maxCoeff();
  report.feasible = report.min_entry >= 0.0 && report.max_row_residual <= tol &&
                    report.max_col_residual <= tol;
  return report;
}

Coupling::Coupling(Matrix gamma, Histogram p, Histogram q, double tol)
    : gamma_(std::move(gamma)), p_(std::move(p)), q_(std::move(q)) {
  const CouplingReport report = validate_coupling(gamma_, p_, q_, tol);
  if (!report.feasible) {
    std::ostringstream os;
    os << "matrix is not in the transportation polytope (min entry " << report.min_entry
       << ", row residual " << report.max_row_residual << ", column residual "
       << report.max_col_residual << ", tol " << tol << ")";
    throw InvalidInput(os.str());
  }
}

Coupling Coupling::product(const Histogram& p, const Histogram& q) {
  return Coupling(p.mass() * q.mass().transpose(), p, q);
}

Matrix barycentric_image(const PointSet& x, const Coupling& gamma) {
  if (x.size() != gamma.rows()) {
    throw InvalidInput("point set has " + std::to_string(x.size()) + " columns but coupling has " +
                       std::to_string(gamma.rows()) + " rows");
  }
  return x.data() * gamma.gamma();
}

}  // namespace invot
