#pragma once

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>

namespace invot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Error categories. The CLI maps these onto distinct exit codes.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SingularInput : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct ParseError : InvalidInput {
  using InvalidInput::InvalidInput;
};

struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kHistogramMassTol = 1e-6;
inline constexpr double kDefaultMarginalTol = 1e-6;

/// Schatten / vector norm order p in [1, inf]. Infinity is a distinct tag, not a
/// floating-point infinity, so the dual exponent never goes through inf arithmetic.
class NormOrder {
 public:
  static NormOrder infinity() { return NormOrder{}; }
  static NormOrder finite(double p);
  /// Parses "inf", "1", "2", "1.5", ...
  static NormOrder parse(const std::string& text);

  bool is_infinite() const { return !value_.has_value(); }
  bool is_one() const { return value_.has_value() && *value_ == 1.0; }
  /// Only valid when finite.
  double value() const;

  /// Conjugate exponent q with 1/p + 1/q = 1.
  NormOrder dual() const;

  std::string to_string() const;

  friend bool operator==(const NormOrder&, const NormOrder&) = default;

 private:
  NormOrder() = default;
  explicit NormOrder(double p) : value_(p) {}
  std::optional<double> value_;
};

/// l_p norm of a vector, scaled by its max-abs entry for finite p.
double lp_norm(const Vector& v, const NormOrder& p);

/// Probability vector. Mass is checked to within kHistogramMassTol and then
/// renormalized so it sums to one.
class Histogram {
 public:
  explicit Histogram(Vector mass);
  static Histogram uniform(Index n);

  const Vector& mass() const { return mass_; }
  Index size() const { return mass_.size(); }
  double operator[](Index i) const { return mass_[i]; }

 private:
  Vector mass_;
};

/// Columns of `data` are points in R^d.
class PointSet {
 public:
  PointSet(Matrix data, Histogram weights);
  /// Uniform weights over the columns.
  explicit PointSet(Matrix data);

  const Matrix& data() const { return data_; }
  const Histogram& weights() const { return weights_; }
  Index dim() const { return data_.rows(); }
  Index size() const { return data_.cols(); }

 private:
  Matrix data_;
  Histogram weights_;
};

class InvarianceBall {
 public:
  /// Ball with the identity-feasible default radius for `order` in dimension d:
  /// inf -> 1, 2 -> sqrt(d), 1 -> d, general p -> d^(1/p).
  InvarianceBall(NormOrder order, Index dim);
  InvarianceBall(NormOrder order, double radius, Index dim);

  const NormOrder& order() const { return order_; }
  double radius() const { return radius_; }
  Index dim() const { return dim_; }

  static double default_radius(const NormOrder& order, Index dim);

 private:
  NormOrder order_;
  double radius_;
  Index dim_;
};

/// Schatten p-norm: the l_p norm of the singular values of M.
double schatten_norm(const Matrix& m, const NormOrder& p);

inline constexpr double kBallSlack = 1e-8;

class LinearMap {
 public:
  /// Throws InvalidInput if the matrix is not d x d or lies outside the ball.
  LinearMap(Matrix matrix, InvarianceBall ball);

  const Matrix& matrix() const { return matrix_; }
  const InvarianceBall& ball() const { return ball_; }
  Index dim() const { return matrix_.rows(); }

 private:
  Matrix matrix_;
  InvarianceBall ball_;
};

struct CouplingReport {
  bool feasible = false;
  double max_row_residual = 0.0;
  double max_col_residual = 0.0;
  double min_entry = 0.0;
};

/// Checks nonnegativity and both marginals of gamma against p, q in max-norm.
CouplingReport validate_coupling(const Matrix& gamma, const Histogram& p, const Histogram& q,
                                 double tol = kDefaultMarginalTol);

/// Element of the transportation polytope Pi(p, q).
class Coupling {
 public:
  Coupling(Matrix gamma, Histogram p, Histogram q, double tol = kDefaultMarginalTol);

  /// The product coupling p q^T.
  static Coupling product(const Histogram& p, const Histogram& q);

  const Matrix& gamma() const { return gamma_; }
  const Histogram& row_marginal() const { return p_; }
  const Histogram& col_marginal() const { return q_; }
  Index rows() const { return gamma_.rows(); }
  Index cols() const { return gamma_.cols(); }

 private:
  Matrix gamma_;
  Histogram p_;
  Histogram q_;
};

/// X * Gamma: source points carried to the target side by the barycentric map.
Matrix barycentric_image(const PointSet& x, const Coupling& gamma);

/// Throws InvalidInput naming `what` if any entry is non-finite.
void require_finite(const Matrix& m, const char* what);

}  // namespace invot
