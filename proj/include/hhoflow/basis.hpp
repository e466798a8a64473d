#pragma once

#include <functional>

#include "hhoflow/quadrature.hpp"

namespace hhoflow {

/// Dimension of the 2D polynomial space of total degree <= deg.
inline int poly_dim_2d(int deg) { return (deg + 1) * (deg + 2) / 2; }

/// Scaled monomial basis on a 2D cell: products ((x-cx)/h)^a ((y-cy)/h)^b in
/// graded lexicographic order, so the degree-d basis is a prefix of any
/// higher-degree one on the same cell.
///
/// With `make_mean_free` the non-constant members are shifted by their cell
/// means, so the integral of any represented polynomial over the cell is
/// |T| times its first coefficient. The spanned space is unchanged.
class ScalarBasis {
 public:
  ScalarBasis() = default;
  ScalarBasis(const Vec2& center, double scale, int degree);

  int degree() const { return degree_; }
  int dim() const { return poly_dim_2d(degree_); }
  const Vec2& center() const { return center_; }
  double scale() const { return scale_; }

  void eval(const Vec2& x, Eigen::Ref<VectorXd> vals) const;
  void eval_grad(const Vec2& x, Eigen::Ref<MatrixXd> gx, Eigen::Ref<MatrixXd> gy) const;

  VectorXd eval(const Vec2& x) const;

  /// Evaluate p = sum_i coeffs[i] phi_i at x (coeffs may be a prefix).
  double value(const Eigen::Ref<const VectorXd>& coeffs, const Vec2& x) const;
  Vec2 gradient(const Eigen::Ref<const VectorXd>& coeffs, const Vec2& x) const;

  void make_mean_free(const QuadratureRule& cell_rule);
  const VectorXd& mean_shift() const { return mean_shift_; }

 private:
  Vec2 center_ = Vec2::Zero();
  double scale_ = 1.0;
  int degree_ = 0;
  std::vector<std::pair<int, int>> powers_;
  VectorXd mean_shift_;  // subtracted from each member (zero by default)
};

/// Scaled monomial basis on a straight face: powers of the arclength
/// coordinate s = (x - midpoint) . tangent / h_F measured in the owner frame.
class FaceBasis {
 public:
  FaceBasis() = default;
  FaceBasis(const Vec2& a, const Vec2& b, int degree);

  int degree() const { return degree_; }
  int dim() const { return degree_ + 1; }
  double length() const { return length_; }
  const Vec2& midpoint() const { return mid_; }
  const Vec2& a() const { return a_; }
  const Vec2& b() const { return b_; }

  void eval(const Vec2& x, Eigen::Ref<VectorXd> vals) const;
  VectorXd eval(const Vec2& x) const;
  double value(const Eigen::Ref<const VectorXd>& coeffs, const Vec2& x) const;

 private:
  Vec2 a_ = Vec2::Zero(), b_ = Vec2::Zero();
  Vec2 mid_ = Vec2::Zero(), tangent_ = Vec2::UnitX();
  double length_ = 1.0;
  int degree_ = 0;
};

MatrixXd mass_matrix(const ScalarBasis& basis, const QuadratureRule& rule);
MatrixXd mass_matrix(const FaceBasis& basis, const QuadratureRule& rule);

/// L2-orthogonal projection coefficients of a pointwise-evaluable target.
/// The rule must be exact to 2*degree plus the target's smoothness allowance.
VectorXd l2_project(const std::function<double(Vec2)>& target, const ScalarBasis& basis,
                    const QuadratureRule& rule);
VectorXd l2_project(const std::function<double(Vec2)>& target, const FaceBasis& basis,
                    const QuadratureRule& rule);

}  // namespace hhoflow
