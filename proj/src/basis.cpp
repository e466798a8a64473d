#include "hhoflow/basis.hpp"

#include <Eigen/Cholesky>
#include <cmath>

namespace hhoflow {

ScalarBasis::ScalarBasis(const Vec2& center, double scale, int degree)
    : center_(center), scale_(scale), degree_(degree) {
  if (scale <= 0.0) throw std::invalid_argument("ScalarBasis: scale must be positive");
  if (degree < 0 || degree > 31) throw std::invalid_argument("ScalarBasis: degree out of range");
  powers_.reserve(dim());
  for (int d = 0; d <= degree; ++d)
    for (int ax = d; ax >= 0; --ax) powers_.emplace_back(ax, d - ax);
  mean_shift_ = VectorXd::Zero(dim());
}

void ScalarBasis::eval(const Vec2& x, Eigen::Ref<VectorXd> vals) const {
  const double sx = (x.x() - center_.x()) / scale_;
  const double sy = (x.y() - center_.y()) / scale_;
  // powers up to degree_
  double px[32], py[32];
  px[0] = py[0] = 1.0;
  for (int d = 1; d <= degree_; ++d) {
    px[d] = px[d - 1] * sx;
    py[d] = py[d - 1] * sy;
  }
  for (int i = 0; i < dim(); ++i)
    vals(i) = px[powers_[i].first] * py[powers_[i].second] - mean_shift_(i);
}

void ScalarBasis::eval_grad(const Vec2& x, Eigen::Ref<MatrixXd> gx, Eigen::Ref<MatrixXd> gy) const {
  const double sx = (x.x() - center_.x()) / scale_;
  const double sy = (x.y() - center_.y()) / scale_;
  double px[32], py[32];
  px[0] = py[0] = 1.0;
  for (int d = 1; d <= degree_; ++d) {
    px[d] = px[d - 1] * sx;
    py[d] = py[d - 1] * sy;
  }
  const double inv_h = 1.0 / scale_;
  for (int i = 0; i < dim(); ++i) {
    const int a = powers_[i].first, b = powers_[i].second;
    gx(i, 0) = a > 0 ? a * px[a - 1] * py[b] * inv_h : 0.0;
    gy(i, 0) = b > 0 ? b * px[a] * py[b - 1] * inv_h : 0.0;
  }
}

VectorXd ScalarBasis::eval(const Vec2& x) const {
  VectorXd v(dim());
  eval(x, v);
  return v;
}

double ScalarBasis::value(const Eigen::Ref<const VectorXd>& coeffs, const Vec2& x) const {
  VectorXd v(dim());
  eval(x, v);
  return v.head(coeffs.size()).dot(coeffs);
}

Vec2 ScalarBasis::gradient(const Eigen::Ref<const VectorXd>& coeffs, const Vec2& x) const {
  MatrixXd gx(dim(), 1), gy(dim(), 1);
  eval_grad(x, gx, gy);
  return Vec2(gx.col(0).head(coeffs.size()).dot(coeffs), gy.col(0).head(coeffs.size()).dot(coeffs));
}

void ScalarBasis::make_mean_free(const QuadratureRule& rule) {
  mean_shift_.setZero();
  VectorXd integral = VectorXd::Zero(dim());
  VectorXd v(dim());
  for (int q = 0; q < rule.size(); ++q) {
    eval(rule.point(q), v);
    integral += rule.weights(q) * v;
  }
  const double area = rule.measure();
  mean_shift_ = integral / area;
  mean_shift_(0) = 0.0;  // keep the constant member as-is
}

FaceBasis::FaceBasis(const Vec2& a, const Vec2& b, int degree)
    : a_(a), b_(b), mid_(0.5 * (a + b)), degree_(degree) {
  length_ = (b - a).norm();
  if (length_ <= 0.0) throw std::invalid_argument("FaceBasis: degenerate segment");
  tangent_ = (b - a) / length_;
}

void FaceBasis::eval(const Vec2& x, Eigen::Ref<VectorXd> vals) const {
  const double s = (x - mid_).dot(tangent_) / length_;
  double p = 1.0;
  for (int i = 0; i <= degree_; ++i) {
    vals(i) = p;
    p *= s;
  }
}

VectorXd FaceBasis::eval(const Vec2& x) const {
  VectorXd v(dim());
  eval(x, v);
  return v;
}

double FaceBasis::value(const Eigen::Ref<const VectorXd>& coeffs, const Vec2& x) const {
  VectorXd v(dim());
  eval(x, v);
  return v.head(coeffs.size()).dot(coeffs);
}

namespace {

template <class Basis>
MatrixXd mass_impl(const Basis& basis, const QuadratureRule& rule) {
  const int n = basis.dim();
  MatrixXd m = MatrixXd::Zero(n, n);
  VectorXd v(n);
  for (int q = 0; q < rule.size(); ++q) {
    basis.eval(rule.point(q), v);
    m.selfadjointView<Eigen::Lower>().rankUpdate(v, rule.weights(q));
  }
  return m.selfadjointView<Eigen::Lower>();
}

template <class Basis>
VectorXd project_impl(const std::function<double(Vec2)>& target, const Basis& basis,
                      const QuadratureRule& rule) {
  const int n = basis.dim();
  MatrixXd m = mass_impl(basis, rule);
  VectorXd rhs = VectorXd::Zero(n);
  VectorXd v(n);
  for (int q = 0; q < rule.size(); ++q) {
    basis.eval(rule.point(q), v);
    rhs += rule.weights(q) * target(rule.point(q)) * v;
  }
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("l2_project: singular mass matrix (corrupt geometry?)");
  VectorXd c = llt.solve(rhs);
  c += llt.solve(rhs - m * c);  // one refinement pass tightens the last digits
  return c;
}

}  // namespace

MatrixXd mass_matrix(const ScalarBasis& basis, const QuadratureRule& rule) {
  return mass_impl(basis, rule);
}
MatrixXd mass_matrix(const FaceBasis& basis, const QuadratureRule& rule) {
  return mass_impl(basis, rule);
}
VectorXd l2_project(const std::function<double(Vec2)>& target, const ScalarBasis& basis,
                    const QuadratureRule& rule) {
  return project_impl(target, basis, rule);
}
VectorXd l2_project(const std::function<double(Vec2)>& target, const FaceBasis& basis,
                    const QuadratureRule& rule) {
  return project_impl(target, basis, rule);
}

}  // namespace hhoflow
