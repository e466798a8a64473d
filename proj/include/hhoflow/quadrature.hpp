#pragma once

#include <array>
#include <vector>

#include "hhoflow/common.hpp"

namespace hhoflow {

/// Quadrature rule on a segment, triangle or quadrilateral: physical points
/// and positive weights summing to the measure of the support.
struct QuadratureRule {
  Eigen::Matrix<double, Eigen::Dynamic, 2> points;
  VectorXd weights;

  int size() const { return static_cast<int>(weights.size()); }
  Vec2 point(int q) const { return points.row(q).transpose(); }
  double measure() const { return weights.sum(); }
};

/// Gauss-Legendre nodes/weights on [-1,1]; n points integrate degree 2n-1.
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

/// Rule exact for polynomials of total degree <= order on the segment [a,b].
QuadratureRule segment_rule(const Vec2& a, const Vec2& b, int order);

/// Rule exact for total degree <= order on the triangle (a,b,c), via a
/// Duffy-collapsed tensor Gauss rule mapped affinely.
QuadratureRule triangle_rule(const Vec2& a, const Vec2& b, const Vec2& c, int order);

/// Rule exact for total degree <= order on the (possibly non-parallelogram)
/// quadrilateral with CCW corners, via a bilinearly mapped tensor Gauss rule
/// with the Jacobian folded into the weights.
QuadratureRule quadrilateral_rule(const std::array<Vec2, 4>& corners, int order);

/// Dispatch on the vertex loop of a polygonal cell (3 or 4 vertices).
QuadratureRule cell_rule(const std::vector<Vec2>& loop, int order);

}  // namespace hhoflow
