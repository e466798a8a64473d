#include <cmath>
#include <random>

#include "doctest.h"
#include "hhoflow/basis.hpp"

using namespace hhoflow;

TEST_CASE("element basis dimensions") {
  for (int d = 0; d <= 5; ++d) {
    ScalarBasis b(Vec2(0.3, 0.4), 0.7, d);
    CHECK(b.dim() == (d + 1) * (d + 2) / 2);
  }
  FaceBasis f(Vec2(0, 0), Vec2(1, 1), 3);
  CHECK(f.dim() == 4);
}

TEST_CASE("projection of a constant reproduces it everywhere") {
  auto tri = triangle_rule(Vec2(0, 0), Vec2(1.1, 0.2), Vec2(0.3, 0.9), 8);
  ScalarBasis basis(Vec2(0.45, 0.35), 1.0, 3);
  VectorXd c = l2_project([](Vec2) { return 3.5; }, basis, tri);
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    Vec2 x(uniform01(rng()), uniform01(rng()));
    CHECK(basis.value(c, x) == doctest::Approx(3.5).epsilon(1e-14));
  }
}

TEST_CASE("projection of x^2 onto P1 on the segment [0,1] gives x - 1/6") {
  FaceBasis basis(Vec2(0, 0), Vec2(1, 0), 1);
  auto rule = segment_rule(Vec2(0, 0), Vec2(1, 0), 6);
  VectorXd c = l2_project([](Vec2 p) { return p.x() * p.x(); }, basis, rule);
  for (double x : {0.0, 0.25, 0.5, 0.8, 1.0})
    CHECK(basis.value(c, Vec2(x, 0)) == doctest::Approx(x - 1.0 / 6.0).epsilon(1e-13));
}

TEST_CASE("projector reproduces members of the space and is idempotent") {
  auto quad = quadrilateral_rule({Vec2(0, 0), Vec2(1, 0.1), Vec2(1.1, 1), Vec2(-0.1, 0.9)}, 12);
  ScalarBasis basis(Vec2(0.5, 0.5), 1.2, 3);
  std::mt19937_64 rng(5);
  VectorXd ref(basis.dim());
  for (int i = 0; i < basis.dim(); ++i) ref(i) = 2.0 * uniform01(rng()) - 1.0;
  VectorXd c = l2_project([&](Vec2 x) { return basis.value(ref, x); }, basis, quad);
  CHECK((c - ref).lpNorm<Eigen::Infinity>() < 1e-12);
  VectorXd c2 = l2_project([&](Vec2 x) { return basis.value(c, x); }, basis, quad);
  CHECK((c2 - c).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("projection residual is L2-orthogonal to the space") {
  auto tri = triangle_rule(Vec2(0, 0), Vec2(1, 0), Vec2(0.2, 1.1), 14);
  ScalarBasis basis(Vec2(0.4, 0.37), 1.1, 2);
  auto target = [](Vec2 p) { return std::sin(3.0 * p.x()) * std::exp(p.y()); };
  VectorXd c = l2_project(target, basis, tri);
  VectorXd moment = VectorXd::Zero(basis.dim());
  VectorXd v(basis.dim());
  for (int q = 0; q < tri.size(); ++q) {
    basis.eval(tri.point(q), v);
    moment += tri.weights(q) * (target(tri.point(q)) - basis.value(c, tri.point(q))) * v;
  }
  CHECK(moment.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("mass matrix basics") {
  const Vec2 a(0, 0), b(1.2, 0.1), c(0.4, 1.0);
  auto rule = triangle_rule(a, b, c, 10);
  SUBCASE("degree 0 mass equals element area") {
    ScalarBasis basis(Vec2(0.5, 0.4), 1.0, 0);
    MatrixXd m = mass_matrix(basis, rule);
    CHECK(m(0, 0) == doctest::Approx(rule.measure()).epsilon(1e-14));
  }
  SUBCASE("SPD: Cholesky succeeds") {
    ScalarBasis basis(Vec2(0.5, 0.4), 1.0, 4);
    MatrixXd m = mass_matrix(basis, rule);
    Eigen::LLT<MatrixXd> llt(m);
    CHECK(llt.info() == Eigen::Success);
    CHECK((m - m.transpose()).lpNorm<Eigen::Infinity>() < 1e-15 * m.norm());
  }
}

TEST_CASE("centroid/diameter scaling keeps conditioning size-independent") {
  auto cond = [](double h) {
    const Vec2 a(0.1, 0.2), b(1.1, 0.3), c(0.35, 1.15);
    const Vec2 centroid = (a + b + c) / 3.0;
    auto rule = triangle_rule(centroid + h * (a - centroid), centroid + h * (b - centroid),
                              centroid + h * (c - centroid), 8);
    ScalarBasis basis(centroid, h * 1.1, 3);
    MatrixXd m = mass_matrix(basis, rule);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
    return es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
  };
  const double c1 = cond(1.0);
  const double c2 = cond(1e-3);
  CHECK(c2 < 10.0 * c1);
  CHECK(c1 < 10.0 * c2);
}

TEST_CASE("mean-free option zeroes the means of higher modes") {
  auto rule = quadrilateral_rule({Vec2(0, 0), Vec2(1, 0), Vec2(1.1, 1.2), Vec2(0, 1)}, 10);
  ScalarBasis basis(Vec2(0.5, 0.55), 1.3, 3);
  basis.make_mean_free(rule);
  VectorXd integral = VectorXd::Zero(basis.dim());
  VectorXd v(basis.dim());
  for (int q = 0; q < rule.size(); ++q) {
    basis.eval(rule.point(q), v);
    integral += rule.weights(q) * v;
  }
  CHECK(integral(0) == doctest::Approx(rule.measure()).epsilon(1e-14));
  for (int i = 1; i < basis.dim(); ++i) CHECK(std::abs(integral(i)) < 1e-13);
}
