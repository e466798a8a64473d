#include <cmath>
#include <random>

#include "doctest.h"
#include "hhoflow/local_kit.hpp"

using namespace hhoflow;

namespace {

const Rect unit{0, 1, 0, 1};

VectorXd random_vector(int n, std::mt19937_64& rng) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = 2.0 * uniform01(rng()) - 1.0;
  return v;
}

/// Scalar hybrid component c of an interpolate_velocity output.
VectorXd component(const LocalKit& kit, const VectorXd& vel, int c) {
  const LocalLayout& lay = kit.lay;
  VectorXd out(lay.ns);
  out.head(lay.Nt) = vel.segment(c * lay.Nt, lay.Nt);
  int s = lay.Nt, off = 2 * lay.Nt;
  for (size_t i = 0; i < kit.faces.size(); ++i) {
    out.segment(s, lay.nvf[i]) = vel.segment(off + c * lay.nvf[i], lay.nvf[i]);
    s += lay.nvf[i];
    off += 2 * lay.nvf[i];
  }
  return out;
}

std::vector<LocalKit> sample_kits(int k, bool with_neumann = false) {
  std::vector<LocalKit> kits;
  Mesh tris = distort_mesh(build_tri_mesh(unit, 3, 3), 0.2, 5);
  Mesh quads = distort_mesh(build_quad_mesh(unit, 3, 3), 0.2, 9);
  if (with_neumann) {
    auto cls = [](const Vec2&, const Vec2& n) -> std::optional<FaceTag> {
      return n.x() > 0.5 ? FaceTag::Neumann : FaceTag::Dirichlet;
    };
    tag_boundary(tris, cls);
    tag_boundary(quads, cls);
  }
  for (const Mesh* m : {&tris, &quads})
    for (int e : {0, 4, 7})
      for (auto prof : {DegreeProfile::hdiv(k), DegreeProfile::hll(k)})
        kits.push_back(build_local_kit(*m, e, prof, 3.0));
  return kits;
}

}  // namespace

TEST_CASE("potential reconstruction reproduces polynomials of degree k+1") {
  std::mt19937_64 rng(101);
  for (int k = 0; k <= 3; ++k) {
    for (const LocalKit& kit : sample_kits(k, true)) {
      VectorXd cx = random_vector(kit.R, rng);
      VectorXd cy = random_vector(kit.R, rng);
      auto w = [&](Vec2 x) {
        return Vec2(kit.elem_basis.value(cx, x), kit.elem_basis.value(cy, x));
      };
      VectorXd vel = interpolate_velocity(kit, w);
      VectorXd rx = kit.P * component(kit, vel, 0);
      VectorXd ry = kit.P * component(kit, vel, 1);
      CHECK((rx - cx).lpNorm<Eigen::Infinity>() < 1e-11 * std::max(1.0, cx.norm()));
      CHECK((ry - cy).lpNorm<Eigen::Infinity>() < 1e-11 * std::max(1.0, cy.norm()));
    }
  }
}

TEST_CASE("reconstruction of an affine field and of (x^2, 0)") {
  Mesh m = build_tri_mesh(unit, 2, 2);
  LocalKit kit = build_local_kit(m, 1, DegreeProfile::hdiv(1), 3.0);
  SUBCASE("rigid rotation (-y, x)") {
    VectorXd vel = interpolate_velocity(kit, [](Vec2 x) { return Vec2(-x.y(), x.x()); });
    for (int q = 0; q < kit.erule.size(); ++q) {
      Vec2 x = kit.erule.point(q);
      CHECK(kit.elem_basis.value(kit.P * component(kit, vel, 0), x) ==
            doctest::Approx(-x.y()).epsilon(1e-11));
      CHECK(kit.elem_basis.value(kit.P * component(kit, vel, 1), x) ==
            doctest::Approx(x.x()).epsilon(1e-11));
    }
  }
  SUBCASE("(x^2, 0) with k >= 1") {
    VectorXd vel = interpolate_velocity(kit, [](Vec2 x) { return Vec2(x.x() * x.x(), 0.0); });
    for (int q = 0; q < kit.erule.size(); ++q) {
      Vec2 x = kit.erule.point(q);
      CHECK(kit.elem_basis.value(kit.P * component(kit, vel, 0), x) ==
            doctest::Approx(x.x() * x.x()).epsilon(1e-11));
    }
    CHECK((kit.P * component(kit, vel, 1)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("zero element block gives a mean-zero reconstruction") {
  std::mt19937_64 rng(77);
  for (const LocalKit& kit : sample_kits(2)) {
    VectorXd z = random_vector(kit.lay.ns, rng);
    z.head(kit.lay.Nt).setZero();
    const double mean = kit.mu.dot(kit.P * z);
    CHECK(std::abs(mean) < 1e-12 * (1.0 + z.norm()));
  }
}

TEST_CASE("interpolation basics") {
  Mesh m = build_quad_mesh(unit, 2, 2);
  LocalKit kit = build_local_kit(m, 0, DegreeProfile::hdiv(2), 3.0);
  SUBCASE("constant field: every block carries the same constant") {
    VectorXd vel = interpolate_velocity(kit, [](Vec2) { return Vec2(2.5, -1.25); });
    for (int c = 0; c < 2; ++c) {
      VectorXd s = component(kit, vel, c);
      const double expect = c == 0 ? 2.5 : -1.25;
      CHECK(s(0) == doctest::Approx(expect).epsilon(1e-13));
      CHECK(s.segment(1, kit.lay.Nt - 1).lpNorm<Eigen::Infinity>() < 1e-13);
      int off = kit.lay.Nt;
      for (size_t i = 0; i < kit.faces.size(); ++i) {
        CHECK(s(off) == doctest::Approx(expect).epsilon(1e-13));
        CHECK(s.segment(off + 1, kit.lay.nvf[i] - 1).lpNorm<Eigen::Infinity>() < 1e-13);
        off += kit.lay.nvf[i];
      }
    }
  }
  SUBCASE("zero field maps to the zero vector") {
    VectorXd vel = interpolate_velocity(kit, [](Vec2) { return Vec2(0, 0); });
    CHECK(vel.lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("face blocks approach the element trace at rate k+1") {
  const double re = 40.0;
  const double kappa = re / 2.0 - std::sqrt(re * re / 4.0 + 4.0 * M_PI * M_PI);
  auto u = [&](Vec2 x) {
    return Vec2(1.0 - std::exp(kappa * x.x()) * std::cos(2 * M_PI * x.y()),
                kappa / (2 * M_PI) * std::exp(kappa * x.x()) * std::sin(2 * M_PI * x.y()));
  };
  const int k = 2;
  auto mismatch = [&](int n) {
    Mesh m = build_tri_mesh(Rect{-0.5, 1.5, 0.0, 2.0}, n, n);
    LocalKit kit = build_local_kit(m, 2 * n + 1, DegreeProfile::hdiv(k), 3.0);
    VectorXd vel = interpolate_velocity(kit, u);
    double worst = 0.0;
    for (size_t i = 0; i < kit.faces.size(); ++i) {
      const KitFace& kf = kit.faces[i];
      double err2 = 0.0;
      for (int c = 0; c < 2; ++c) {
        VectorXd s = component(kit, vel, c);
        for (int q = 0; q < kf.rule.size(); ++q) {
          const double trace = kf.evals.row(q).head(kit.lay.Nt).dot(s.head(kit.lay.Nt));
          const double face = kf.fvals.row(q)
                                  .head(kit.lay.nvf[i])
                                  .dot(s.segment(kit.lay.scal_uF(i, 0), kit.lay.nvf[i]));
          err2 += kf.rule.weights(q) * (trace - face) * (trace - face);
        }
      }
      worst = std::max(worst, std::sqrt(err2));
    }
    return worst;
  };
  const double e1 = mismatch(4), e2 = mismatch(8);
  CHECK(e1 / e2 > std::pow(2.0, k + 1) / 1.6);
}

TEST_CASE("stabilization residuals annihilate reconstructible fields") {
  std::mt19937_64 rng(13);
  for (int k = 0; k <= 3; ++k) {
    for (const LocalKit& kit : sample_kits(k)) {
      VectorXd c = random_vector(kit.R, rng);
      auto w = [&](Vec2 x) { return Vec2(kit.elem_basis.value(c, x), 0.0); };
      VectorXd vel = interpolate_velocity(kit, w);
      VectorXd s = component(kit, vel, 0);
      for (const KitFace& kf : kit.faces)
        CHECK((kf.Rstab * s).lpNorm<Eigen::Infinity>() < 1e-11 * (1.0 + c.norm()));
    }
  }
}

TEST_CASE("stabilization: constants vanish, quadratic form is nonnegative") {
  std::mt19937_64 rng(29);
  for (const LocalKit& kit : sample_kits(1)) {
    // constant hybrid vector: unit coefficient on the constant member of
    // every block
    VectorXd ones = VectorXd::Zero(kit.lay.ns);
    ones(0) = 1.0;
    for (size_t i = 0; i < kit.faces.size(); ++i) ones(kit.lay.scal_uF(i, 0)) = 1.0;
    for (const KitFace& kf : kit.faces)
      CHECK((kf.Rstab * ones).lpNorm<Eigen::Infinity>() < 1e-12);
    for (int trial = 0; trial < 5; ++trial) {
      VectorXd v = random_vector(kit.lay.ns, rng);
      double s = 0.0;
      for (const KitFace& kf : kit.faces)
        s += (1.0 / kf.h) * (kf.Rstab * v).dot(kf.Mstab * (kf.Rstab * v));
      CHECK(s >= -1e-12);
    }
  }
}

TEST_CASE("viscous kernel spectrum") {
  Mesh m = build_quad_mesh(unit, 3, 3);
  SUBCASE("interior element: exactly one zero mode per component (constants)") {
    LocalKit kit = build_local_kit(m, 4, DegreeProfile::hdiv(1), 3.0);
    for (const KitFace& kf : kit.faces) REQUIRE(kf.tag == FaceTag::Interior);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(kit.visc_scalar);
    const double scale = es.eigenvalues().maxCoeff();
    CHECK(std::abs(es.eigenvalues()(0)) < 1e-12 * scale);
    CHECK(es.eigenvalues()(1) > 1e-8 * scale);
    VectorXd consts = VectorXd::Zero(kit.lay.ns);
    consts(0) = 1.0;
    for (size_t i = 0; i < kit.faces.size(); ++i) consts(kit.lay.scal_uF(i, 0)) = 1.0;
    CHECK((kit.visc_scalar * consts).lpNorm<Eigen::Infinity>() < 1e-12 * scale);
  }
  SUBCASE("Dirichlet element with eta = 3 is positive definite") {
    for (int k : {1, 2}) {
      LocalKit kit = build_local_kit(m, 0, DegreeProfile::hdiv(k), 3.0);
      bool has_dirichlet = false;
      for (const KitFace& kf : kit.faces) has_dirichlet |= kf.tag == FaceTag::Dirichlet;
      REQUIRE(has_dirichlet);
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(kit.visc_scalar);
      CHECK(es.eigenvalues()(0) > 0.0);
    }
  }
}

TEST_CASE("component independence of the velocity reconstruction") {
  Mesh m = build_tri_mesh(unit, 2, 2);
  LocalKit kit = build_local_kit(m, 3, DegreeProfile::hll(2), 3.0);
  std::mt19937_64 rng(3);
  VectorXd vel = VectorXd::Zero(2 * kit.lay.ns);
  VectorXd sx = random_vector(kit.lay.ns, rng);
  vel.head(kit.lay.Nt) = sx.head(kit.lay.Nt);
  int off = 2 * kit.lay.Nt, s = kit.lay.Nt;
  for (size_t i = 0; i < kit.faces.size(); ++i) {
    vel.segment(off, kit.lay.nvf[i]) = sx.segment(s, kit.lay.nvf[i]);
    off += 2 * kit.lay.nvf[i];
    s += kit.lay.nvf[i];
  }
  CHECK((kit.P * component(kit, vel, 1)).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((kit.P * component(kit, vel, 0)).norm() > 0.0);
}
