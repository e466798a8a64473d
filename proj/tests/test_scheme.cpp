#include <cmath>
#include <map>
#include <random>

#include "doctest.h"
#include "hhoflow/scheme.hpp"

using namespace hhoflow;

namespace {

const Rect unit{0, 1, 0, 1};

VectorXd random_vector(int n, std::mt19937_64& rng, double amp = 1.0) {
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = amp * (2.0 * uniform01(rng()) - 1.0);
  return v;
}

SchemeConfig basic_config(SchemeKind kind, int k, double nu, const Mesh& mesh) {
  SchemeConfig cfg;
  cfg.scheme = kind;
  cfg.k = k;
  cfg.nu = nu;
  cfg.bc.velocity = [](Vec2) { return Vec2(0, 0); };
  cfg.bc.traction = [](Vec2, Vec2) { return Vec2(0, 0); };
  cfg.finalize(mesh);
  return cfg;
}

/// Random global state on a (possibly periodic) mesh, gathered per element so
/// that shared faces carry identical coefficients on both sides.
struct GlobalStub {
  std::map<int, VectorXd> face_vel;   // dof-face id -> [x comp | y comp]
  std::map<int, VectorXd> face_pres;  // dof-face id -> coefficients
  std::vector<VectorXd> elem_vel, elem_pres;

  GlobalStub(const Mesh& mesh, const std::vector<LocalKit>& kits, std::mt19937_64& rng,
             double amp = 1.0) {
    elem_vel.resize(mesh.n_elements());
    elem_pres.resize(mesh.n_elements());
    for (int e = 0; e < mesh.n_elements(); ++e) {
      const LocalKit& kit = kits[e];
      elem_vel[e] = random_vector(2 * kit.lay.Nt, rng, amp);
      elem_pres[e] = random_vector(kit.lay.Nk, rng, amp);
      for (size_t i = 0; i < kit.faces.size(); ++i) {
        const int df = kit.faces[i].dof_face;
        if (!face_vel.count(df)) {
          face_vel[df] = random_vector(2 * kit.lay.nvf[i], rng, amp);
          face_pres[df] = random_vector(kit.lay.npf[i], rng, amp);
        }
      }
    }
  }

  VectorXd local_state(const LocalKit& kit) const {
    const LocalLayout& lay = kit.lay;
    VectorXd x = VectorXd::Zero(lay.ndof);
    x.head(2 * lay.Nt) = elem_vel[kit.elem];
    x.segment(lay.off_pT, lay.Nk) = elem_pres[kit.elem];
    for (size_t i = 0; i < kit.faces.size(); ++i) {
      const int df = kit.faces[i].dof_face;
      x.segment(lay.off_uF[i], 2 * lay.nvf[i]) = face_vel.at(df);
      x.segment(lay.off_pF[i], lay.npf[i]) = face_pres.at(df);
    }
    return x;
  }
};

}  // namespace

TEST_CASE("wave speed algebra") {
  SUBCASE("rest state is symmetric") {
    auto ws = wave_speeds(0.0, 1.0);
    CHECK(ws.sp == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ws.sm == doctest::Approx(-1.0).epsilon(1e-15));
  }
  SUBCASE("q=3, a=1") {
    auto ws = wave_speeds(3.0, 1.0);
    CHECK(ws.sp == doctest::Approx((3.0 + std::sqrt(13.0)) / 2.0).epsilon(1e-14));
    CHECK(ws.sm == doctest::Approx((3.0 - std::sqrt(13.0)) / 2.0).epsilon(1e-14));
  }
  SUBCASE("signs, product and spread for random pairs") {
    std::mt19937_64 rng(4242);
    for (int i = 0; i < 10000; ++i) {
      const double q = 20.0 * (2.0 * uniform01(rng()) - 1.0);
      const double a = 1e-3 + 10.0 * uniform01(rng());
      auto ws = wave_speeds(q, a);
      CHECK(ws.sp > 0.0);
      CHECK(ws.sm < 0.0);
      CHECK(std::abs(ws.sp * ws.sm + a * a) <= 1e-13 * a * a);
      CHECK(ws.sp - ws.sm ==
            doctest::Approx(std::sqrt(q * q + 4 * a * a)).epsilon(1e-14));
    }
  }
}

TEST_CASE("zero state, zero data gives a zero residual") {
  Mesh mesh = build_tri_mesh(unit, 2, 2);
  for (SchemeKind kind : {SchemeKind::Hdiv, SchemeKind::HLL}) {
    SchemeConfig cfg = basic_config(kind, 1, 1.0, mesh);
    LocalKit kit = build_local_kit(mesh, 0, cfg.profile, cfg.eta);
    ElementScheme es(kit, cfg);
    VectorXd x = VectorXd::Zero(kit.lay.ndof), r;
    es.assemble(x, 0.0, r, nullptr);
    CHECK(r.lpNorm<Eigen::Infinity>() < 1e-14);
  }
}

TEST_CASE("uniform state on a periodic mesh is flux-free (hll, nu = 0)") {
  Mesh mesh = apply_periodic(build_quad_mesh(unit, 3, 3), true, true);
  SchemeConfig cfg = basic_config(SchemeKind::HLL, 2, 0.0, mesh);
  REQUIRE(cfg.gauge == Gauge::ZeroMeanPressure);
  for (int e : {0, 4}) {
    LocalKit kit = build_local_kit(mesh, e, cfg.profile, cfg.eta);
    ElementScheme es(kit, cfg);
    VectorXd x = VectorXd::Zero(kit.lay.ndof);
    // constant velocity (0.7, -0.3), constant pressure 2.5
    x(kit.lay.uT(0, 0)) = 0.7;
    x(kit.lay.uT(1, 0)) = -0.3;
    x(kit.lay.pT(0)) = 2.5;
    for (size_t i = 0; i < kit.faces.size(); ++i) {
      x(kit.lay.uF(i, 0, 0)) = 0.7;
      x(kit.lay.uF(i, 1, 0)) = -0.3;
      x(kit.lay.pF(i, 0)) = 2.5;
    }
    VectorXd r;
    es.assemble(x, 0.0, r, nullptr);
    CHECK(r.lpNorm<Eigen::Infinity>() < 1e-13);
  }
}

TEST_CASE("analytic Jacobians match central finite differences") {
  std::mt19937_64 rng(999);
  Mesh mesh = distort_mesh(build_quad_mesh(unit, 2, 2), 0.15, 3);
  Mesh tmesh = distort_mesh(build_tri_mesh(unit, 2, 2), 0.15, 4);
  auto cls = [](const Vec2&, const Vec2& n) -> std::optional<FaceTag> {
    return n.x() > 0.5 ? FaceTag::Neumann : FaceTag::Dirichlet;
  };
  tag_boundary(mesh, cls);
  tag_boundary(tmesh, cls);

  auto check = [&](const Mesh& m, SchemeKind kind, int k, bool given, WaveSpeedEval wse) {
    SchemeConfig cfg;
    cfg.scheme = kind;
    cfg.k = k;
    cfg.nu = 0.7;
    cfg.wave_speed_eval = wse;
    cfg.bc.velocity = [](Vec2 p) { return Vec2(std::sin(p.x()), p.y() * p.x()); };
    cfg.bc.traction = [](Vec2 p, Vec2 n) { return Vec2(p.x() * n.x(), std::cos(p.y())); };
    cfg.bc.given = given;
    cfg.forcing = [](Vec2 p, double) { return Vec2(p.y(), -p.x()); };
    Mesh mm = m;
    if (given) {
      tag_boundary(mm, [](const Vec2&, const Vec2&) -> std::optional<FaceTag> {
        return FaceTag::Dirichlet;
      });
    }
    cfg.finalize(mm);
    LocalKit kit = build_local_kit(mm, 0, cfg.profile, cfg.eta);
    ElementScheme es(kit, cfg);
    for (int trial = 0; trial < 3; ++trial) {
      VectorXd x = random_vector(kit.lay.ndof, rng);
      VectorXd r;
      MatrixXd J;
      es.assemble(x, 0.0, r, &J);
      MatrixXd Jfd(kit.lay.ndof, kit.lay.ndof);
      for (int i = 0; i < kit.lay.ndof; ++i) {
        const double h = 1e-5 * std::max(1.0, std::abs(x(i)));
        VectorXd xp = x, xm = x, rp, rm;
        xp(i) += h;
        xm(i) -= h;
        es.assemble(xp, 0.0, rp, nullptr);
        es.assemble(xm, 0.0, rm, nullptr);
        Jfd.col(i) = (rp - rm) / (2.0 * h);
      }
      CHECK((J - Jfd).norm() / std::max(1.0, J.norm()) < 1e-6);
    }
  };

  check(tmesh, SchemeKind::Hdiv, 1, false, WaveSpeedEval::Pointwise);
  check(mesh, SchemeKind::Hdiv, 2, false, WaveSpeedEval::Pointwise);
  check(tmesh, SchemeKind::DivFree, 1, false, WaveSpeedEval::Pointwise);
  check(mesh, SchemeKind::HLL, 1, false, WaveSpeedEval::Pointwise);
  check(tmesh, SchemeKind::HLL, 2, false, WaveSpeedEval::Pointwise);
  check(tmesh, SchemeKind::HLL, 1, true, WaveSpeedEval::Pointwise);
  check(mesh, SchemeKind::HLL, 1, false, WaveSpeedEval::FaceMean);
  check(tmesh, SchemeKind::HLL, 2, true, WaveSpeedEval::FaceMean);
}

TEST_CASE("Temam convection is kinetic-energy neutral on a periodic mesh") {
  std::mt19937_64 rng(31);
  Mesh mesh = apply_periodic(build_quad_mesh(unit, 3, 3), true, true);
  SchemeConfig cfg = basic_config(SchemeKind::Hdiv, 2, 0.0, mesh);
  std::vector<LocalKit> kits;
  for (int e = 0; e < mesh.n_elements(); ++e)
    kits.push_back(build_local_kit(mesh, e, cfg.profile, cfg.eta));
  GlobalStub state(mesh, kits, rng);
  for (auto& [f, p] : state.face_pres) p.setZero();
  for (auto& p : state.elem_pres) p.setZero();

  double contraction = 0.0, scale = 0.0;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    ElementScheme es(kits[e], cfg);
    VectorXd x = state.local_state(kits[e]);
    VectorXd r;
    es.assemble(x, 0.0, r, nullptr);
    // velocity rows contracted against the state itself
    const LocalLayout& lay = kits[e].lay;
    for (int c = 0; c < 2; ++c)
      for (int s = 0; s < lay.ns; ++s) {
        contraction += r(lay.vel_dof(c, s)) * x(lay.vel_dof(c, s));
        scale += std::abs(r(lay.vel_dof(c, s)) * x(lay.vel_dof(c, s)));
      }
  }
  CHECK(std::abs(contraction) < 1e-12 * std::max(1.0, scale));
}

TEST_CASE("divergence-free states annihilate the hdiv continuity rows") {
  Mesh mesh = build_quad_mesh(unit, 3, 3);
  SchemeConfig cfg = basic_config(SchemeKind::Hdiv, 1, 1.0, mesh);
  cfg.bc.velocity = [](Vec2 p) { return Vec2(p.x(), -p.y()); };   // matches the test state
  LocalKit kit = build_local_kit(mesh, 4, cfg.profile, cfg.eta);  // interior element
  ElementScheme es(kit, cfg);
  VectorXd vel = interpolate_velocity(kit, [](Vec2 p) { return Vec2(p.x(), -p.y()); });
  VectorXd pres = VectorXd::Zero(kit.lay.Nk + 4 * kit.lay.npf[0]);
  VectorXd x = assemble_local_state(kit, vel, pres);
  VectorXd r;
  es.assemble(x, 0.0, r, nullptr);
  CHECK(r.segment(kit.lay.off_pT, kit.lay.Nk).lpNorm<Eigen::Infinity>() < 1e-13);
  for (size_t i = 0; i < kit.faces.size(); ++i)
    CHECK(r.segment(kit.lay.off_pF[i], kit.lay.npf[i]).lpNorm<Eigen::Infinity>() < 1e-13);
}

TEST_CASE("u = (x, 0) with constant faces loads the element continuity row by |T|") {
  Mesh mesh = build_quad_mesh(unit, 3, 3);
  SchemeConfig cfg = basic_config(SchemeKind::Hdiv, 1, 1.0, mesh);
  LocalKit kit = build_local_kit(mesh, 4, cfg.profile, cfg.eta);
  ElementScheme es(kit, cfg);
  VectorXd x = VectorXd::Zero(kit.lay.ndof);
  // u_T = (x, 0) expressed in the scaled basis: x = centroid_x + h * xi_1
  x(kit.lay.uT(0, 0)) = kit.elem_basis.center().x();
  x(kit.lay.uT(0, 1)) = kit.elem_basis.scale();
  for (size_t i = 0; i < kit.faces.size(); ++i) x(kit.lay.uF(i, 0, 0)) = 0.21;
  VectorXd r;
  es.assemble(x, 0.0, r, nullptr);
  // element pressure rows: -int (div u) q = -int q; mean-free basis leaves
  // only the constant mode, with weight |T|
  CHECK(r(kit.lay.pT(0)) == doctest::Approx(-kit.area).epsilon(1e-13));
  for (int j = 1; j < kit.lay.Nk; ++j) CHECK(std::abs(r(kit.lay.pT(j))) < 1e-13);
}

TEST_CASE("hll interior face rows match the two-sided upwind integrand") {
  std::mt19937_64 rng(8);
  Mesh mesh = build_quad_mesh(Rect{0, 2, 0, 1}, 2, 1);
  SchemeConfig cfg = basic_config(SchemeKind::HLL, 2, 0.0, mesh);
  std::vector<LocalKit> kits;
  for (int e = 0; e < 2; ++e) kits.push_back(build_local_kit(mesh, e, cfg.profile, cfg.eta));
  GlobalStub state(mesh, kits, rng);

  // locate the shared face
  int shared = -1;
  for (int f = 0; f < mesh.n_faces(); ++f)
    if (mesh.faces[f].tag == FaceTag::Interior) shared = f;
  REQUIRE(shared >= 0);

  // assembled residual rows on the shared face, summed over both elements
  const int nvf = cfg.profile.k + 1;
  VectorXd rows = VectorXd::Zero(2 * nvf);
  for (int e = 0; e < 2; ++e) {
    ElementScheme es(kits[e], cfg);
    VectorXd x = state.local_state(kits[e]);
    VectorXd r;
    es.assemble(x, 0.0, r, nullptr);
    for (size_t i = 0; i < kits[e].faces.size(); ++i)
      if (kits[e].faces[i].face_id == shared)
        rows += r.segment(kits[e].lay.off_uF[i], 2 * nvf);
  }

  // direct quadrature of -[s+ (u_T - u_F) - s- (u_T' - u_F)] . psi, with the
  // wave speeds referred to the owner-side normal
  const LocalKit& kown = kits[mesh.faces[shared].elem[0]];
  int fi = -1;
  for (size_t i = 0; i < kown.faces.size(); ++i)
    if (kown.faces[i].face_id == shared) fi = static_cast<int>(i);
  const KitFace& kf = kown.faces[fi];
  const LocalKit& kNbr = kits[mesh.faces[shared].elem[1]];
  VectorXd direct = VectorXd::Zero(2 * nvf);
  for (int q = 0; q < kf.rule.size(); ++q) {
    const Vec2 xq = kf.rule.point(q);
    const auto psi = kf.fvals.row(q).head(nvf);
    Vec2 uF(psi.dot(state.face_vel.at(shared).head(nvf)),
            psi.dot(state.face_vel.at(shared).tail(nvf)));
    auto eval_elem = [&](const LocalKit& kk) {
      const VectorXd& ev = state.elem_vel[kk.elem];
      VectorXd vals(kk.R);
      kk.elem_basis.eval(xq, vals);
      return Vec2(vals.head(kk.lay.Nt).dot(ev.head(kk.lay.Nt)),
                  vals.head(kk.lay.Nt).dot(ev.tail(kk.lay.Nt)));
    };
    const Vec2 uT = eval_elem(kown), uN = eval_elem(kNbr);
    auto ws = wave_speeds(uF.dot(kf.normal), cfg.a);
    const Vec2 integrand = ws.sp * (uT - uF) - ws.sm * (uN - uF);
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < nvf; ++i)
        direct(c * nvf + i) -= kf.rule.weights(q) * integrand(c) * psi(i);
  }
  CHECK((rows - direct).lpNorm<Eigen::Infinity>() < 1e-12 * std::max(1.0, direct.norm()));
}

TEST_CASE("hll Dirichlet face pressure stationarity pins p_F to the trace") {
  Mesh mesh = build_quad_mesh(unit, 2, 2);
  SchemeConfig cfg = basic_config(SchemeKind::HLL, 2, 0.0, mesh);
  LocalKit kit = build_local_kit(mesh, 0, cfg.profile, cfg.eta);
  ElementScheme es(kit, cfg);
  std::mt19937_64 rng(77);
  VectorXd x = VectorXd::Zero(kit.lay.ndof);
  x.segment(kit.lay.off_pT, kit.lay.Nk) = random_vector(kit.lay.Nk, rng);
  // constant face velocities so the wave speeds are constant along each face
  for (size_t i = 0; i < kit.faces.size(); ++i) {
    x(kit.lay.uF(i, 0, 0)) = 0.4;
    x(kit.lay.uF(i, 1, 0)) = -0.9;
  }
  // set every face pressure to the projected element trace
  for (size_t i = 0; i < kit.faces.size(); ++i) {
    const KitFace& kf = kit.faces[i];
    const int npf = kit.lay.npf[i];
    MatrixXd mass = MatrixXd::Zero(npf, npf);
    VectorXd rhs = VectorXd::Zero(npf);
    for (int q = 0; q < kf.rule.size(); ++q) {
      const auto psi = kf.fvals.row(q).head(npf);
      const double ptrace = kf.pvals.row(q).dot(x.segment(kit.lay.off_pT, kit.lay.Nk));
      mass += kf.rule.weights(q) * psi.transpose() * psi;
      rhs += kf.rule.weights(q) * ptrace * psi.transpose();
    }
    x.segment(kit.lay.off_pF[i], npf) = mass.llt().solve(rhs);
  }
  VectorXd r;
  es.assemble(x, 0.0, r, nullptr);
  for (size_t i = 0; i < kit.faces.size(); ++i) {
    if (kit.faces[i].tag != FaceTag::Dirichlet) continue;
    CHECK(r.segment(kit.lay.off_pF[i], kit.lay.npf[i]).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("hll pressure penalty fades as 1/a") {
  std::mt19937_64 rng(15);
  Mesh mesh = apply_periodic(build_quad_mesh(unit, 2, 2), true, true);
  auto penalty_norm = [&](double a) {
    SchemeConfig cfg = basic_config(SchemeKind::HLL, 1, 0.0, mesh);
    cfg.a = a;
    cfg.finalize(mesh);
    LocalKit kit = build_local_kit(mesh, 0, cfg.profile, cfg.eta);
    ElementScheme es(kit, cfg);
    std::mt19937_64 local_rng(15);
    VectorXd x = random_vector(kit.lay.ndof, local_rng);
    VectorXd r;
    es.assemble(x, 0.0, r, nullptr);
    // subtract the a-independent linear part: what remains on the pressure
    // rows is the s+/a^2 penalty plus the (a-independent) divergence flux
    VectorXd lin = es.linear_matrix() * x + es.constant_load();
    double out = 0.0;
    out += (r - lin).segment(kit.lay.off_pT, kit.lay.Nk).norm();
    for (size_t i = 0; i < kit.faces.size(); ++i)
      out += (r - lin).segment(kit.lay.off_pF[i], kit.lay.npf[i]).norm();
    return out;
  };
  const double p1 = penalty_norm(1.0), p10 = penalty_norm(10.0), p100 = penalty_norm(100.0);
  CHECK(p1 / p10 > 5.0);
  CHECK(p10 / p100 > 5.0);
  (void)rng;
}

TEST_CASE("periodic faces assemble exactly like interior faces") {
  // element [0,1]x[0,1] with its left face periodic vs the same element with
  // the left face interior
  Mesh mp = apply_periodic(build_quad_mesh(Rect{0, 2, 0, 1}, 2, 1), true, false);
  Mesh mi = build_quad_mesh(Rect{-1, 2, 0, 1}, 3, 1);
  DegreeProfile prof = DegreeProfile::hdiv(2);
  LocalKit kp = build_local_kit(mp, 0, prof, 3.0);
  LocalKit ki = build_local_kit(mi, 1, prof, 3.0);
  REQUIRE(mp.centroid[0].x() == doctest::Approx(mi.centroid[1].x()));
  CHECK((kp.P - ki.P).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((kp.visc_scalar - ki.visc_scalar).lpNorm<Eigen::Infinity>() == 0.0);
  for (size_t i = 0; i < kp.faces.size(); ++i)
    CHECK((kp.faces[i].Rstab - ki.faces[i].Rstab).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("viscous residual scales linearly in nu") {
  Mesh mesh = build_tri_mesh(unit, 2, 2);
  std::mt19937_64 rng(21);
  for (SchemeKind kind : {SchemeKind::Hdiv, SchemeKind::HLL}) {
    auto residual_at = [&](double nu, const VectorXd& x) {
      SchemeConfig cfg = basic_config(kind, 1, nu, mesh);
      cfg.bc.velocity = [](Vec2 p) { return Vec2(p.y(), p.x()); };
      cfg.finalize(mesh);
      LocalKit kit = build_local_kit(mesh, 0, cfg.profile, cfg.eta);
      ElementScheme es(kit, cfg);
      VectorXd r;
      es.assemble(x, 0.0, r, nullptr);
      return r;
    };
    SchemeConfig probe = basic_config(kind, 1, 1.0, mesh);
    LocalKit kit = build_local_kit(mesh, 0, probe.profile, probe.eta);
    VectorXd x = random_vector(kit.lay.ndof, rng);
    VectorXd r0 = residual_at(0.0, x), r1 = residual_at(1.0, x), r2 = residual_at(2.0, x);
    CHECK(((r2 - r0) - 2.0 * (r1 - r0)).lpNorm<Eigen::Infinity>() <
          1e-13 * std::max(1.0, r1.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("config validation") {
  Mesh mesh = build_quad_mesh(unit, 2, 2);
  SUBCASE("given mode requires hll") {
    SchemeConfig cfg;
    cfg.scheme = SchemeKind::Hdiv;
    cfg.bc.given = true;
    cfg.bc.velocity = [](Vec2) { return Vec2(0, 0); };
    cfg.bc.traction = [](Vec2, Vec2) { return Vec2(0, 0); };
    CHECK_THROWS(cfg.finalize(mesh));
  }
  SUBCASE("gauge is forced on all-Dirichlet meshes") {
    SchemeConfig cfg = basic_config(SchemeKind::Hdiv, 1, 1.0, mesh);
    CHECK(cfg.gauge == Gauge::ZeroMeanPressure);
  }
  SUBCASE("a traction side suppresses the gauge") {
    Mesh m = mesh;
    tag_boundary(m, [](const Vec2&, const Vec2& n) -> std::optional<FaceTag> {
      return n.x() > 0.5 ? FaceTag::Neumann : FaceTag::Dirichlet;
    });
    SchemeConfig cfg = basic_config(SchemeKind::Hdiv, 1, 1.0, m);
    CHECK(cfg.gauge == Gauge::None);
  }
  SUBCASE("negative viscosity rejected") {
    SchemeConfig cfg;
    cfg.nu = -1.0;
    cfg.bc.velocity = [](Vec2) { return Vec2(0, 0); };
    CHECK_THROWS(cfg.finalize(mesh));
  }
}
