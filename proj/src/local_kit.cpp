#include "hhoflow/local_kit.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace hhoflow {

int default_quad_order(const DegreeProfile& prof) {
  // 2(k+2) covers every bilinear pairing; 3(k+1) the convective trilinears.
  return std::max(2 * (prof.k + 2), 3 * (prof.k + 1));
}

void LocalKit::add_lifted(const MatrixXd& scal, double factor, MatrixXd& target) const {
  const int ns = lay.ns;
  for (int c = 0; c < 2; ++c)
    for (int a = 0; a < ns; ++a) {
      const int ia = lay.vel_dof(c, a);
      for (int b = 0; b < ns; ++b) target(ia, lay.vel_dof(c, b)) += factor * scal(a, b);
    }
}

namespace {

Eigen::LLT<MatrixXd> checked_llt(const MatrixXd& m, int elem, const char* what) {
  Eigen::LLT<MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error(std::string(what) + ": singular local system on element " +
                             std::to_string(elem) + " (corrupt geometry?)");
  return llt;
}

MatrixXd refined_solve(const Eigen::LLT<MatrixXd>& llt, const MatrixXd& m, const MatrixXd& rhs) {
  MatrixXd x = llt.solve(rhs);
  x += llt.solve(rhs - m * x);
  return x;
}

}  // namespace

LocalKit build_local_kit(const Mesh& mesh, int elem, const DegreeProfile& prof, double eta,
                         int quad_order) {
  LocalKit kit;
  kit.elem = elem;
  kit.prof = prof;
  kit.area = mesh.area[elem];
  kit.hT = mesh.h_T[elem];
  // eta as given is scaled by the usual (k+1)^2 degree factor; the literal
  // weight fails the discrete trace inequality from k = 1 on.
  kit.eta_eff = eta * (prof.k + 1) * (prof.k + 1);
  const int order = quad_order > 0 ? quad_order : default_quad_order(prof);

  const auto& efaces = mesh.element_faces[elem];
  const int nf = static_cast<int>(efaces.size());

  LocalLayout& lay = kit.lay;
  lay.Nt = poly_dim_2d(prof.t);
  lay.Nk = poly_dim_2d(prof.k);
  lay.nvf.resize(nf);
  lay.npf.resize(nf);
  for (int i = 0; i < nf; ++i) {
    const FaceTag tag = mesh.faces[efaces[i].face].tag;
    lay.nvf[i] = prof.face_velocity_degree(tag) + 1;
    lay.npf[i] = prof.p + 1;
  }
  lay.off_pT = 2 * lay.Nt;
  lay.off_uF.resize(nf);
  lay.off_pF.resize(nf);
  int off = lay.off_pT + lay.Nk;
  for (int i = 0; i < nf; ++i) {
    lay.off_uF[i] = off;
    off += 2 * lay.nvf[i];
  }
  for (int i = 0; i < nf; ++i) {
    lay.off_pF[i] = off;
    off += lay.npf[i];
  }
  lay.ndof = off;
  lay.ns = lay.Nt;
  for (int i = 0; i < nf; ++i) lay.ns += lay.nvf[i];

  kit.R = poly_dim_2d(prof.k + 1);
  const int R = kit.R;
  const int ns = lay.ns;

  // Element bases and volume caches
  kit.elem_basis = ScalarBasis(mesh.centroid[elem], kit.hT, prof.k + 1);
  kit.erule = cell_rule(mesh.element_loop(elem), order);
  const int nq = kit.erule.size();
  kit.evals.resize(nq, R);
  kit.egx.resize(nq, R);
  kit.egy.resize(nq, R);
  {
    VectorXd v(R);
    MatrixXd gx(R, 1), gy(R, 1);
    for (int q = 0; q < nq; ++q) {
      kit.elem_basis.eval(kit.erule.point(q), v);
      kit.evals.row(q) = v.transpose();
      kit.elem_basis.eval_grad(kit.erule.point(q), gx, gy);
      kit.egx.row(q) = gx.col(0).transpose();
      kit.egy.row(q) = gy.col(0).transpose();
    }
  }
  kit.pres_basis = ScalarBasis(mesh.centroid[elem], kit.hT, prof.k);
  kit.pres_basis.make_mean_free(kit.erule);
  kit.pvals.resize(nq, lay.Nk);
  {
    VectorXd v(lay.Nk);
    for (int q = 0; q < nq; ++q) {
      kit.pres_basis.eval(kit.erule.point(q), v);
      kit.pvals.row(q) = v.transpose();
    }
  }

  kit.em_mass = MatrixXd::Zero(R, R);
  kit.Krec = MatrixXd::Zero(R, R);
  kit.mu = VectorXd::Zero(R);
  for (int q = 0; q < nq; ++q) {
    const double w = kit.erule.weights(q);
    kit.em_mass.noalias() += w * kit.evals.row(q).transpose() * kit.evals.row(q);
    kit.Krec.noalias() += w * kit.egx.row(q).transpose() * kit.egx.row(q);
    kit.Krec.noalias() += w * kit.egy.row(q).transpose() * kit.egy.row(q);
    kit.mu += w * kit.evals.row(q).transpose();
  }
  kit.mass_t = kit.em_mass.topLeftCorner(lay.Nt, lay.Nt);

  // Face caches
  kit.faces.resize(nf);
  for (int i = 0; i < nf; ++i) {
    KitFace& kf = kit.faces[i];
    const ElementFace& ef = efaces[i];
    const Face& fc = mesh.faces[ef.face];
    kf.face_id = ef.face;
    kf.dof_face = mesh.dof_face(ef.face);
    kf.tag = fc.tag;
    kf.h = fc.h;
    kf.normal = ef.normal;
    kf.shift = ef.shift;

    const int dv = prof.face_velocity_degree(fc.tag);
    const int qd = std::max(prof.t, dv);
    const int fb_deg = std::max(qd, prof.p);

    // Owner-frame segment for the basis; own-frame segment for the points.
    // Endpoints are ordered lexicographically so that any element seeing the
    // face (or its periodic image) builds the same parametrization.
    auto [oa, ob] = mesh.face_endpoints(kf.dof_face);
    if (std::make_pair(ob.x(), ob.y()) < std::make_pair(oa.x(), oa.y())) std::swap(oa, ob);
    kf.basis = FaceBasis(oa, ob, fb_deg);
    auto [a, b] = mesh.face_endpoints(ef.face);
    if (std::make_pair(b.x(), b.y()) < std::make_pair(a.x(), a.y())) std::swap(a, b);
    kf.rule = segment_rule(a, b, order);
    const int fq = kf.rule.size();

    kf.fvals.resize(fq, fb_deg + 1);
    kf.evals.resize(fq, R);
    kf.egn.resize(fq, R);
    kf.pvals.resize(fq, lay.Nk);
    VectorXd v(fb_deg + 1), pv(lay.Nk), ev(R);
    MatrixXd gx(R, 1), gy(R, 1);
    for (int q = 0; q < fq; ++q) {
      const Vec2 x = kf.rule.point(q);
      kf.basis.eval(x + kf.shift, v);  // owner frame
      kf.fvals.row(q) = v.transpose();
      kit.elem_basis.eval(x, ev);
      kf.evals.row(q) = ev.transpose();
      kit.elem_basis.eval_grad(x, gx, gy);
      kf.egn.row(q) = (kf.normal.x() * gx.col(0) + kf.normal.y() * gy.col(0)).transpose();
      kit.pres_basis.eval(x, pv);
      kf.pvals.row(q) = pv.transpose();
    }
  }

  // Potential reconstruction: gradient variational identity on the
  // non-constant reconstruction modes plus the mean closure.
  {
    MatrixXd lhs = kit.Krec.bottomRightCorner(R - 1, R - 1);
    MatrixXd rhs = MatrixXd::Zero(R - 1, ns);
    rhs.leftCols(lay.Nt) = kit.Krec.block(1, 0, R - 1, lay.Nt);
    for (int i = 0; i < nf; ++i) {
      const KitFace& kf = kit.faces[i];
      const int nvf = lay.nvf[i];
      const int col0 = lay.scal_uF(i, 0);
      for (int q = 0; q < kf.rule.size(); ++q) {
        const double w = kf.rule.weights(q);
        const auto dn = kf.egn.row(q).tail(R - 1);
        rhs.block(0, col0, R - 1, nvf).noalias() +=
            w * dn.transpose() * kf.fvals.row(q).head(nvf);
        rhs.leftCols(lay.Nt).noalias() -= w * dn.transpose() * kf.evals.row(q).head(lay.Nt);
      }
    }
    auto llt = checked_llt(lhs, elem, "potential_reconstruction");
    MatrixXd body = refined_solve(llt, lhs, rhs);
    kit.P.resize(R, ns);
    kit.P.bottomRows(R - 1) = body;
    // mean closure: the reconstruction integrates to the integral of v_T
    Eigen::RowVectorXd row = -kit.mu.tail(R - 1).transpose() * body;
    row.head(lay.Nt) += kit.mu.head(lay.Nt).transpose();
    kit.P.row(0) = row / kit.mu(0);
  }

  // Stabilization residuals and the scalar viscous kernel
  kit.visc_scalar = MatrixXd::Zero(ns, ns);
  kit.visc_scalar.noalias() += kit.P.transpose() * kit.Krec * kit.P;
  {
    auto llt_t = checked_llt(kit.mass_t, elem, "stabilization");
    // element residual pi_T^t(v_T - reconstruction)
    MatrixXd W =
        -refined_solve(llt_t, kit.mass_t, MatrixXd(kit.em_mass.topRows(lay.Nt) * kit.P));
    W.leftCols(lay.Nt) += MatrixXd::Identity(lay.Nt, lay.Nt);

    for (int i = 0; i < nf; ++i) {
      KitFace& kf = kit.faces[i];
      const int nvf = lay.nvf[i];
      const int qd1 = std::max(prof.t, nvf - 1) + 1;
      const int col0 = lay.scal_uF(i, 0);
      const int fq = kf.rule.size();

      MatrixXd Mq = MatrixXd::Zero(qd1, qd1);
      MatrixXd T_fR = MatrixXd::Zero(qd1, R);  // <psi_j, phi_r>
      MatrixXd T_gn = MatrixXd::Zero(nvf, R);  // <psi_j, d_n phi_r>
      for (int q = 0; q < fq; ++q) {
        const double w = kf.rule.weights(q);
        const auto psi = kf.fvals.row(q).head(qd1);
        Mq.noalias() += w * psi.transpose() * psi;
        T_fR.noalias() += w * psi.transpose() * kf.evals.row(q);
        T_gn.noalias() += w * kf.fvals.row(q).head(nvf).transpose() * kf.egn.row(q);
      }
      kf.Mv = Mq.topLeftCorner(nvf, nvf);
      kf.Mstab = Mq;
      kf.Gn = T_gn * kit.P;

      auto llt_v = checked_llt(kf.Mv, elem, "stabilization");
      auto llt_q = checked_llt(Mq, elem, "stabilization");

      // face residual pi_F^dv(v_F - reconstruction), embedded in degree qd
      MatrixXd face_part = -refined_solve(llt_v, kf.Mv, MatrixXd(T_fR.topRows(nvf) * kit.P));
      face_part.block(0, col0, nvf, nvf) += MatrixXd::Identity(nvf, nvf);
      // element residual traced onto the face (exact: qd >= t)
      MatrixXd elem_part = refined_solve(llt_q, Mq, MatrixXd(T_fR.leftCols(lay.Nt) * W));
      kf.Rstab = -elem_part;
      kf.Rstab.topRows(nvf) += face_part;

      kit.visc_scalar.noalias() += (1.0 / kf.h) * kf.Rstab.transpose() * Mq * kf.Rstab;

      if (kf.tag == FaceTag::Dirichlet) {
        // weak Dirichlet closure: symmetric consistency plus the penalty
        MatrixXd E = MatrixXd::Zero(nvf, ns);
        E.block(0, col0, nvf, nvf) = MatrixXd::Identity(nvf, nvf);
        kit.visc_scalar.noalias() -= E.transpose() * kf.Gn + kf.Gn.transpose() * E;
        kit.visc_scalar.noalias() += (kit.eta_eff / kf.h) * E.transpose() * kf.Mv * E;
      }
    }
  }

  return kit;
}

VectorXd interpolate_velocity(const LocalKit& kit, const std::function<Vec2(Vec2)>& u) {
  const LocalLayout& lay = kit.lay;
  VectorXd out = VectorXd::Zero(2 * lay.ns);
  {
    Eigen::LLT<MatrixXd> llt(kit.mass_t);
    MatrixXd rhs = MatrixXd::Zero(lay.Nt, 2);
    for (int q = 0; q < kit.erule.size(); ++q) {
      const Vec2 val = u(kit.erule.point(q));
      rhs.noalias() +=
          kit.erule.weights(q) * kit.evals.row(q).head(lay.Nt).transpose() * val.transpose();
    }
    MatrixXd sol = refined_solve(llt, kit.mass_t, rhs);
    out.segment(0, lay.Nt) = sol.col(0);
    out.segment(lay.Nt, lay.Nt) = sol.col(1);
  }
  int off = 2 * lay.Nt;
  for (size_t i = 0; i < kit.faces.size(); ++i) {
    const KitFace& kf = kit.faces[i];
    const int nvf = lay.nvf[i];
    MatrixXd rhs = MatrixXd::Zero(nvf, 2);
    for (int q = 0; q < kf.rule.size(); ++q) {
      const Vec2 val = u(kf.rule.point(q));
      rhs.noalias() += kf.rule.weights(q) * kf.fvals.row(q).head(nvf).transpose() * val.transpose();
    }
    Eigen::LLT<MatrixXd> llt(kf.Mv);
    MatrixXd sol = refined_solve(llt, kf.Mv, rhs);
    out.segment(off, nvf) = sol.col(0);
    out.segment(off + nvf, nvf) = sol.col(1);
    off += 2 * nvf;
  }
  return out;
}

VectorXd interpolate_pressure(const LocalKit& kit, const std::function<double(Vec2)>& p) {
  const LocalLayout& lay = kit.lay;
  int total = lay.Nk;
  for (int n : lay.npf) total += n;
  VectorXd out = VectorXd::Zero(total);
  {
    MatrixXd mass = MatrixXd::Zero(lay.Nk, lay.Nk);
    VectorXd rhs = VectorXd::Zero(lay.Nk);
    for (int q = 0; q < kit.erule.size(); ++q) {
      const double w = kit.erule.weights(q);
      mass.noalias() += w * kit.pvals.row(q).transpose() * kit.pvals.row(q);
      rhs += w * p(kit.erule.point(q)) * kit.pvals.row(q).transpose();
    }
    Eigen::LLT<MatrixXd> llt(mass);
    out.head(lay.Nk) = refined_solve(llt, mass, MatrixXd(rhs));
  }
  int off = lay.Nk;
  for (size_t i = 0; i < kit.faces.size(); ++i) {
    const KitFace& kf = kit.faces[i];
    const int npf = lay.npf[i];
    MatrixXd mass = MatrixXd::Zero(npf, npf);
    VectorXd rhs = VectorXd::Zero(npf);
    for (int q = 0; q < kf.rule.size(); ++q) {
      const double w = kf.rule.weights(q);
      const auto psi = kf.fvals.row(q).head(npf);
      mass.noalias() += w * psi.transpose() * psi;
      rhs += w * p(kf.rule.point(q)) * psi.transpose();
    }
    Eigen::LLT<MatrixXd> llt(mass);
    out.segment(off, npf) = refined_solve(llt, mass, MatrixXd(rhs));
    off += npf;
  }
  return out;
}

VectorXd assemble_local_state(const LocalKit& kit, const VectorXd& vel, const VectorXd& pres) {
  const LocalLayout& lay = kit.lay;
  VectorXd x = VectorXd::Zero(lay.ndof);
  x.segment(0, 2 * lay.Nt) = vel.head(2 * lay.Nt);
  int voff = 2 * lay.Nt;
  for (size_t i = 0; i < kit.faces.size(); ++i) {
    x.segment(lay.off_uF[i], 2 * lay.nvf[i]) = vel.segment(voff, 2 * lay.nvf[i]);
    voff += 2 * lay.nvf[i];
  }
  x.segment(lay.off_pT, lay.Nk) = pres.head(lay.Nk);
  int poff = lay.Nk;
  for (size_t i = 0; i < kit.faces.size(); ++i) {
    x.segment(lay.off_pF[i], lay.npf[i]) = pres.segment(poff, lay.npf[i]);
    poff += lay.npf[i];
  }
  return x;
}

}  // namespace hhoflow
