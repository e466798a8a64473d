#include "hhoflow/scheme.hpp"

#include <cmath>

namespace hhoflow {

const char* to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::Hdiv: return "hdiv";
    case SchemeKind::DivFree: return "divfree";
    case SchemeKind::HLL: return "hll";
  }
  return "?";
}

WaveSpeeds wave_speeds(double q, double a) {
  const double root = std::sqrt(q * q + 4.0 * a * a);
  WaveSpeeds ws;
  // large root directly, small root from the product s+ s- = -a^2; the
  // subtracted form cancels catastrophically once |q| >> a
  if (q >= 0.0) {
    ws.sp = 0.5 * (q + root);
    ws.sm = -(a * a) / ws.sp;
  } else {
    ws.sm = 0.5 * (q - root);
    ws.sp = -(a * a) / ws.sm;
  }
  ws.dsp = 0.5 * (1.0 + q / root);
  ws.dsm = 0.5 * (1.0 - q / root);
  return ws;
}

void SchemeConfig::finalize(const Mesh& mesh) {
  if (k < 0) throw std::invalid_argument("scheme: polynomial degree k must be >= 0");
  if (nu < 0.0) throw std::invalid_argument("scheme: viscosity must be nonnegative");
  switch (scheme) {
    case SchemeKind::Hdiv: profile = DegreeProfile::hdiv(k); break;
    case SchemeKind::DivFree: profile = DegreeProfile::divfree(k); break;
    case SchemeKind::HLL: profile = DegreeProfile::hll(k); break;
  }
  if (scheme == SchemeKind::HLL && a <= 0.0)
    throw std::invalid_argument("scheme: artificial compressibility a must be positive for hll");
  if (bc.given && scheme != SchemeKind::HLL)
    throw std::invalid_argument("scheme: given boundary conditions require the hll scheme");
  const bool has_neumann = mesh.has_tag(FaceTag::Neumann);
  const bool has_dirichlet = mesh.has_tag(FaceTag::Dirichlet);
  if (has_dirichlet && !bc.velocity)
    throw std::invalid_argument("scheme: Dirichlet faces present but no velocity data");
  if ((has_neumann || bc.given) && !bc.traction)
    throw std::invalid_argument("scheme: traction data required (Neumann faces or given mode)");
  // The pressure level is pinned by traction data; otherwise fix the gauge.
  gauge = (has_neumann || bc.given) ? Gauge::None : Gauge::ZeroMeanPressure;
}

ElementScheme::ElementScheme(const LocalKit& kit, const SchemeConfig& cfg)
    : kit_(&kit), cfg_(&cfg) {
  const LocalLayout& lay = kit.lay;
  A_lin_ = MatrixXd::Zero(lay.ndof, lay.ndof);
  b_const_ = VectorXd::Zero(lay.ndof);
  mass_time_ = MatrixXd::Zero(2 * lay.Nt, 2 * lay.Nt);
  mass_time_.topLeftCorner(lay.Nt, lay.Nt) = kit.mass_t;
  mass_time_.bottomRightCorner(lay.Nt, lay.Nt) = kit.mass_t;

  kit.add_lifted(kit.visc_scalar, cfg.nu, A_lin_);

  // nu (n . grad(reconstruction)) . n sampled at face quadrature points, with
  // columns over local dofs; feeds the hll pressure-trace relaxation.
  if (cfg.scheme == SchemeKind::HLL) {
    visc_trace_.resize(kit.faces.size());
    for (size_t i = 0; i < kit.faces.size(); ++i) {
      const KitFace& kf = kit.faces[i];
      const bool relax =
          kf.tag == FaceTag::Neumann || (cfg.bc.given && kf.tag == FaceTag::Dirichlet);
      if (!relax) continue;
      const int fq = kf.rule.size();
      MatrixXd m = MatrixXd::Zero(fq, lay.ndof);
      for (int q = 0; q < fq; ++q) {
        Eigen::RowVectorXd gp = kf.egn.row(q) * kit.P;
        for (int c = 0; c < 2; ++c)
          for (int s = 0; s < lay.ns; ++s)
            m(q, lay.vel_dof(c, s)) = cfg.nu * kf.normal(c) * gp(s);
      }
      visc_trace_[i] = std::move(m);
    }
  }

  if (cfg.scheme == SchemeKind::HLL)
    build_linear_hll();
  else
    build_linear_hdiv();
}

void ElementScheme::build_linear_hdiv() {
  const LocalKit& kit = *kit_;
  const LocalLayout& lay = kit.lay;
  const int Nt = lay.Nt, Nk = lay.Nk;

  // -int p_T (div v_T) and its continuity mirror -int (div u_T) q_T
  for (int q = 0; q < kit.erule.size(); ++q) {
    const double w = kit.erule.weights(q);
    const auto gx = kit.egx.row(q).head(Nt);
    const auto gy = kit.egy.row(q).head(Nt);
    const auto pi = kit.pvals.row(q);
    for (int j = 0; j < Nk; ++j) {
      const double wpij = w * pi(j);
      for (int i = 0; i < Nt; ++i) {
        A_lin_(lay.uT(0, i), lay.pT(j)) -= wpij * gx(i);
        A_lin_(lay.uT(1, i), lay.pT(j)) -= wpij * gy(i);
        A_lin_(lay.pT(j), lay.uT(0, i)) -= wpij * gx(i);
        A_lin_(lay.pT(j), lay.uT(1, i)) -= wpij * gy(i);
      }
    }
  }

  for (size_t f = 0; f < kit.faces.size(); ++f) {
    const KitFace& kf = kit.faces[f];
    const int nvf = lay.nvf[f], npf = lay.npf[f];
    const Vec2 n = kf.normal;
    const bool dirichlet = kf.tag == FaceTag::Dirichlet;
    for (int q = 0; q < kf.rule.size(); ++q) {
      const double w = kf.rule.weights(q);
      const auto phit = kf.evals.row(q).head(Nt);
      const auto psiv = kf.fvals.row(q).head(nvf);
      const auto psip = kf.fvals.row(q).head(npf);
      const Vec2 x = kf.rule.point(q);

      for (int j = 0; j < npf; ++j) {
        const double wp = w * psip(j);
        for (int c = 0; c < 2; ++c) {
          // momentum: + p_F (v_T - v_F) . n, with + p_F v_F . n added on
          // Dirichlet faces (net: the v_F part drops there)
          for (int i = 0; i < Nt; ++i) A_lin_(lay.uT(c, i), lay.pF(f, j)) += wp * n(c) * phit(i);
          if (!dirichlet)
            for (int i = 0; i < nvf; ++i)
              A_lin_(lay.uF(f, c, i), lay.pF(f, j)) -= wp * n(c) * psiv(i);
          // continuity: + (u_T - u_F) . n q_F, with + u_F . n q_F on Dirichlet
          for (int i = 0; i < Nt; ++i) A_lin_(lay.pF(f, j), lay.uT(c, i)) += wp * n(c) * phit(i);
          if (!dirichlet)
            for (int i = 0; i < nvf; ++i)
              A_lin_(lay.pF(f, j), lay.uF(f, c, i)) -= wp * n(c) * psiv(i);
        }
      }

      if (dirichlet) {
        const Vec2 gD = cfg_->bc.velocity(x);
        // continuity load: the Dirichlet terms collapse to (u_T - g_D) . n q_F
        for (int j = 0; j < npf; ++j) b_const_(lay.pF(f, j)) -= w * psip(j) * gD.dot(n);
        // momentum load: - g_D . (nu d_n(reconstruction of v) + eta_eff nu / h v_F)
        Eigen::RowVectorXd gp = kf.egn.row(q) * kit.P;
        for (int c = 0; c < 2; ++c) {
          const double g = gD(c);
          for (int s = 0; s < lay.ns; ++s)
            b_const_(lay.vel_dof(c, s)) -= w * g * cfg_->nu * gp(s);
          for (int i = 0; i < nvf; ++i)
            b_const_(lay.uF(f, c, i)) -= w * g * (kit.eta_eff * cfg_->nu / kf.h) * psiv(i);
        }
      }
      if (kf.tag == FaceTag::Neumann) {
        // traction load, signed so that the exact solution annihilates the
        // v_F rows: the viscous and pressure face terms contribute -g_N
        // there (reconstruction adjoint identity + p_F (v_T - v_F) . n)
        const Vec2 gN = cfg_->bc.traction(x, n);
        for (int c = 0; c < 2; ++c)
          for (int i = 0; i < nvf; ++i) b_const_(lay.uF(f, c, i)) += w * gN(c) * psiv(i);
      }
    }
  }
}

void ElementScheme::build_linear_hll() {
  const LocalKit& kit = *kit_;
  const LocalLayout& lay = kit.lay;
  const int Nt = lay.Nt, Nk = lay.Nk;

  // momentum: -int p_T (div v_T); continuity: -int u_T . grad q_T
  for (int q = 0; q < kit.erule.size(); ++q) {
    const double w = kit.erule.weights(q);
    const auto gx = kit.egx.row(q).head(Nt);
    const auto gy = kit.egy.row(q).head(Nt);
    const auto phit = kit.evals.row(q).head(Nt);
    const auto pi = kit.pvals.row(q);
    // pressure-basis gradients coincide with the scalar family's
    const auto pgx = kit.egx.row(q).head(Nk);
    const auto pgy = kit.egy.row(q).head(Nk);
    for (int j = 0; j < Nk; ++j) {
      const double wpij = w * pi(j);
      for (int i = 0; i < Nt; ++i) {
        A_lin_(lay.uT(0, i), lay.pT(j)) -= wpij * gx(i);
        A_lin_(lay.uT(1, i), lay.pT(j)) -= wpij * gy(i);
        A_lin_(lay.pT(j), lay.uT(0, i)) -= w * pgx(j) * phit(i);
        A_lin_(lay.pT(j), lay.uT(1, i)) -= w * pgy(j) * phit(i);
      }
    }
  }

  for (size_t f = 0; f < kit.faces.size(); ++f) {
    const KitFace& kf = kit.faces[f];
    const int nvf = lay.nvf[f], npf = lay.npf[f];
    const Vec2 n = kf.normal;
    for (int q = 0; q < kf.rule.size(); ++q) {
      const double w = kf.rule.weights(q);
      const auto phit = kf.evals.row(q).head(Nt);
      const auto psiv = kf.fvals.row(q).head(nvf);
      const auto psip = kf.fvals.row(q).head(npf);
      const auto pit = kf.pvals.row(q);
      const Vec2 x = kf.rule.point(q);

      // momentum: + p_F v_T . n and continuity: + (u_F . n) q_T, on every face
      for (int j = 0; j < npf; ++j)
        for (int c = 0; c < 2; ++c)
          for (int i = 0; i < Nt; ++i)
            A_lin_(lay.uT(c, i), lay.pF(f, j)) += w * psip(j) * n(c) * phit(i);
      for (int j = 0; j < Nk; ++j)
        for (int c = 0; c < 2; ++c)
          for (int i = 0; i < nvf; ++i)
            A_lin_(lay.pT(j), lay.uF(f, c, i)) += w * pit(j) * n(c) * psiv(i);

      if (kf.tag == FaceTag::Dirichlet) {
        // weak viscous Dirichlet load, as in the H-div scheme
        const Vec2 gD = cfg_->bc.velocity(x);
        Eigen::RowVectorXd gp = kf.egn.row(q) * kit.P;
        for (int c = 0; c < 2; ++c) {
          const double g = gD(c);
          for (int s = 0; s < lay.ns; ++s)
            b_const_(lay.vel_dof(c, s)) -= w * g * cfg_->nu * gp(s);
          for (int i = 0; i < nvf; ++i)
            b_const_(lay.uF(f, c, i)) -= w * g * (kit.eta_eff * cfg_->nu / kf.h) * psiv(i);
        }
      }
      if (kf.tag == FaceTag::Neumann) {
        // momentum traction relaxation (g_N - p_F n) . v_F, signed so the
        // exact state annihilates the v_F rows against the viscous adjoint
        const Vec2 gN = cfg_->bc.traction(x, n);
        for (int c = 0; c < 2; ++c) {
          for (int i = 0; i < nvf; ++i) b_const_(lay.uF(f, c, i)) += w * gN(c) * psiv(i);
          for (int j = 0; j < npf; ++j)
            for (int i = 0; i < nvf; ++i)
              A_lin_(lay.uF(f, c, i), lay.pF(f, j)) -= w * psip(j) * n(c) * psiv(i);
        }
      }
    }
  }
}

void ElementScheme::assemble(const VectorXd& x, double t, VectorXd& r, MatrixXd* J) const {
  const LocalLayout& lay = kit_->lay;
  r.noalias() = A_lin_ * x;
  r += b_const_;
  if (J) *J = A_lin_;

  if (cfg_->forcing) {
    for (int q = 0; q < kit_->erule.size(); ++q) {
      const double w = kit_->erule.weights(q);
      const Vec2 fx = cfg_->forcing(kit_->erule.point(q), t);
      const auto phit = kit_->evals.row(q).head(lay.Nt);
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < lay.Nt; ++i) r(lay.uT(c, i)) -= w * fx(c) * phit(i);
    }
  }

  if (cfg_->scheme == SchemeKind::HLL)
    add_flux_hll(x, r, J);
  else if (cfg_->convection)
    add_convective_hdiv(x, r, J);
}

void ElementScheme::add_convective_hdiv(const VectorXd& x, VectorXd& r, MatrixXd* J) const {
  const LocalKit& kit = *kit_;
  const LocalLayout& lay = kit.lay;
  const int Nt = lay.Nt;
  const auto xu0 = x.segment(lay.uT(0, 0), Nt);
  const auto xu1 = x.segment(lay.uT(1, 0), Nt);

  // Temam split: 1/2 (u . grad u) . v_T - 1/2 (u x u) : grad v_T
  for (int q = 0; q < kit.erule.size(); ++q) {
    const double w = 0.5 * kit.erule.weights(q);
    const auto phi = kit.evals.row(q).head(Nt);
    const auto gx = kit.egx.row(q).head(Nt);
    const auto gy = kit.egy.row(q).head(Nt);
    const double u0 = phi.dot(xu0), u1 = phi.dot(xu1);
    const double g00 = gx.dot(xu0), g01 = gy.dot(xu0);
    const double g10 = gx.dot(xu1), g11 = gy.dot(xu1);
    const double adv0 = u0 * g00 + u1 * g01;
    const double adv1 = u0 * g10 + u1 * g11;
    for (int i = 0; i < Nt; ++i) {
      const double udg = u0 * gx(i) + u1 * gy(i);
      r(lay.uT(0, i)) += w * (adv0 * phi(i) - u0 * udg);
      r(lay.uT(1, i)) += w * (adv1 * phi(i) - u1 * udg);
    }
    if (J) {
      for (int i = 0; i < Nt; ++i) {
        const double udg = u0 * gx(i) + u1 * gy(i);
        for (int jj = 0; jj < Nt; ++jj) {
          const double udgj = u0 * gx(jj) + u1 * gy(jj);
          (*J)(lay.uT(0, i), lay.uT(0, jj)) +=
              w * (phi(i) * (phi(jj) * g00 + udgj) - phi(jj) * udg - u0 * phi(jj) * gx(i));
          (*J)(lay.uT(0, i), lay.uT(1, jj)) +=
              w * (phi(i) * phi(jj) * g01 - u0 * phi(jj) * gy(i));
          (*J)(lay.uT(1, i), lay.uT(0, jj)) +=
              w * (phi(i) * phi(jj) * g10 - u1 * phi(jj) * gx(i));
          (*J)(lay.uT(1, i), lay.uT(1, jj)) +=
              w * (phi(i) * (phi(jj) * g11 + udgj) - phi(jj) * udg - u1 * phi(jj) * gy(i));
        }
      }
    }
  }

  for (size_t f = 0; f < kit.faces.size(); ++f) {
    const KitFace& kf = kit.faces[f];
    const int nvf = lay.nvf[f];
    const Vec2 n = kf.normal;
    const auto xf0 = x.segment(lay.uF(f, 0, 0), nvf);
    const auto xf1 = x.segment(lay.uF(f, 1, 0), nvf);
    for (int q = 0; q < kf.rule.size(); ++q) {
      const double w = 0.5 * kf.rule.weights(q);
      const auto phit = kf.evals.row(q).head(Nt);
      const auto psi = kf.fvals.row(q).head(nvf);
      const Vec2 uF(psi.dot(xf0), psi.dot(xf1));
      const Vec2 uT(phit.dot(xu0), phit.dot(xu1));
      const double qn = uF.dot(n);

      // 1/2 (u_F . n)(u_F . v_T - u_T . v_F)
      for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < Nt; ++i) r(lay.uT(c, i)) += w * qn * uF(c) * phit(i);
        for (int i = 0; i < nvf; ++i) r(lay.uF(f, c, i)) -= w * qn * uT(c) * psi(i);
      }
      if (J) {
        for (int c = 0; c < 2; ++c) {
          for (int cp = 0; cp < 2; ++cp)
            for (int jj = 0; jj < nvf; ++jj) {
              const double dqn = n(cp) * psi(jj);
              for (int i = 0; i < Nt; ++i)
                (*J)(lay.uT(c, i), lay.uF(f, cp, jj)) +=
                    w * phit(i) * (dqn * uF(c) + (c == cp ? qn * psi(jj) : 0.0));
              for (int i = 0; i < nvf; ++i)
                (*J)(lay.uF(f, c, i), lay.uF(f, cp, jj)) -= w * psi(i) * dqn * uT(c);
            }
          for (int jj = 0; jj < Nt; ++jj)
            for (int i = 0; i < nvf; ++i)
              (*J)(lay.uF(f, c, i), lay.uT(c, jj)) -= w * psi(i) * qn * phit(jj);
        }
      }

      if (kf.tag == FaceTag::Dirichlet) {
        // + 1/2 (u_F . n) g_D . v_F
        const Vec2 gD = cfg_->bc.velocity(kf.rule.point(q));
        for (int c = 0; c < 2; ++c)
          for (int i = 0; i < nvf; ++i) r(lay.uF(f, c, i)) += w * qn * gD(c) * psi(i);
        if (J)
          for (int c = 0; c < 2; ++c)
            for (int cp = 0; cp < 2; ++cp)
              for (int jj = 0; jj < nvf; ++jj)
                for (int i = 0; i < nvf; ++i)
                  (*J)(lay.uF(f, c, i), lay.uF(f, cp, jj)) += w * psi(i) * gD(c) * n(cp) * psi(jj);
      }
      if (kf.tag == FaceTag::Neumann) {
        // + 1/2 (u_F . n) u_T . v_F
        for (int c = 0; c < 2; ++c)
          for (int i = 0; i < nvf; ++i) r(lay.uF(f, c, i)) += w * qn * uT(c) * psi(i);
        if (J) {
          for (int c = 0; c < 2; ++c) {
            for (int cp = 0; cp < 2; ++cp)
              for (int jj = 0; jj < nvf; ++jj)
                for (int i = 0; i < nvf; ++i)
                  (*J)(lay.uF(f, c, i), lay.uF(f, cp, jj)) += w * psi(i) * uT(c) * n(cp) * psi(jj);
            for (int jj = 0; jj < Nt; ++jj)
              for (int i = 0; i < nvf; ++i)
                (*J)(lay.uF(f, c, i), lay.uT(c, jj)) += w * psi(i) * qn * phit(jj);
          }
        }
      }
    }
  }
}

void ElementScheme::add_flux_hll(const VectorXd& x, VectorXd& r, MatrixXd* J) const {
  const LocalKit& kit = *kit_;
  const LocalLayout& lay = kit.lay;
  const int Nt = lay.Nt, Nk = lay.Nk;
  const double a2 = cfg_->a * cfg_->a;
  const auto xu0 = x.segment(lay.uT(0, 0), Nt);
  const auto xu1 = x.segment(lay.uT(1, 0), Nt);
  const auto xp = x.segment(lay.off_pT, Nk);

  // volume convection: - (u x u) : grad v_T
  for (int q = 0; q < kit.erule.size(); ++q) {
    const double w = kit.erule.weights(q);
    const auto phi = kit.evals.row(q).head(Nt);
    const auto gx = kit.egx.row(q).head(Nt);
    const auto gy = kit.egy.row(q).head(Nt);
    const double u0 = phi.dot(xu0), u1 = phi.dot(xu1);
    for (int i = 0; i < Nt; ++i) {
      const double udg = u0 * gx(i) + u1 * gy(i);
      r(lay.uT(0, i)) -= w * u0 * udg;
      r(lay.uT(1, i)) -= w * u1 * udg;
    }
    if (J) {
      for (int i = 0; i < Nt; ++i) {
        const double udg = u0 * gx(i) + u1 * gy(i);
        for (int jj = 0; jj < Nt; ++jj) {
          (*J)(lay.uT(0, i), lay.uT(0, jj)) -= w * (phi(jj) * udg + u0 * phi(jj) * gx(i));
          (*J)(lay.uT(0, i), lay.uT(1, jj)) -= w * u0 * phi(jj) * gy(i);
          (*J)(lay.uT(1, i), lay.uT(0, jj)) -= w * u1 * phi(jj) * gx(i);
          (*J)(lay.uT(1, i), lay.uT(1, jj)) -= w * (phi(jj) * udg + u1 * phi(jj) * gy(i));
        }
      }
    }
  }

  for (size_t f = 0; f < kit.faces.size(); ++f) {
    const KitFace& kf = kit.faces[f];
    const int nvf = lay.nvf[f], npf = lay.npf[f];
    const Vec2 n = kf.normal;
    const auto xf0 = x.segment(lay.uF(f, 0, 0), nvf);
    const auto xf1 = x.segment(lay.uF(f, 1, 0), nvf);
    const auto xpf = x.segment(lay.off_pF[f], npf);
    const bool relax =
        kf.tag == FaceTag::Neumann || (cfg_->bc.given && kf.tag == FaceTag::Dirichlet);
    const bool pointwise = cfg_->wave_speed_eval == WaveSpeedEval::Pointwise;

    // face-mean normal velocity, when wave speeds are frozen per face
    double qbar = 0.0;
    VectorXd dqbar;
    if (!pointwise) {
      double len = 0.0;
      for (int q = 0; q < kf.rule.size(); ++q) {
        const auto psi = kf.fvals.row(q).head(nvf);
        qbar += kf.rule.weights(q) * (psi.dot(xf0) * n(0) + psi.dot(xf1) * n(1));
        len += kf.rule.weights(q);
      }
      qbar /= len;
      dqbar = VectorXd::Zero(2 * nvf);
      for (int q = 0; q < kf.rule.size(); ++q) {
        const auto psi = kf.fvals.row(q).head(nvf);
        for (int jj = 0; jj < nvf; ++jj) {
          dqbar(jj) += kf.rule.weights(q) * n(0) * psi(jj) / len;
          dqbar(nvf + jj) += kf.rule.weights(q) * n(1) * psi(jj) / len;
        }
      }
    }

    for (int q = 0; q < kf.rule.size(); ++q) {
      const double w = kf.rule.weights(q);
      const auto phit = kf.evals.row(q).head(Nt);
      const auto psi = kf.fvals.row(q).head(nvf);
      const auto psip = kf.fvals.row(q).head(npf);
      const auto pit = kf.pvals.row(q);
      const Vec2 uF(psi.dot(xf0), psi.dot(xf1));
      const Vec2 uT(phit.dot(xu0), phit.dot(xu1));
      const double qn = uF.dot(n);
      const WaveSpeeds ws = wave_speeds(pointwise ? qn : qbar, cfg_->a);
      auto dq_arg = [&](int cp, int jj) {
        return pointwise ? n(cp) * psi(jj) : dqbar(cp * nvf + jj);
      };

      // (u_F . n) u_F . v_T
      for (int c = 0; c < 2; ++c)
        for (int i = 0; i < Nt; ++i) r(lay.uT(c, i)) += w * qn * uF(c) * phit(i);
      if (J)
        for (int c = 0; c < 2; ++c)
          for (int cp = 0; cp < 2; ++cp)
            for (int jj = 0; jj < nvf; ++jj) {
              const double d = n(cp) * psi(jj) * uF(c) + (c == cp ? qn * psi(jj) : 0.0);
              for (int i = 0; i < Nt; ++i) (*J)(lay.uT(c, i), lay.uF(f, cp, jj)) += w * phit(i) * d;
            }

      // s+ (u_T - u_F) . (v_T - v_F)
      const Vec2 du = uT - uF;
      for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < Nt; ++i) r(lay.uT(c, i)) += w * ws.sp * du(c) * phit(i);
        for (int i = 0; i < nvf; ++i) r(lay.uF(f, c, i)) -= w * ws.sp * du(c) * psi(i);
      }
      if (J) {
        for (int c = 0; c < 2; ++c) {
          for (int jj = 0; jj < Nt; ++jj) {
            for (int i = 0; i < Nt; ++i)
              (*J)(lay.uT(c, i), lay.uT(c, jj)) += w * ws.sp * phit(jj) * phit(i);
            for (int i = 0; i < nvf; ++i)
              (*J)(lay.uF(f, c, i), lay.uT(c, jj)) -= w * ws.sp * phit(jj) * psi(i);
          }
          for (int cp = 0; cp < 2; ++cp)
            for (int jj = 0; jj < nvf; ++jj) {
              const double d =
                  ws.dsp * dq_arg(cp, jj) * du(c) - (c == cp ? ws.sp * psi(jj) : 0.0);
              for (int i = 0; i < Nt; ++i) (*J)(lay.uT(c, i), lay.uF(f, cp, jj)) += w * phit(i) * d;
              for (int i = 0; i < nvf; ++i)
                (*J)(lay.uF(f, c, i), lay.uF(f, cp, jj)) -= w * psi(i) * d;
            }
        }
      }

      // continuity penalty: (s+ / a^2)(p_T - p_F)(q_T - q_F)
      const double pT = pit.dot(xp);
      const double pF = psip.dot(xpf);
      const double dp = pT - pF;
      for (int j = 0; j < Nk; ++j) r(lay.pT(j)) += w * (ws.sp / a2) * dp * pit(j);
      for (int j = 0; j < npf; ++j) r(lay.pF(f, j)) -= w * (ws.sp / a2) * dp * psip(j);
      if (J) {
        for (int j = 0; j < Nk; ++j) {
          for (int jj = 0; jj < Nk; ++jj)
            (*J)(lay.pT(j), lay.pT(jj)) += w * (ws.sp / a2) * pit(jj) * pit(j);
          for (int jj = 0; jj < npf; ++jj)
            (*J)(lay.pT(j), lay.pF(f, jj)) -= w * (ws.sp / a2) * psip(jj) * pit(j);
        }
        for (int j = 0; j < npf; ++j) {
          for (int jj = 0; jj < Nk; ++jj)
            (*J)(lay.pF(f, j), lay.pT(jj)) -= w * (ws.sp / a2) * pit(jj) * psip(j);
          for (int jj = 0; jj < npf; ++jj)
            (*J)(lay.pF(f, j), lay.pF(f, jj)) += w * (ws.sp / a2) * psip(jj) * psip(j);
        }
        for (int cp = 0; cp < 2; ++cp)
          for (int jj = 0; jj < nvf; ++jj) {
            const double d = ws.dsp * dq_arg(cp, jj) * dp / a2;
            for (int j = 0; j < Nk; ++j) (*J)(lay.pT(j), lay.uF(f, cp, jj)) += w * pit(j) * d;
            for (int j = 0; j < npf; ++j) (*J)(lay.pF(f, j), lay.uF(f, cp, jj)) -= w * psip(j) * d;
          }
      }

      if (kf.tag == FaceTag::Dirichlet) {
        // upwind pull toward the boundary velocity: s- (g_D - u_F) . v_F
        const Vec2 gD = cfg_->bc.velocity(kf.rule.point(q));
        const Vec2 dg = gD - uF;
        for (int c = 0; c < 2; ++c)
          for (int i = 0; i < nvf; ++i) r(lay.uF(f, c, i)) += w * ws.sm * dg(c) * psi(i);
        if (J)
          for (int c = 0; c < 2; ++c)
            for (int cp = 0; cp < 2; ++cp)
              for (int jj = 0; jj < nvf; ++jj) {
                const double d =
                    ws.dsm * dq_arg(cp, jj) * dg(c) - (c == cp ? ws.sm * psi(jj) : 0.0);
                for (int i = 0; i < nvf; ++i)
                  (*J)(lay.uF(f, c, i), lay.uF(f, cp, jj)) += w * psi(i) * d;
              }
      }

      if (relax) {
        // pressure-trace relaxation: (s-/a^2)((g_N + nu d_n(P u)) . n - p_F) q_F
        const Vec2 gN = cfg_->bc.traction(kf.rule.point(q), n);
        const double visc = visc_trace_[f].row(q).dot(x);
        const double val = gN.dot(n) + visc - pF;
        for (int j = 0; j < npf; ++j) r(lay.pF(f, j)) += w * (ws.sm / a2) * val * psip(j);
        if (J) {
          for (int j = 0; j < npf; ++j) {
            const double wj = w * (ws.sm / a2) * psip(j);
            for (int c = 0; c < 2; ++c)
              for (int s = 0; s < lay.ns; ++s) {
                const int col = lay.vel_dof(c, s);
                const double g = visc_trace_[f](q, col);
                if (g != 0.0) (*J)(lay.pF(f, j), col) += wj * g;
              }
            for (int jj = 0; jj < npf; ++jj) (*J)(lay.pF(f, j), lay.pF(f, jj)) -= wj * psip(jj);
            for (int cp = 0; cp < 2; ++cp)
              for (int jj = 0; jj < nvf; ++jj)
                (*J)(lay.pF(f, j), lay.uF(f, cp, jj)) +=
                    w * (ws.dsm * dq_arg(cp, jj) / a2) * val * psip(j);
          }
        }
      }
    }
  }
}

}  // namespace hhoflow
