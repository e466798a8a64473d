#include "hhoflow/solver.hpp"

#include <chrono>
#include <cmath>

#include "json.hpp"

namespace hhoflow {

std::array<double, 3> TimeContext::bdf_weights(int order) {
  if (order == 1) return {1.0, -1.0, 0.0};
  if (order == 2) return {1.5, -2.0, 0.5};
  throw std::invalid_argument("bdf_weights: order must be 1 or 2");
}

SolveLog::SolveLog(const std::string& path) {
  file_ = std::fopen(path.c_str(), "w");
  if (!file_) throw std::runtime_error("SolveLog: cannot open " + path);
}

SolveLog::~SolveLog() {
  if (file_) std::fclose(file_);
}

void SolveLog::record(const std::string& phase, int iteration, double residual, int line_search,
                      double seconds) {
  if (!file_) return;
  nlohmann::json j{{"phase", phase},
                   {"iteration", iteration},
                   {"residual", residual},
                   {"line_search_steps", line_search},
                   {"seconds", seconds}};
  std::fprintf(file_, "%s\n", j.dump().c_str());
  std::fflush(file_);
}

Assembler::Assembler(const Mesh& mesh, const SchemeConfig& cfg, int quad_order)
    : mesh_(&mesh), cfg_(&cfg) {
  const int ne = mesh.n_elements();
  kits_.resize(ne);
  parallel_for(ne, [&](int e) {
    kits_[e] = build_local_kit(mesh, e, cfg.profile, cfg.eta, quad_order);
  });
  schemes_.resize(ne);
  parallel_for(ne, [&](int e) { schemes_[e] = std::make_unique<ElementScheme>(kits_[e], cfg); });
  build_dof_map();
}

void Assembler::build_dof_map() {
  const Mesh& mesh = *mesh_;
  const int ne = mesh.n_elements();
  DofMap& d = dofs_;
  d.gauge = cfg_->gauge == Gauge::ZeroMeanPressure;

  d.elem_off.assign(ne, 0);
  d.elem_usize.assign(ne, 0);
  d.elem_psize.assign(ne, 0);
  int off = 0;
  for (int e = 0; e < ne; ++e) {
    d.elem_off[e] = off;
    d.elem_usize[e] = 2 * kits_[e].lay.Nt;
    d.elem_psize[e] = kits_[e].lay.Nk;
    off += d.elem_usize[e] + d.elem_psize[e];
  }
  d.face_off.assign(mesh.n_faces(), -1);
  d.face_usize.assign(mesh.n_faces(), 0);
  d.face_psize.assign(mesh.n_faces(), 0);
  for (int f = 0; f < mesh.n_faces(); ++f) {
    if (mesh.dof_face(f) != f) continue;
    d.face_off[f] = off;
    d.face_usize[f] = 2 * (cfg_->profile.face_velocity_degree(mesh.faces[f].tag) + 1);
    d.face_psize[f] = cfg_->profile.p + 1;
    off += d.face_usize[f] + d.face_psize[f];
  }
  if (d.gauge) {
    d.lambda_off = off;
    off += 1;
  }
  d.total = off;

  // skeletal layout
  d.face_skel_off.assign(mesh.n_faces(), -1);
  d.elem_c0_skel.assign(ne, -1);
  int soff = 0;
  for (int f = 0; f < mesh.n_faces(); ++f) {
    if (d.face_off[f] < 0) continue;
    d.face_skel_off[f] = soff;
    soff += d.face_usize[f] + d.face_psize[f];
  }
  if (d.gauge || !d.condense_pressure) {
    for (int e = 0; e < ne; ++e) {
      d.elem_c0_skel[e] = soff;
      soff += d.condense_pressure ? 1 : d.elem_psize[e];
    }
  }
  if (d.gauge) {
    d.lambda_skel = soff;
    soff += 1;
  }
  d.skel_total = soff;

  // local-to-global and interior/skeletal partitions
  loc2glob_.assign(ne, {});
  interior_idx_.assign(ne, {});
  skel_idx_.assign(ne, {});
  skel_glob_.assign(ne, {});
  for (int e = 0; e < ne; ++e) {
    const LocalKit& kit = kits_[e];
    const LocalLayout& lay = kit.lay;
    std::vector<int>& map = loc2glob_[e];
    map.assign(lay.ndof, -1);
    for (int i = 0; i < 2 * lay.Nt; ++i) map[i] = d.elem_off[e] + i;
    for (int j = 0; j < lay.Nk; ++j) map[lay.pT(j)] = d.elem_p_off(e) + j;
    for (size_t i = 0; i < kit.faces.size(); ++i) {
      const int df = kit.faces[i].dof_face;
      for (int c = 0; c < 2; ++c)
        for (int j = 0; j < lay.nvf[i]; ++j)
          map[lay.uF(i, c, j)] = d.face_off[df] + c * lay.nvf[i] + j;
      for (int j = 0; j < lay.npf[i]; ++j)
        map[lay.pF(i, j)] = d.face_off[df] + d.face_usize[df] + j;
    }

    auto skel_of_local = [&](int loc) -> int {
      // element velocity: always interior
      if (loc < 2 * lay.Nt) return -1;
      if (loc >= lay.off_pT && loc < lay.off_pT + lay.Nk) {
        const int j = loc - lay.off_pT;
        if (!d.condense_pressure) return d.elem_c0_skel[e] + j;
        if (d.gauge && j == 0) return d.elem_c0_skel[e];
        return -1;
      }
      for (size_t i = 0; i < kit.faces.size(); ++i) {
        const int df = kit.faces[i].dof_face;
        if (loc >= lay.off_uF[i] && loc < lay.off_uF[i] + 2 * lay.nvf[i])
          return d.face_skel_off[df] + (loc - lay.off_uF[i]);
        if (loc >= lay.off_pF[i] && loc < lay.off_pF[i] + lay.npf[i])
          return d.face_skel_off[df] + d.face_usize[df] + (loc - lay.off_pF[i]);
      }
      return -1;
    };
    for (int loc = 0; loc < lay.ndof; ++loc) {
      const int s = skel_of_local(loc);
      if (s < 0)
        interior_idx_[e].push_back(loc);
      else {
        skel_idx_[e].push_back(loc);
        skel_glob_[e].push_back(s);
      }
    }
  }
  cond_.assign(ne, {});
  pattern_analyzed_ = false;
}

void Assembler::disable_pressure_condensation() {
  dofs_.condense_pressure = false;
  build_dof_map();
}

VectorXd Assembler::gather_local(const VectorXd& x, int e) const {
  const std::vector<int>& map = loc2glob_[e];
  VectorXd loc(map.size());
  for (size_t i = 0; i < map.size(); ++i) loc(i) = x(map[i]);
  return loc;
}

VectorXd Assembler::interpolate_state(const std::function<Vec2(Vec2)>& u,
                                      const std::function<double(Vec2)>& p) const {
  VectorXd x = VectorXd::Zero(dofs_.total);
  for (int e = 0; e < mesh_->n_elements(); ++e) {
    const LocalKit& kit = kits_[e];
    VectorXd vel = interpolate_velocity(kit, u);
    VectorXd pres =
        p ? interpolate_pressure(kit, p) : VectorXd::Zero(kit.lay.ndof - 2 * kit.lay.ns);
    VectorXd loc = assemble_local_state(kit, vel, pres);
    for (size_t i = 0; i < loc2glob_[e].size(); ++i) x(loc2glob_[e][i]) = loc(i);
  }
  return x;
}

void Assembler::assemble_local(int e, const VectorXd& x, double t, const TimeContext* tc,
                               VectorXd& r, MatrixXd* J) const {
  const LocalKit& kit = kits_[e];
  VectorXd loc = gather_local(x, e);
  schemes_[e]->assemble(loc, t, r, J);
  if (tc && tc->enabled) {
    const int nu = 2 * kit.lay.Nt;
    const MatrixXd& M = schemes_[e]->time_mass();
    VectorXd udot = tc->coeff_new * loc.head(nu);
    for (int i = 0; i < nu; ++i) udot(i) += tc->history(dofs_.elem_off[e] + i);
    r.head(nu) += M * udot;
    if (J) J->topLeftCorner(nu, nu) += tc->coeff_new * M;
  }
}

VectorXd Assembler::residual(const VectorXd& x, double t, const TimeContext* tc) const {
  const int ne = mesh_->n_elements();
  std::vector<VectorXd> local_r(ne);
  parallel_for(ne, [&](int e) { assemble_local(e, x, t, tc, local_r[e], nullptr); });

  VectorXd r = VectorXd::Zero(dofs_.total);
  for (int e = 0; e < ne; ++e) {
    const std::vector<int>& map = loc2glob_[e];
    for (size_t i = 0; i < map.size(); ++i) r(map[i]) += local_r[e](i);
  }
  if (dofs_.gauge) {
    const double lambda = x(dofs_.lambda_off);
    double mean = 0.0;
    for (int e = 0; e < ne; ++e) {
      r(dofs_.elem_p_off(e)) += lambda * mesh_->area[e];
      mean += mesh_->area[e] * x(dofs_.elem_p_off(e));
    }
    r(dofs_.lambda_off) = mean;
  }
  return r;
}

std::pair<Eigen::SparseMatrix<double>, VectorXd> Assembler::full_system(
    const VectorXd& x, double t, const TimeContext* tc) const {
  const int ne = mesh_->n_elements();
  std::vector<VectorXd> local_r(ne);
  std::vector<MatrixXd> local_J(ne);
  parallel_for(ne, [&](int e) { assemble_local(e, x, t, tc, local_r[e], &local_J[e]); });

  VectorXd r = VectorXd::Zero(dofs_.total);
  std::vector<Eigen::Triplet<double>> trip;
  for (int e = 0; e < ne; ++e) {
    const std::vector<int>& map = loc2glob_[e];
    for (size_t i = 0; i < map.size(); ++i) {
      r(map[i]) += local_r[e](i);
      for (size_t j = 0; j < map.size(); ++j)
        trip.emplace_back(map[i], map[j], local_J[e](i, j));
    }
  }
  if (dofs_.gauge) {
    const double lambda = x(dofs_.lambda_off);
    double mean = 0.0;
    for (int e = 0; e < ne; ++e) {
      r(dofs_.elem_p_off(e)) += lambda * mesh_->area[e];
      mean += mesh_->area[e] * x(dofs_.elem_p_off(e));
      trip.emplace_back(dofs_.elem_p_off(e), dofs_.lambda_off, mesh_->area[e]);
      trip.emplace_back(dofs_.lambda_off, dofs_.elem_p_off(e), mesh_->area[e]);
    }
    r(dofs_.lambda_off) = mean;
  }
  Eigen::SparseMatrix<double> A(dofs_.total, dofs_.total);
  A.setFromTriplets(trip.begin(), trip.end());
  return {A, r};
}

VectorXd Assembler::newton_step(const VectorXd& x, double t, const TimeContext* tc) {
  const int ne = mesh_->n_elements();
  std::vector<VectorXd> rhs_s(ne);
  std::vector<MatrixXd> S(ne);
  std::vector<int> bad(ne, 0);

  parallel_for(ne, [&](int e) {
    VectorXd r;
    MatrixXd J;
    assemble_local(e, x, t, tc, r, &J);
    const auto& I = interior_idx_[e];
    const auto& K = skel_idx_[e];
    const int ni = static_cast<int>(I.size()), nk = static_cast<int>(K.size());
    MatrixXd Jii(ni, ni), Jis(ni, nk), Jsi(nk, ni), Jss(nk, nk);
    VectorXd ri(ni), rs(nk);
    for (int a = 0; a < ni; ++a) {
      ri(a) = r(I[a]);
      for (int b = 0; b < ni; ++b) Jii(a, b) = J(I[a], I[b]);
      for (int b = 0; b < nk; ++b) Jis(a, b) = J(I[a], K[b]);
    }
    for (int a = 0; a < nk; ++a) {
      rs(a) = r(K[a]);
      for (int b = 0; b < ni; ++b) Jsi(a, b) = J(K[a], I[b]);
      for (int b = 0; b < nk; ++b) Jss(a, b) = J(K[a], K[b]);
    }
    Condensed& c = cond_[e];
    c.lu.compute(Jii);
    const auto& lu_mat = c.lu.matrixLU();
    double dmax = 0.0, dmin = 1e300;
    for (int i = 0; i < ni; ++i) {
      const double v = std::abs(lu_mat(i, i));
      dmax = std::max(dmax, v);
      dmin = std::min(dmin, v);
    }
    if (!(dmin > 1e-13 * dmax)) {
      bad[e] = 1;
      return;
    }
    c.J_is = Jis;
    c.r_i = ri;
    MatrixXd JiiInv_Jis = c.lu.solve(Jis);
    VectorXd JiiInv_ri = c.lu.solve(ri);
    S[e] = Jss - Jsi * JiiInv_Jis;
    rhs_s[e] = -(rs - Jsi * JiiInv_ri);
  });

  for (int e = 0; e < ne; ++e)
    if (bad[e])
      throw std::runtime_error("condense: singular interior block on element " +
                               std::to_string(e));

  std::vector<Eigen::Triplet<double>> trip;
  VectorXd rhs = VectorXd::Zero(dofs_.skel_total);
  for (int e = 0; e < ne; ++e) {
    const auto& G = skel_glob_[e];
    for (size_t a = 0; a < G.size(); ++a) {
      rhs(G[a]) += rhs_s[e](a);
      for (size_t b = 0; b < G.size(); ++b) trip.emplace_back(G[a], G[b], S[e](a, b));
    }
  }
  if (dofs_.gauge) {
    double mean = 0.0;
    for (int e = 0; e < ne; ++e) {
      const int c0 = dofs_.elem_c0_skel[e];
      trip.emplace_back(c0, dofs_.lambda_skel, mesh_->area[e]);
      trip.emplace_back(dofs_.lambda_skel, c0, mesh_->area[e]);
      mean += mesh_->area[e] * x(dofs_.elem_p_off(e));
      rhs(c0) -= x(dofs_.lambda_off) * mesh_->area[e];
    }
    rhs(dofs_.lambda_skel) = -mean;
  }

  Eigen::SparseMatrix<double> A(dofs_.skel_total, dofs_.skel_total);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  if (!pattern_analyzed_) {
    slu_.analyzePattern(A);
    pattern_analyzed_ = true;
  }
  slu_.factorize(A);
  if (slu_.info() != Eigen::Success) {
    std::string hint;
    if (!mesh_->has_tag(FaceTag::Neumann) && !dofs_.gauge)
      hint = " (no Neumann face and the pressure gauge is disabled)";
    throw std::runtime_error("sparse_solve: factorization failed" + hint);
  }
  VectorXd ds = slu_.solve(rhs);
  // verify the direct solve; refine before giving up
  const double scale = rhs.norm();
  if (scale > 0.0) {
    double rn = (A * ds - rhs).norm();
    for (int pass = 0; pass < 2 && rn / scale > 1e-12; ++pass) {
      ds += slu_.solve(rhs - A * ds);
      rn = (A * ds - rhs).norm();
    }
    if (rn / scale > 1e-8) {
      std::string hint;
      if (!mesh_->has_tag(FaceTag::Neumann) && !dofs_.gauge)
        hint = " (no Neumann face and the pressure gauge is disabled)";
      throw std::runtime_error("sparse_solve: direct solve residual " + std::to_string(rn / scale) +
                               hint);
    }
  }

  // back-substitution
  VectorXd dx = VectorXd::Zero(dofs_.total);
  for (int e = 0; e < ne; ++e) {
    const auto& K = skel_idx_[e];
    const auto& G = skel_glob_[e];
    for (size_t a = 0; a < K.size(); ++a) dx(loc2glob_[e][K[a]]) = ds(G[a]);
  }
  if (dofs_.gauge) dx(dofs_.lambda_off) = ds(dofs_.lambda_skel);
  parallel_for(ne, [&](int e) {
    const auto& I = interior_idx_[e];
    const auto& G = skel_glob_[e];
    VectorXd ds_loc(G.size());
    for (size_t a = 0; a < G.size(); ++a) ds_loc(a) = ds(G[a]);
    VectorXd di = -cond_[e].lu.solve(cond_[e].r_i + cond_[e].J_is * ds_loc);
    for (size_t a = 0; a < I.size(); ++a) dx(loc2glob_[e][I[a]]) = di(a);
  });
  return dx;
}

NewtonOutcome newton_solve(Assembler& assembler, VectorXd x0, double t, const TimeContext* tc,
                           const NewtonConfig& cfg, SolveLog* log, const std::string& phase) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  NewtonOutcome out;
  out.x = std::move(x0);
  NewtonStats& st = out.stats;

  double rnorm = assembler.residual(out.x, t, tc).norm();
  st.initial_residual = rnorm;
  st.residual_history.push_back(rnorm);
  if (log) log->record(phase, 0, rnorm, 0, elapsed());
  const double target = std::max(cfg.abs_tol, cfg.rel_tol * rnorm);

  bool retried_fallback = false;
  while (!st.converged && st.iterations < cfg.max_iters) {
    if (rnorm <= target) {
      st.converged = true;
      break;
    }
    VectorXd dx;
    try {
      dx = assembler.newton_step(out.x, t, tc);
    } catch (const std::runtime_error& err) {
      if (!retried_fallback && std::string(err.what()).find("condense:") == 0) {
        // keep element pressures global for this run and retry
        assembler.disable_pressure_condensation();
        retried_fallback = true;
        continue;
      }
      st.failure_reason = err.what();
      st.final_residual = rnorm;
      return out;
    }
    double alpha = 1.0;
    double new_norm = 0.0;
    bool accepted = false;
    while (alpha >= cfg.ls_min) {
      new_norm = assembler.residual(out.x + alpha * dx, t, tc).norm();
      if (new_norm <= (1.0 - 1e-4 * alpha) * rnorm || new_norm <= target) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
      ++st.line_search_steps;
    }
    if (!accepted) {
      st.failure_reason = "line search floor reached at residual " + std::to_string(rnorm);
      st.final_residual = rnorm;
      return out;
    }
    out.x += alpha * dx;
    rnorm = new_norm;
    ++st.iterations;
    st.residual_history.push_back(rnorm);
    st.increment_history.push_back(alpha * dx.norm());
    if (log) log->record(phase, st.iterations, rnorm, st.line_search_steps, elapsed());
    if (rnorm <= target) st.converged = true;
  }

  if (!st.converged) {
    st.failure_reason = "max_iters exceeded at residual " + std::to_string(rnorm);
    st.final_residual = rnorm;
    return out;
  }

  // polish: extra full steps while they keep reducing the residual
  for (int p = 0; p < cfg.polish_steps; ++p) {
    VectorXd dx;
    try {
      dx = assembler.newton_step(out.x, t, tc);
    } catch (const std::runtime_error&) {
      break;
    }
    VectorXd xc = out.x + dx;
    const double pn = assembler.residual(xc, t, tc).norm();
    if (pn < rnorm) {
      out.x = std::move(xc);
      rnorm = pn;
      ++st.polish_iterations;
      st.residual_history.push_back(rnorm);
      if (log) log->record(phase, st.iterations + st.polish_iterations, rnorm, 0, elapsed());
    } else {
      break;
    }
  }
  st.final_residual = rnorm;
  return out;
}

StepResult bdf_advance(Assembler& assembler, int order, double dt, double t_next,
                       const VectorXd& xn, const VectorXd& xnm1, const NewtonConfig& cfg,
                       SolveLog* log) {
  const auto w = TimeContext::bdf_weights(order);
  TimeContext tc;
  tc.enabled = true;
  tc.coeff_new = w[0] / dt;
  tc.history = (w[1] / dt) * xn + (w[2] / dt) * xnm1;
  NewtonOutcome out = newton_solve(assembler, xn, t_next, &tc, cfg, log,
                                   "t=" + std::to_string(t_next));
  if (!out.stats.converged)
    throw std::runtime_error("bdf_advance: Newton failed at t = " + std::to_string(t_next) +
                             ": " + out.stats.failure_reason);
  return {std::move(out.x), std::move(out.stats)};
}

}  // namespace hhoflow
