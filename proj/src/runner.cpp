#include "hhoflow/runner.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

namespace hhoflow {

Mesh build_case_mesh(const CaseDefinition& def, const MeshSpec& spec) {
  // keep cells close to square when the domain is not
  const double aspect = def.domain.height() / def.domain.width();
  int ny = spec.ny > 0 ? spec.ny : std::max(1, static_cast<int>(std::lround(spec.nx * aspect)));
  Mesh mesh = spec.kind == MeshSpec::Kind::Tri ? build_tri_mesh(def.domain, spec.nx, ny)
                                               : build_quad_mesh(def.domain, spec.nx, ny);
  if (spec.distort > 0.0) mesh = distort_mesh(mesh, spec.distort, spec.seed);
  if (def.periodic_x || def.periodic_y) mesh = apply_periodic(mesh, def.periodic_x, def.periodic_y);
  if (def.classifier) tag_boundary(mesh, def.classifier);
  return mesh;
}

SchemeConfig make_scheme_config(const CaseDefinition& def, const RunOptions& opt,
                                const Mesh& mesh) {
  SchemeConfig cfg;
  cfg.scheme = opt.scheme;
  cfg.k = opt.k;
  cfg.nu = def.nu;
  cfg.eta = opt.eta;
  cfg.a = opt.a;
  cfg.wave_speed_eval = opt.wave_speed_eval;
  cfg.bc.velocity = def.g_D;
  cfg.bc.traction = def.g_N;
  cfg.bc.given = def.given_mode;
  cfg.forcing = def.forcing;
  cfg.finalize(mesh);
  return cfg;
}

namespace {

RunResult finish_failure(RunResult&& res, const NewtonStats& stats, const RunOptions& opt,
                         const std::string& context) {
  res.newton = stats;
  res.ok = false;
  res.report.converged = false;
  res.report.failure = context + ": " + stats.failure_reason;
  if (opt.fail_is_error) throw std::runtime_error(res.report.failure);
  return std::move(res);
}

void write_artifacts(const RunResult& res, const RunOptions& opt) {
  if (opt.out_dir.empty()) return;
  namespace fs = std::filesystem;
  fs::create_directories(opt.out_dir);
  save_report(res.report, opt.out_dir + "/report.json");
  if (res.ok) export_vtk(*res.assembler, res.state, opt.out_dir + "/fields.vtk");
  export_csv({RunRecord{res.report.case_name, res.report.scheme, res.report.k, res.report.cells,
                        res.report.h, res.report.err, {}, {}, {}, {}, res.report.newton_iters,
                        res.report.seconds}},
             opt.out_dir + "/table.csv");
  if (res.ok && res.def.name == "lid_driven_cavity") {
    Centerlines cl = sample_centerlines(*res.assembler, res.state);
    std::FILE* f = std::fopen((opt.out_dir + "/centerlines.csv").c_str(), "w");
    if (f) {
      std::fprintf(f, "y,u_at_x05,x,v_at_y05\n");
      for (size_t i = 0; i < cl.y.size(); ++i)
        std::fprintf(f, "%.10g,%.10g,%.10g,%.10g\n", cl.y[i], cl.u_at_x05[i], cl.x[i],
                     cl.v_at_y05[i]);
      std::fclose(f);
    }
  }
}

}  // namespace

RunResult run_case(const CaseDefinition& def, const RunOptions& opt) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();

  if (!def.hdiv_rejection.empty() && opt.scheme != SchemeKind::HLL)
    throw std::invalid_argument(def.name + ": " + def.hdiv_rejection);

  RunResult res;
  res.def = def;
  res.mesh = std::make_shared<Mesh>(build_case_mesh(def, opt.mesh));

  RunReport& rep = res.report;
  rep.case_name = def.name;
  rep.scheme = to_string(opt.scheme);
  rep.k = opt.k;
  rep.cells = res.mesh->n_elements();
  rep.h = res.mesh->h_max();

  std::unique_ptr<SolveLog> log;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    log = std::make_unique<SolveLog>(opt.out_dir + "/solve.log");
  }

  const double dt = opt.dt_override > 0.0 ? opt.dt_override : def.dt;
  const double t_end = opt.t_end_override > 0.0 ? opt.t_end_override : def.t_end;
  const bool unsteady = t_end > 0.0 && dt > 0.0;

  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - t0).count(); };

  if (!unsteady) {
    // steady solve, with a geometric viscosity ramp when requested
    std::vector<double> nus{def.nu};
    if (def.steady_continuation && def.nu < 1e-2) {
      nus = {1e-2, std::sqrt(1e-2 * def.nu), def.nu};
    }
    CaseDefinition stage = def;
    VectorXd x;
    bool first = true;
    for (double nu : nus) {
      stage.nu = nu;
      auto cfg = std::make_shared<SchemeConfig>(make_scheme_config(stage, opt, *res.mesh));
      auto as = std::make_shared<Assembler>(*res.mesh, *cfg, opt.quad_order);
      res.config = cfg;
      res.assembler = as;
      if (first) {
        x = res.assembler->interpolate_state(
            def.initial_u ? def.initial_u : [](Vec2) { return Vec2(0, 0); }, def.initial_p);
        first = false;
      }
      NewtonOutcome out = newton_solve(*res.assembler, x, 0.0, nullptr, opt.newton, log.get(),
                                       "nu=" + std::to_string(nu));
      rep.newton_iters += out.stats.iterations;
      if (!out.stats.converged)
        return finish_failure(std::move(res), out.stats, opt,
                              "steady solve at nu = " + std::to_string(nu));
      x = std::move(out.x);
      res.newton = out.stats;
    }
    res.state = std::move(x);
    res.ok = true;
  } else {
    res.config = std::make_shared<SchemeConfig>(make_scheme_config(def, opt, *res.mesh));
    res.assembler = std::make_shared<Assembler>(*res.mesh, *res.config, opt.quad_order);
    VectorXd x = res.assembler->interpolate_state(def.initial_u, def.initial_p);
    VectorXd xprev = x;

    rep.times.push_back(0.0);
    rep.kinetic.push_back(kinetic_energy(*res.assembler, x));
    rep.enstrophy_series.push_back(enstrophy(*res.assembler, x));

    const int nsteps = static_cast<int>(std::lround(t_end / dt));
    for (int step = 1; step <= nsteps; ++step) {
      const double t_next = step * dt;
      const int order = step == 1 ? 1 : 2;  // BDF1 startup
      StepResult sr;
      try {
        sr = bdf_advance(*res.assembler, order, dt, t_next, x, xprev, opt.newton, log.get());
      } catch (const std::runtime_error& err) {
        NewtonStats st;
        st.failure_reason = err.what();
        return finish_failure(std::move(res), st, opt, "step " + std::to_string(step));
      }
      xprev = std::move(x);
      x = std::move(sr.x);
      rep.newton_iters += sr.stats.iterations;
      rep.times.push_back(t_next);
      rep.kinetic.push_back(kinetic_energy(*res.assembler, x));
      rep.enstrophy_series.push_back(enstrophy(*res.assembler, x));
      if (!opt.out_dir.empty() && opt.snapshot_every > 0 && step % opt.snapshot_every == 0)
        export_vtk(*res.assembler, x, opt.out_dir + "/fields_" + std::to_string(step) + ".vtk");
    }
    res.state = std::move(x);
    res.ok = true;
  }

  if (res.ok && def.has_exact) rep.err = l2_errors(*res.assembler, res.state, def);
  rep.seconds = elapsed();
  write_artifacts(res, opt);
  return res;
}

ConvergenceResult run_convergence(const std::function<CaseDefinition()>& make_case, RunOptions opt,
                                  const std::vector<int>& nx_list) {
  ConvergenceResult result;
  std::vector<double> hs, eu, eg, ep, ed;
  for (int nx : nx_list) {
    opt.mesh.nx = nx;
    opt.mesh.ny = 0;  // derived from the aspect ratio
    ConvergenceRow row;
    row.nx = nx;
    RunOptions o = opt;
    o.fail_is_error = false;
    RunResult rr = run_case(make_case(), o);
    row.ok = rr.ok;
    row.failure = rr.report.failure;
    row.record = RunRecord{rr.report.case_name,
                           rr.report.scheme,
                           rr.report.k,
                           rr.report.cells,
                           rr.report.h,
                           rr.report.err,
                           {},
                           {},
                           {},
                           {},
                           rr.report.newton_iters,
                           rr.report.seconds};
    result.all_ok = result.all_ok && rr.ok;
    if (rr.ok) {
      hs.push_back(rr.report.h);
      eg.push_back(rr.report.err.grad_u);
      eu.push_back(rr.report.err.u);
      ep.push_back(rr.report.err.p);
      ed.push_back(rr.report.err.div_u);
    }
    result.rows.push_back(std::move(row));
  }
  if (hs.size() >= 2) {
    auto rg = convergence_rates(eg, hs);
    auto ru = convergence_rates(eu, hs);
    auto rp = convergence_rates(ep, hs);
    auto rd = convergence_rates(ed, hs);
    size_t j = 0;
    for (ConvergenceRow& row : result.rows) {
      if (!row.ok) continue;
      row.record.rate_gradu = rg[j];
      row.record.rate_u = ru[j];
      row.record.rate_p = rp[j];
      row.record.rate_div = rd[j];
      ++j;
    }
  }
  return result;
}

std::vector<SweepRow> run_viscosity_sweep(const std::function<CaseDefinition(double)>& make_case,
                                          const RunOptions& opt, const std::vector<double>& nus) {
  std::vector<SweepRow> rows;
  for (double nu : nus) {
    SweepRow row;
    row.nu = nu;
    RunOptions o = opt;
    o.fail_is_error = false;
    try {
      RunResult rr = run_case(make_case(nu), o);
      row.ok = rr.ok;
      row.failure = rr.report.failure;
      if (rr.ok) {
        row.err = rr.report.err;
        row.newton_iters = rr.report.newton_iters;
      }
    } catch (const std::exception& e) {
      row.ok = false;
      row.failure = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hhoflow
