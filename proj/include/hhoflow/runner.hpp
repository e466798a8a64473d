#pragma once

#include <memory>

#include "hhoflow/postprocess.hpp"

namespace hhoflow {

struct MeshSpec {
  enum class Kind { Tri, Quad };
  Kind kind = Kind::Tri;
  int nx = 4, ny = 4;
  double distort = 0.0;
  uint64_t seed = 1;
};

Mesh build_case_mesh(const CaseDefinition& def, const MeshSpec& spec);

struct RunOptions {
  SchemeKind scheme = SchemeKind::Hdiv;
  int k = 1;
  MeshSpec mesh;
  NewtonConfig newton;
  WaveSpeedEval wave_speed_eval = WaveSpeedEval::Pointwise;
  double eta = 3.0;
  double a = 1.0;
  std::string out_dir;            // empty: no artifacts written
  int snapshot_every = 0;         // unsteady VTK cadence in steps (0 = final only)
  double dt_override = 0.0;       // 0 = case default
  double t_end_override = 0.0;    // 0 = case default
  int quad_order = -1;
  bool fail_is_error = true;      // false: report the failure instead of throwing
};

SchemeConfig make_scheme_config(const CaseDefinition& def, const RunOptions& opt, const Mesh& mesh);

struct RunResult {
  RunReport report;
  NewtonStats newton;
  bool ok = false;
  VectorXd state;
  std::shared_ptr<SchemeConfig> config;  // keeps the assembler's references alive
  std::shared_ptr<Assembler> assembler;
  std::shared_ptr<Mesh> mesh;
  CaseDefinition def;
};

/// One (case, scheme, k, mesh) solve: steady Newton (with a viscosity ramp
/// when the case asks for one) or a BDF2 time loop, then diagnostics and
/// optional artifacts under out_dir.
RunResult run_case(const CaseDefinition& def, const RunOptions& opt);

struct ConvergenceRow {
  int nx = 0;
  RunRecord record;
  bool ok = false;
  std::string failure;
};
struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  bool all_ok = true;
};

/// Refinement study over the nx list (ny scales with the case aspect ratio).
ConvergenceResult run_convergence(const std::function<CaseDefinition()>& make_case,
                                  RunOptions opt, const std::vector<int>& nx_list);

struct SweepRow {
  double nu = 0.0;
  bool ok = false;
  ErrorNorms err;
  int newton_iters = 0;
  std::string failure;
};

/// Fixed mesh and degree, viscosity swept over the list; failures are
/// recorded per viscosity without aborting the sweep.
std::vector<SweepRow> run_viscosity_sweep(const std::function<CaseDefinition(double)>& make_case,
                                          const RunOptions& opt, const std::vector<double>& nus);

}  // namespace hhoflow
