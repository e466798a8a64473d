#pragma once

#include "hhoflow/cases.hpp"
#include "hhoflow/solver.hpp"

namespace hhoflow {

struct ErrorNorms {
  double grad_u = 0.0, u = 0.0, p = 0.0, div_u = 0.0;
};

/// Element-wise L2 errors against the exact fields, integrated at order
/// 2(k+2)+2. The gradient norm uses the element polynomial u_T itself; the
/// divergence norm carries no exact-field subtraction.
ErrorNorms l2_errors(const Assembler& assembler, const VectorXd& x, const CaseDefinition& def);

struct RateEntry {
  double value = 0.0;
  bool present = false;
  bool floored = false;  // both errors at machine noise; reported as 0
};

/// rate_i = log(e_{i-1}/e_i) / log(h_{i-1}/h_i); entry 0 is absent.
std::vector<RateEntry> convergence_rates(const std::vector<double>& errors,
                                         const std::vector<double>& h);

double kinetic_energy(const Assembler& assembler, const VectorXd& x, int extra_order = 0);
double enstrophy(const Assembler& assembler, const VectorXd& x, int extra_order = 0);

/// (K(t_0) - K(t_F)) / K(t_0)
double relative_ke_error(const std::vector<double>& kinetic_series);

struct Centerlines {
  std::vector<double> y, u_at_x05;  // u sampled along the vertical centerline
  std::vector<double> x, v_at_y05;  // v sampled along the horizontal centerline
};
Centerlines sample_centerlines(const Assembler& assembler, const VectorXd& x, int samples = 201);

void export_vtk(const Assembler& assembler, const VectorXd& x, const std::string& path);

/// One CSV row per (mesh, k), matching the layout of the convergence tables.
struct RunRecord {
  std::string case_name, scheme;
  int k = 0, cells = 0;
  double h = 0.0;
  ErrorNorms err;
  RateEntry rate_gradu, rate_u, rate_p, rate_div;
  int newton_iters = 0;
  double seconds = 0.0;
};
void export_csv(const std::vector<RunRecord>& rows, const std::string& path);

/// Full run record; serialized with hex-float payloads so that a load/save
/// round trip preserves every bit.
struct RunReport {
  std::string case_name, scheme;
  int k = 0, cells = 0;
  double h = 0.0;
  ErrorNorms err;
  std::vector<double> times, kinetic, enstrophy_series;
  int newton_iters = 0;
  bool converged = true;
  std::string failure;
  double seconds = 0.0;
};
void save_report(const RunReport& report, const std::string& path);
RunReport load_report(const std::string& path);

/// Normal-trace conformity of the velocity: worst face-L2 jump of u_T . n
/// across interior/periodic faces and worst Dirichlet mismatch against the
/// face-projected boundary datum, plus the global divergence norm.
struct HdivConformity {
  double max_interior_jump = 0.0;
  double max_dirichlet_mismatch = 0.0;
  double div_norm = 0.0;
};
HdivConformity hdiv_conformity(const Assembler& assembler, const VectorXd& x,
                               const CaseDefinition& def);

}  // namespace hhoflow
