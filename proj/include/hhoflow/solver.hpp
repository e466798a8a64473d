#pragma once

#include <Eigen/Sparse>
#include <memory>

#include "hhoflow/scheme.hpp"

namespace hhoflow {

/// Full-system layout: element blocks [u_T | p_T] in element order, then
/// owner-face blocks [u_F | p_F], then the gauge multiplier. The skeletal
/// (condensed) system keeps the face blocks, one pressure-mean scalar per
/// element when the gauge is active, and the multiplier.
struct DofMap {
  std::vector<int> elem_off, elem_usize, elem_psize;
  std::vector<int> face_off, face_usize, face_psize;  // -1 offsets on partner faces
  int lambda_off = -1;
  int total = 0;

  std::vector<int> face_skel_off;
  std::vector<int> elem_c0_skel;  // per element, -1 unless gauge keeps p-mean skeletal
  int lambda_skel = -1;
  int skel_total = 0;
  bool gauge = false;
  bool condense_pressure = true;

  int elem_u_off(int e) const { return elem_off[e]; }
  int elem_p_off(int e) const { return elem_off[e] + elem_usize[e]; }
};

struct NewtonConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-8;
  int max_iters = 50;
  double ls_min = 1.0 / 1024.0;  // backtracking floor on the step fraction
  int polish_steps = 1;          // extra full steps after convergence
};

struct NewtonStats {
  bool converged = false;
  int iterations = 0;
  int polish_iterations = 0;
  int line_search_steps = 0;
  double initial_residual = 0.0;
  double final_residual = 0.0;
  std::vector<double> residual_history;
  std::vector<double> increment_history;
  std::string failure_reason;  // empty on success
};

/// BDF composition of the time term: residual gains
/// M_T (coeff_new * u_T + history_T) on the element velocity block.
struct TimeContext {
  bool enabled = false;
  double coeff_new = 0.0;
  VectorXd history;  // full layout; only element velocity entries are read

  /// weights (a0, a1, a2): d/dt u ~ (a0 u^{n+1} + a1 u^n + a2 u^{n-1}) / dt
  static std::array<double, 3> bdf_weights(int order);
};

/// JSON-lines log of solver progress; one record per Newton iteration.
class SolveLog {
 public:
  explicit SolveLog(const std::string& path);
  ~SolveLog();
  void record(const std::string& phase, int iteration, double residual, int line_search,
              double seconds);

 private:
  std::FILE* file_ = nullptr;
};

class Assembler {
 public:
  Assembler(const Mesh& mesh, const SchemeConfig& cfg, int quad_order = -1);

  const Mesh& mesh() const { return *mesh_; }
  const SchemeConfig& config() const { return *cfg_; }
  const DofMap& dofs() const { return dofs_; }
  const std::vector<LocalKit>& kits() const { return kits_; }

  /// Hybrid interpolate of initial/exact fields into the full layout.
  VectorXd interpolate_state(const std::function<Vec2(Vec2)>& u,
                             const std::function<double(Vec2)>& p) const;

  VectorXd gather_local(const VectorXd& x, int e) const;

  /// Assembled full residual (element rows + accumulated face rows + gauge).
  VectorXd residual(const VectorXd& x, double t, const TimeContext* tc) const;

  /// One Newton direction via static condensation; verifies that the
  /// condensed solve reproduces the full linear system.
  VectorXd newton_step(const VectorXd& x, double t, const TimeContext* tc);

  /// Uncondensed sparse system at a state (oracle/testing path).
  std::pair<Eigen::SparseMatrix<double>, VectorXd> full_system(const VectorXd& x, double t,
                                                               const TimeContext* tc) const;

  /// Pressure kept skeletal (fallback for singular interior blocks).
  void disable_pressure_condensation();

 private:
  void build_dof_map();
  void assemble_local(int e, const VectorXd& x, double t, const TimeContext* tc, VectorXd& r,
                      MatrixXd* J) const;

  const Mesh* mesh_;
  const SchemeConfig* cfg_;
  std::vector<LocalKit> kits_;
  std::vector<std::unique_ptr<ElementScheme>> schemes_;
  DofMap dofs_;
  std::vector<std::vector<int>> loc2glob_;
  std::vector<std::vector<int>> interior_idx_, skel_idx_;  // local index partitions
  std::vector<std::vector<int>> skel_glob_;                // skeletal ids of skel_idx entries

  struct Condensed {
    Eigen::PartialPivLU<MatrixXd> lu;
    MatrixXd J_is;
    VectorXd r_i;
  };
  mutable std::vector<Condensed> cond_;
  mutable Eigen::SparseLU<Eigen::SparseMatrix<double>> slu_;
  mutable bool pattern_analyzed_ = false;
};

struct NewtonOutcome {
  VectorXd x;
  NewtonStats stats;
};

NewtonOutcome newton_solve(Assembler& assembler, VectorXd x0, double t, const TimeContext* tc,
                           const NewtonConfig& cfg, SolveLog* log = nullptr,
                           const std::string& phase = "steady");

/// One implicit BDF step from (x_n, x_nm1) to time t_next. The first step of
/// a BDF2 run passes order = 1. Throws on Newton failure with step context.
struct StepResult {
  VectorXd x;
  NewtonStats stats;
};
StepResult bdf_advance(Assembler& assembler, int order, double dt, double t_next,
                       const VectorXd& xn, const VectorXd& xnm1, const NewtonConfig& cfg,
                       SolveLog* log = nullptr);

}  // namespace hhoflow
