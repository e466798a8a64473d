#pragma once

#include "hhoflow/local_kit.hpp"

namespace hhoflow {

enum class SchemeKind { Hdiv, DivFree, HLL };
enum class WaveSpeedEval { Pointwise, FaceMean };
enum class Gauge { None, ZeroMeanPressure };

const char* to_string(SchemeKind kind);

/// Acoustic wave speed estimates from the normal velocity q and the
/// artificial compressibility a: s+- = (q +- sqrt(q^2 + 4 a^2)) / 2,
/// so s+ > 0 > s- and s+ s- = -a^2.
struct WaveSpeeds {
  double sp = 0.0, sm = 0.0;
  double dsp = 0.0, dsm = 0.0;  // derivatives with respect to q
};
WaveSpeeds wave_speeds(double q, double a);

struct BoundaryData {
  std::function<Vec2(Vec2)> velocity;        // prescribed velocity on Dirichlet faces
  std::function<Vec2(Vec2, Vec2)> traction;  // prescribed traction(x, n) on Neumann faces
  bool given = false;  // HLL only: boundary Riemann data uses both fields on every boundary face
};

struct SchemeConfig {
  SchemeKind scheme = SchemeKind::Hdiv;
  int k = 1;
  DegreeProfile profile = DegreeProfile::hdiv(1);
  double nu = 1.0;
  double eta = 3.0;
  double a = 1.0;
  WaveSpeedEval wave_speed_eval = WaveSpeedEval::Pointwise;
  Gauge gauge = Gauge::None;
  BoundaryData bc;
  std::function<Vec2(Vec2, double)> forcing;  // null means zero
  bool convection = true;  // false: drop the Temam terms (Stokes oracle runs)

  /// Derives the degree profile, decides the gauge from the mesh boundary,
  /// and validates the combination. Throws std::invalid_argument on misuse.
  void finalize(const Mesh& mesh);
};

/// Per-element residual/Jacobian assembler for the configured scheme. The
/// state-independent blocks are assembled once at construction; assemble()
/// adds the convective/flux parts at the given state.
class ElementScheme {
 public:
  ElementScheme(const LocalKit& kit, const SchemeConfig& cfg);

  const LocalKit& kit() const { return *kit_; }
  const MatrixXd& linear_matrix() const { return A_lin_; }
  const VectorXd& constant_load() const { return b_const_; }

  /// Spatial residual r(x) (and, when J != nullptr, its exact Jacobian).
  /// Forcing is evaluated at time t; time-derivative terms are not included.
  void assemble(const VectorXd& x, double t, VectorXd& r, MatrixXd* J) const;

  /// Element-velocity mass matrix scattered into local indices; the time
  /// term couples only the u_T block.
  const MatrixXd& time_mass() const { return mass_time_; }

 private:
  void build_linear_hdiv();
  void build_linear_hll();
  void add_convective_hdiv(const VectorXd& x, VectorXd& r, MatrixXd* J) const;
  void add_flux_hll(const VectorXd& x, VectorXd& r, MatrixXd* J) const;

  const LocalKit* kit_;
  const SchemeConfig* cfg_;
  MatrixXd A_lin_;
  VectorXd b_const_;
  MatrixXd mass_time_;
  std::vector<MatrixXd> visc_trace_;  // per face: nu (n . grad P u) . n row map, fq x 2ns
};

}  // namespace hhoflow
