#pragma once

#include "hhoflow/mesh.hpp"

namespace hhoflow {

/// Benchmark problem definition. Gradient tensors use G(i, j) = d_i u_j, so
/// tractions read g_N = p n - nu (n . grad) u with (n . grad u)_j = n_i G(i,j).
struct CaseDefinition {
  std::string name;
  Rect domain{0, 1, 0, 1};
  bool periodic_x = false, periodic_y = false;
  double nu = 1.0;
  double t_end = 0.0, dt = 0.0;  // both zero for steady problems

  bool has_exact = false;
  std::function<Vec2(Vec2)> exact_u;
  std::function<Mat2(Vec2)> exact_grad_u;
  std::function<double(Vec2)> exact_p;

  std::function<Vec2(Vec2, double)> forcing;  // null = zero
  std::function<Vec2(Vec2)> initial_u;
  std::function<double(Vec2)> initial_p;

  BoundaryClassifier classifier;  // null on fully periodic domains
  std::function<Vec2(Vec2)> g_D;
  std::function<Vec2(Vec2, Vec2)> g_N;
  bool given_mode = false;

  bool steady_continuation = false;  // viscosity ramp toward the target Re
  std::string hdiv_rejection;        // nonempty: the hdiv scheme must refuse this case
};

enum class LLMSMode { DirichletNeumann, Given };

CaseDefinition kovasznay(double re);
CaseDefinition llms(double nu, LLMSMode mode);
CaseDefinition gresho_chan(double u0 = 1.0 / 3.0, double v0 = 1.0 / 3.0, double p0 = 0.0,
                           double nu = 1e-5);
CaseDefinition double_shear_layer();
CaseDefinition lid_driven_cavity(double re);

/// Max mismatch between the hand-coded gradient and central differences of
/// the velocity, over n random points.
double max_grad_mismatch(const CaseDefinition& def, int n, uint64_t seed);

/// Max norm of the steady momentum residual u.grad u + grad p - nu lap u - f
/// (and of div u), evaluated by finite differences of the exact fields.
double max_ns_residual(const CaseDefinition& def, int n, uint64_t seed);

/// Reference centerline samples for the cavity at Re = 1000, from
/// Ghia, Ghia & Shin, J. Comput. Phys. 48 (1982), Tables I and II.
struct CavityReference {
  std::vector<double> y, u_at_x05;
  std::vector<double> x, v_at_y05;
};
const CavityReference& cavity_reference_re1000();

}  // namespace hhoflow
