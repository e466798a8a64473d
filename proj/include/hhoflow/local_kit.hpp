#pragma once

#include "hhoflow/basis.hpp"
#include "hhoflow/mesh.hpp"

namespace hhoflow {

/// Polynomial degrees: k on interior/Dirichlet faces, t on elements,
/// f on Neumann faces (velocity), p on faces (pressure).
struct DegreeProfile {
  int k = 1, t = 2, f = 2, p = 2;

  static DegreeProfile hdiv(int k) { return {k, k + 1, k + 1, k + 1}; }
  static DegreeProfile divfree(int k) { return {k, k + 1, k, k}; }
  static DegreeProfile hll(int k) { return {k, k, k, k}; }

  int face_velocity_degree(FaceTag tag) const { return tag == FaceTag::Neumann ? f : k; }
  int reconstruction_degree() const { return k + 1; }
};

/// Block offsets of the local coefficient vector
///   [ u_T (2*Nt) | p_T (Nk) | u_F0 | u_F1 ... | p_F0 | p_F1 ... ]
/// with each velocity block storing its x coefficients before its y ones.
struct LocalLayout {
  int Nt = 0;               // element scalar velocity dim (per component)
  int Nk = 0;               // element pressure dim
  std::vector<int> nvf;     // per-face scalar velocity dims
  std::vector<int> npf;     // per-face pressure dims
  int off_pT = 0;
  std::vector<int> off_uF, off_pF;
  int ndof = 0;
  int ns = 0;  // scalar hybrid velocity size: Nt + sum(nvf)

  int uT(int comp, int j) const { return comp * Nt + j; }
  int pT(int j) const { return off_pT + j; }
  int uF(int i, int comp, int j) const { return off_uF[i] + comp * nvf[i] + j; }
  int pF(int i, int j) const { return off_pF[i] + j; }

  /// Local index of the velocity dof for component comp of scalar-hybrid
  /// entry s (element prefix first, then faces in order).
  int vel_dof(int comp, int s) const {
    if (s < Nt) return uT(comp, s);
    s -= Nt;
    for (size_t i = 0; i < nvf.size(); ++i) {
      if (s < nvf[i]) return uF(static_cast<int>(i), comp, s);
      s -= nvf[i];
    }
    throw std::out_of_range("LocalLayout::vel_dof");
  }
  int scal_uF(int i, int j) const {
    int s = Nt;
    for (int a = 0; a < i; ++a) s += nvf[a];
    return s + j;
  }
};

/// Per-face caches of a LocalKit. Quadrature points live on the element's own
/// side; the face basis is evaluated in the owner frame so periodic partners
/// share one polynomial space.
struct KitFace {
  int face_id = -1;
  int dof_face = -1;
  FaceTag tag = FaceTag::Interior;
  double h = 0.0;
  Vec2 normal = Vec2::Zero();
  Vec2 shift = Vec2::Zero();
  FaceBasis basis;       // owner frame, degree max(t, dv, p)
  QuadratureRule rule;   // own-frame physical points
  MatrixXd fvals;        // q x (fb_deg+1)
  MatrixXd evals;        // q x R   element scalar family at face points
  MatrixXd egn;          // q x R   its normal derivative
  MatrixXd pvals;        // q x Nk  element pressure basis at face points
  MatrixXd Rstab;        // (qd+1) x ns   stabilization residual to degree qd = max(t, dv)
  MatrixXd Mstab;        // (qd+1) x (qd+1) face mass for the residual space
  MatrixXd Mv;           // nvf x nvf    face velocity mass
  MatrixXd Gn;           // nvf x ns     rows <psi_j, d_n(reconstruction of .)>
};

/// Precomputed per-element operator bundle. Construction is independent per
/// element and side-effect free, so kits can be built concurrently.
struct LocalKit {
  int elem = -1;
  DegreeProfile prof;
  LocalLayout lay;
  double area = 0.0, hT = 0.0;
  double eta_eff = 0.0;  // boundary penalty weight eta (k+1)^2, used as eta_eff nu / h_F
  int R = 0;             // reconstruction space dim, degree k+1

  ScalarBasis elem_basis;  // scalar family of degree k+1 (velocity/reconstruction prefixes)
  ScalarBasis pres_basis;  // degree k, non-constant members shifted to zero mean

  QuadratureRule erule;
  MatrixXd evals, egx, egy;  // q x R
  MatrixXd pvals;            // q x Nk
  MatrixXd em_mass;          // R x R
  VectorXd mu;               // integrals of the scalar family
  MatrixXd Krec;             // gradient Gram, R x R
  MatrixXd P;                // R x ns   scalar potential reconstruction
  MatrixXd visc_scalar;      // ns x ns  scalar viscous kernel (multiply by nu)
  MatrixXd mass_t;           // Nt x Nt
  std::vector<KitFace> faces;

  /// Lifts a scalar (ns x ns) kernel into rows/cols of an (ndof x ndof)
  /// local matrix, acting identically on both velocity components.
  void add_lifted(const MatrixXd& scal, double factor, MatrixXd& target) const;
};

LocalKit build_local_kit(const Mesh& mesh, int elem, const DegreeProfile& prof, double eta,
                         int quad_order = -1);

int default_quad_order(const DegreeProfile& prof);

/// Hybrid interpolate of a velocity field: element L2 projection plus
/// face-trace projections; returned in scalar-hybrid order per component
/// (size 2*ns, organized like the velocity dofs of the local layout).
VectorXd interpolate_velocity(const LocalKit& kit, const std::function<Vec2(Vec2)>& u);

/// Element + face pressure projections, [p_T | p_F0 | p_F1 ...].
VectorXd interpolate_pressure(const LocalKit& kit, const std::function<double(Vec2)>& p);

/// Scatter the outputs of the two interpolants into a local state vector.
VectorXd assemble_local_state(const LocalKit& kit, const VectorXd& vel, const VectorXd& pres);

}  // namespace hhoflow
