#pragma once

#include <array>
#include <optional>
#include <string>

#include "hhoflow/common.hpp"

namespace hhoflow {

enum class FaceTag : uint8_t { Interior, Dirichlet, Neumann, Periodic };

struct Face {
  std::array<int, 2> v{-1, -1};     // vertex ids, in the orientation of the first element
  std::array<int, 2> elem{-1, -1};  // adjacent elements; elem[1] < 0 on the boundary
  FaceTag tag = FaceTag::Interior;
  int periodic_partner = -1;
  double h = 0.0;  // length
  Vec2 midpoint = Vec2::Zero();

  bool on_boundary() const { return elem[1] < 0 && tag != FaceTag::Periodic; }
};

/// Per-element view of one of its faces.
struct ElementFace {
  int face = -1;              // global face id (this element's own side)
  Vec2 normal = Vec2::Zero(); // outward unit normal n_TF
  Vec2 shift = Vec2::Zero();  // translation into the owner frame (periodic partners only)
};

/// Immutable after construction; safe to share across threads read-only.
struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::vector<int>> elements;  // CCW vertex loops
  std::vector<Face> faces;
  std::vector<std::vector<ElementFace>> element_faces;
  std::vector<double> h_T;    // max pairwise vertex distance
  std::vector<double> area;   // shoelace, positive
  std::vector<Vec2> centroid;

  int n_elements() const { return static_cast<int>(elements.size()); }
  int n_faces() const { return static_cast<int>(faces.size()); }
  int n_vertices() const { return static_cast<int>(vertices.size()); }
  double h_max() const;

  /// Face id carrying the DOFs (periodic pairs share the lower of the two ids).
  int dof_face(int f) const {
    const Face& fc = faces[f];
    return fc.tag == FaceTag::Periodic ? std::min(f, fc.periodic_partner) : f;
  }

  std::vector<Vec2> element_loop(int e) const;
  std::array<Vec2, 2> face_endpoints(int f) const {
    return {vertices[faces[f].v[0]], vertices[faces[f].v[1]]};
  }

  int count_tag(FaceTag tag) const;
  bool has_tag(FaceTag tag) const { return count_tag(tag) > 0; }
};

Mesh build_tri_mesh(const Rect& domain, int nx, int ny);
Mesh build_quad_mesh(const Rect& domain, int nx, int ny);

/// Re-tags translation-matched opposite boundary faces as periodic partners.
/// Unmatched faces (1e-12 tolerance on translated coordinates) are an error.
Mesh apply_periodic(const Mesh& mesh, bool dir_x, bool dir_y);

/// Displaces interior vertices by seeded pseudo-random vectors of norm at
/// most magnitude times the smallest incident face length. Boundary vertices
/// stay put. Retries with halved magnitude if an element inverts.
Mesh distort_mesh(const Mesh& mesh, double magnitude, uint64_t seed);

struct BoundaryTagCounts {
  int dirichlet = 0;
  int neumann = 0;
};

using BoundaryClassifier = std::function<std::optional<FaceTag>(const Vec2& midpoint, const Vec2& normal)>;

/// Applies the classifier to every boundary face; a nullopt answer is an error.
BoundaryTagCounts tag_boundary(Mesh& mesh, const BoundaryClassifier& classify);

void write_mesh(const Mesh& mesh, const std::string& path);
Mesh read_mesh(const std::string& path);

}  // namespace hhoflow
