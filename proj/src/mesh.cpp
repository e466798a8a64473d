#include "hhoflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace hhoflow {

namespace {

double shoelace_area(const std::vector<Vec2>& loop) {
  double a = 0.0;
  const int n = static_cast<int>(loop.size());
  for (int i = 0; i < n; ++i) {
    const Vec2& p = loop[i];
    const Vec2& q = loop[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * a;
}

Vec2 polygon_centroid(const std::vector<Vec2>& loop, double area) {
  Vec2 c = Vec2::Zero();
  const int n = static_cast<int>(loop.size());
  for (int i = 0; i < n; ++i) {
    const Vec2& p = loop[i];
    const Vec2& q = loop[(i + 1) % n];
    const double cross = p.x() * q.y() - q.x() * p.y();
    c += cross * (p + q);
  }
  return c / (6.0 * area);
}

bool element_valid(const std::vector<Vec2>& loop) {
  if (loop.size() == 3) return shoelace_area(loop) > 0.0;
  // Quads: the bilinear Jacobian is affine per reference direction, so corner
  // positivity implies positivity everywhere.
  for (int i = 0; i < 4; ++i) {
    Vec2 e0 = loop[(i + 1) % 4] - loop[i];
    Vec2 e1 = loop[(i + 3) % 4] - loop[i];
    if (e0.x() * e1.y() - e0.y() * e1.x() <= 0.0) return false;
  }
  return true;
}

/// Derives faces, incidence, normals and metrics from vertices + elements.
void finalize_topology(Mesh& mesh) {
  mesh.faces.clear();
  mesh.element_faces.assign(mesh.elements.size(), {});
  mesh.h_T.assign(mesh.elements.size(), 0.0);
  mesh.area.assign(mesh.elements.size(), 0.0);
  mesh.centroid.assign(mesh.elements.size(), Vec2::Zero());

  std::map<std::pair<int, int>, int> face_of;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& loop = mesh.elements[e];
    const int n = static_cast<int>(loop.size());
    for (int i = 0; i < n; ++i) {
      const int a = loop[i], b = loop[(i + 1) % n];
      const auto key = std::minmax(a, b);
      auto it = face_of.find(key);
      int fid;
      if (it == face_of.end()) {
        fid = mesh.n_faces();
        Face fc;
        fc.v = {a, b};
        fc.elem = {e, -1};
        const Vec2 pa = mesh.vertices[a], pb = mesh.vertices[b];
        fc.h = (pb - pa).norm();
        fc.midpoint = 0.5 * (pa + pb);
        mesh.faces.push_back(fc);
        face_of.emplace(key, fid);
      } else {
        fid = it->second;
        if (mesh.faces[fid].elem[1] >= 0)
          throw std::runtime_error("mesh: face shared by more than two elements");
        mesh.faces[fid].elem[1] = e;
      }
      // Outward normal of a CCW loop: edge direction rotated by -90 degrees.
      const Vec2 d = mesh.vertices[b] - mesh.vertices[a];
      ElementFace ef;
      ef.face = fid;
      ef.normal = Vec2(d.y(), -d.x()).normalized();
      mesh.element_faces[e].push_back(ef);
    }
    std::vector<Vec2> pts = mesh.element_loop(e);
    const double area = shoelace_area(pts);
    if (area <= 0.0) throw std::runtime_error("mesh: non-positive element area");
    mesh.area[e] = area;
    mesh.centroid[e] = polygon_centroid(pts, area);
    double h = 0.0;
    for (size_t i = 0; i < pts.size(); ++i)
      for (size_t j = i + 1; j < pts.size(); ++j) h = std::max(h, (pts[i] - pts[j]).norm());
    mesh.h_T[e] = h;
  }
  for (Face& fc : mesh.faces)
    if (fc.elem[1] < 0 && fc.tag == FaceTag::Interior) fc.tag = FaceTag::Dirichlet;
}

}  // namespace

double Mesh::h_max() const {
  double h = 0.0;
  for (double v : h_T) h = std::max(h, v);
  return h;
}

std::vector<Vec2> Mesh::element_loop(int e) const {
  std::vector<Vec2> pts;
  pts.reserve(elements[e].size());
  for (int v : elements[e]) pts.push_back(vertices[v]);
  return pts;
}

int Mesh::count_tag(FaceTag tag) const {
  int n = 0;
  for (const Face& f : faces) n += (f.tag == tag) ? 1 : 0;
  return n;
}

Mesh build_tri_mesh(const Rect& domain, int nx, int ny) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("build_tri_mesh: nx, ny must be >= 1");
  if (domain.width() <= 0.0 || domain.height() <= 0.0)
    throw std::invalid_argument("build_tri_mesh: degenerate rectangle");
  Mesh mesh;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      mesh.vertices.emplace_back(domain.xmin + domain.width() * i / nx,
                                 domain.ymin + domain.height() * j / ny);
  auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
  // Each Cartesian cell split along its lower-left -> upper-right diagonal.
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j), v11 = vid(i + 1, j + 1), v01 = vid(i, j + 1);
      mesh.elements.push_back({v00, v10, v11});
      mesh.elements.push_back({v00, v11, v01});
    }
  finalize_topology(mesh);
  return mesh;
}

Mesh build_quad_mesh(const Rect& domain, int nx, int ny) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("build_quad_mesh: nx, ny must be >= 1");
  if (domain.width() <= 0.0 || domain.height() <= 0.0)
    throw std::invalid_argument("build_quad_mesh: degenerate rectangle");
  Mesh mesh;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      mesh.vertices.emplace_back(domain.xmin + domain.width() * i / nx,
                                 domain.ymin + domain.height() * j / ny);
  auto vid = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      mesh.elements.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)});
  finalize_topology(mesh);
  return mesh;
}

namespace {

void pair_direction(Mesh& mesh, const Vec2& translation, double lo_coord, double hi_coord, int axis) {
  constexpr double tol = 1e-12;
  std::vector<int> lo_faces, hi_faces;
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const Face& fc = mesh.faces[f];
    if (fc.elem[1] >= 0 || fc.tag == FaceTag::Periodic) continue;
    if (std::abs(fc.midpoint(axis) - lo_coord) < tol) lo_faces.push_back(f);
    if (std::abs(fc.midpoint(axis) - hi_coord) < tol) hi_faces.push_back(f);
  }
  if (lo_faces.size() != hi_faces.size())
    throw std::runtime_error("apply_periodic: opposite sides carry different face counts");
  for (int f : lo_faces) {
    const Vec2 target = mesh.faces[f].midpoint + translation;
    int match = -1;
    for (int g : hi_faces) {
      if ((mesh.faces[g].midpoint - target).norm() < tol) {
        // endpoints must also match under translation (either orientation)
        auto [a0, a1] = mesh.face_endpoints(f);
        auto [b0, b1] = mesh.face_endpoints(g);
        const bool fwd = ((a0 + translation) - b0).norm() < tol && ((a1 + translation) - b1).norm() < tol;
        const bool rev = ((a0 + translation) - b1).norm() < tol && ((a1 + translation) - b0).norm() < tol;
        if (fwd || rev) match = g;
        break;
      }
    }
    if (match < 0)
      throw std::runtime_error("apply_periodic: no translated match for a boundary face");
    mesh.faces[f].tag = FaceTag::Periodic;
    mesh.faces[f].periodic_partner = match;
    mesh.faces[match].tag = FaceTag::Periodic;
    mesh.faces[match].periodic_partner = f;
  }
}

}  // namespace

Mesh apply_periodic(const Mesh& input, bool dir_x, bool dir_y) {
  Mesh mesh = input;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Vec2& v : mesh.vertices) {
    xmin = std::min(xmin, v.x());
    xmax = std::max(xmax, v.x());
    ymin = std::min(ymin, v.y());
    ymax = std::max(ymax, v.y());
  }
  if (dir_x) pair_direction(mesh, Vec2(xmax - xmin, 0.0), xmin, xmax, 0);
  if (dir_y) pair_direction(mesh, Vec2(0.0, ymax - ymin), ymin, ymax, 1);

  // Record the owner-frame shift on the partner (higher-id) side.
  for (int e = 0; e < mesh.n_elements(); ++e) {
    for (ElementFace& ef : mesh.element_faces[e]) {
      Face& fc = mesh.faces[ef.face];
      if (fc.tag == FaceTag::Periodic && fc.periodic_partner < ef.face) {
        const Face& owner = mesh.faces[fc.periodic_partner];
        ef.shift = owner.midpoint - fc.midpoint;
      } else {
        ef.shift = Vec2::Zero();
      }
    }
  }
  return mesh;
}

Mesh distort_mesh(const Mesh& input, double magnitude, uint64_t seed) {
  if (magnitude < 0.0 || magnitude >= 0.5)
    throw std::invalid_argument("distort_mesh: magnitude must lie in [0, 0.5)");
  if (magnitude == 0.0) return input;

  std::vector<bool> on_boundary(input.n_vertices(), false);
  for (const Face& fc : input.faces)
    if (fc.elem[1] < 0) {
      on_boundary[fc.v[0]] = true;
      on_boundary[fc.v[1]] = true;
    }
  std::vector<double> min_h(input.n_vertices(), 1e300);
  for (const Face& fc : input.faces) {
    min_h[fc.v[0]] = std::min(min_h[fc.v[0]], fc.h);
    min_h[fc.v[1]] = std::min(min_h[fc.v[1]], fc.h);
  }

  double mag = magnitude;
  for (int attempt = 0; attempt < 6; ++attempt) {
    Mesh mesh = input;
    std::mt19937_64 rng(seed);
    for (int v = 0; v < mesh.n_vertices(); ++v) {
      const double angle = 2.0 * M_PI * uniform01(rng());
      const double radius = uniform01(rng());
      if (on_boundary[v]) continue;  // draws above keep the stream aligned across retries
      mesh.vertices[v] += mag * min_h[v] * radius * Vec2(std::cos(angle), std::sin(angle));
    }
    bool ok = true;
    for (int e = 0; e < mesh.n_elements() && ok; ++e) ok = element_valid(mesh.element_loop(e));
    if (ok) {
      std::vector<Face> tags = input.faces;
      finalize_topology(mesh);
      for (int f = 0; f < mesh.n_faces(); ++f) {
        mesh.faces[f].tag = tags[f].tag;
        mesh.faces[f].periodic_partner = tags[f].periodic_partner;
      }
      for (int e = 0; e < mesh.n_elements(); ++e)
        for (size_t i = 0; i < mesh.element_faces[e].size(); ++i)
          mesh.element_faces[e][i].shift = input.element_faces[e][i].shift;
      return mesh;
    }
    mag *= 0.5;
  }
  throw std::runtime_error("distort_mesh: element inversion persists after 5 retries");
}

BoundaryTagCounts tag_boundary(Mesh& mesh, const BoundaryClassifier& classify) {
  BoundaryTagCounts counts;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    for (const ElementFace& ef : mesh.element_faces[e]) {
      Face& fc = mesh.faces[ef.face];
      if (fc.elem[1] >= 0 || fc.tag == FaceTag::Periodic) continue;
      auto tag = classify(fc.midpoint, ef.normal);
      if (!tag) throw std::runtime_error("tag_boundary: classifier left a boundary face untagged");
      if (*tag == FaceTag::Interior || *tag == FaceTag::Periodic)
        throw std::runtime_error("tag_boundary: classifier may only assign Dirichlet or Neumann");
      fc.tag = *tag;
      if (*tag == FaceTag::Dirichlet) ++counts.dirichlet;
      if (*tag == FaceTag::Neumann) ++counts.neumann;
    }
  }
  return counts;
}

void write_mesh(const Mesh& mesh, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("write_mesh: cannot open " + path);
  std::fprintf(f, "hhoflow-mesh 1\n");
  std::fprintf(f, "vertices %d\n", mesh.n_vertices());
  for (const Vec2& v : mesh.vertices) std::fprintf(f, "%.17g %.17g\n", v.x(), v.y());
  std::fprintf(f, "elements %d\n", mesh.n_elements());
  for (const auto& loop : mesh.elements) {
    std::fprintf(f, "%d", static_cast<int>(loop.size()));
    for (int v : loop) std::fprintf(f, " %d", v);
    std::fprintf(f, "\n");
  }
  std::fprintf(f, "faces %d\n", mesh.n_faces());
  for (const Face& fc : mesh.faces) {
    char tag = 'I';
    if (fc.tag == FaceTag::Dirichlet) tag = 'D';
    if (fc.tag == FaceTag::Neumann) tag = 'N';
    if (fc.tag == FaceTag::Periodic) tag = 'P';
    if (fc.tag == FaceTag::Periodic)
      std::fprintf(f, "%d %d %c %d\n", fc.v[0], fc.v[1], tag, fc.periodic_partner);
    else
      std::fprintf(f, "%d %d %c\n", fc.v[0], fc.v[1], tag);
  }
  std::fclose(f);
}

Mesh read_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_mesh: cannot open " + path);
  std::string word;
  int version = 0;
  in >> word >> version;
  if (word != "hhoflow-mesh" || version != 1)
    throw std::runtime_error("read_mesh: unrecognized header in " + path);

  Mesh mesh;
  int n = 0;
  in >> word >> n;
  if (word != "vertices") throw std::runtime_error("read_mesh: expected vertices section");
  mesh.vertices.resize(n);
  for (int i = 0; i < n; ++i) in >> mesh.vertices[i].x() >> mesh.vertices[i].y();

  in >> word >> n;
  if (word != "elements") throw std::runtime_error("read_mesh: expected elements section");
  mesh.elements.resize(n);
  for (int e = 0; e < n; ++e) {
    int m = 0;
    in >> m;
    mesh.elements[e].resize(m);
    for (int i = 0; i < m; ++i) in >> mesh.elements[e][i];
  }
  finalize_topology(mesh);

  in >> word >> n;
  if (word != "faces") throw std::runtime_error("read_mesh: expected faces section");
  if (n != mesh.n_faces()) throw std::runtime_error("read_mesh: face count mismatch");
  std::map<std::pair<int, int>, int> face_of;
  for (int f = 0; f < mesh.n_faces(); ++f)
    face_of[std::minmax(mesh.faces[f].v[0], mesh.faces[f].v[1])] = f;
  bool any_periodic = false;
  for (int i = 0; i < n; ++i) {
    int a = 0, b = 0;
    char tag = 'I';
    in >> a >> b >> tag;
    auto it = face_of.find(std::minmax(a, b));
    if (it == face_of.end()) throw std::runtime_error("read_mesh: unknown face in tag list");
    Face& fc = mesh.faces[it->second];
    switch (tag) {
      case 'I': fc.tag = FaceTag::Interior; break;
      case 'D': fc.tag = FaceTag::Dirichlet; break;
      case 'N': fc.tag = FaceTag::Neumann; break;
      case 'P': {
        fc.tag = FaceTag::Periodic;
        in >> fc.periodic_partner;
        any_periodic = true;
        break;
      }
      default: throw std::runtime_error("read_mesh: unknown face tag");
    }
  }
  if (any_periodic) {
    for (int e = 0; e < mesh.n_elements(); ++e) {
      for (ElementFace& ef : mesh.element_faces[e]) {
        Face& fc = mesh.faces[ef.face];
        if (fc.tag == FaceTag::Periodic && fc.periodic_partner < ef.face)
          ef.shift = mesh.faces[fc.periodic_partner].midpoint - fc.midpoint;
      }
    }
  }
  return mesh;
}

}  // namespace hhoflow
