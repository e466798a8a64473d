#include "hhoflow/postprocess.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"

namespace hhoflow {

namespace {

/// Element fields evaluated from the coefficient vector.
struct ElementView {
  const LocalKit* kit;
  VectorXd u0, u1, p;  // element coefficient blocks

  ElementView(const Assembler& as, const VectorXd& x, int e) : kit(&as.kits()[e]) {
    const DofMap& d = as.dofs();
    const int Nt = kit->lay.Nt;
    u0 = x.segment(d.elem_off[e], Nt);
    u1 = x.segment(d.elem_off[e] + Nt, Nt);
    p = x.segment(d.elem_p_off(e), kit->lay.Nk);
  }

  Vec2 velocity(const Vec2& pt) const {
    return Vec2(kit->elem_basis.value(u0, pt), kit->elem_basis.value(u1, pt));
  }
  Mat2 grad(const Vec2& pt) const {
    const Vec2 g0 = kit->elem_basis.gradient(u0, pt);
    const Vec2 g1 = kit->elem_basis.gradient(u1, pt);
    Mat2 g;
    g(0, 0) = g0.x();
    g(1, 0) = g0.y();
    g(0, 1) = g1.x();
    g(1, 1) = g1.y();
    return g;
  }
  double pressure(const Vec2& pt) const { return kit->pres_basis.value(p, pt); }
  double vorticity(const Vec2& pt) const {
    const Mat2 g = grad(pt);
    return g(0, 1) - g(1, 0);
  }
};

int norm_order(const DegreeProfile& prof) { return 2 * (prof.k + 2) + 2; }

}  // namespace

ErrorNorms l2_errors(const Assembler& assembler, const VectorXd& x, const CaseDefinition& def) {
  if (!def.has_exact) throw std::invalid_argument("l2_errors: case has no exact solution");
  const Mesh& mesh = assembler.mesh();
  const int ne = mesh.n_elements();
  std::vector<ErrorNorms> parts(ne);
  parallel_for(ne, [&](int e) {
    ElementView view(assembler, x, e);
    auto rule = cell_rule(mesh.element_loop(e), norm_order(assembler.config().profile));
    ErrorNorms& loc = parts[e];
    for (int q = 0; q < rule.size(); ++q) {
      const Vec2 pt = rule.point(q);
      const double w = rule.weights(q);
      const Vec2 du = view.velocity(pt) - def.exact_u(pt);
      const Mat2 dg = view.grad(pt) - def.exact_grad_u(pt);
      const double dp = view.pressure(pt) - def.exact_p(pt);
      const Mat2 g = view.grad(pt);
      loc.u += w * du.squaredNorm();
      loc.grad_u += w * dg.squaredNorm();
      loc.p += w * dp * dp;
      loc.div_u += w * (g(0, 0) + g(1, 1)) * (g(0, 0) + g(1, 1));
    }
  });
  ErrorNorms out;
  for (const ErrorNorms& p : parts) {
    out.u += p.u;
    out.grad_u += p.grad_u;
    out.p += p.p;
    out.div_u += p.div_u;
  }
  out.u = std::sqrt(out.u);
  out.grad_u = std::sqrt(out.grad_u);
  out.p = std::sqrt(out.p);
  out.div_u = std::sqrt(out.div_u);
  return out;
}

std::vector<RateEntry> convergence_rates(const std::vector<double>& errors,
                                         const std::vector<double>& h) {
  if (errors.size() != h.size())
    throw std::invalid_argument("convergence_rates: length mismatch");
  constexpr double floor = 1e-15;
  std::vector<RateEntry> rates(errors.size());
  for (size_t i = 0; i < errors.size(); ++i) {
    if (errors[i] < 0.0) throw std::invalid_argument("convergence_rates: negative error");
    if (i == 0) continue;
    RateEntry& r = rates[i];
    if (errors[i - 1] <= floor && errors[i] <= floor) {
      r.present = true;
      r.floored = true;
      r.value = 0.0;
      continue;
    }
    if (errors[i] == 0.0 || errors[i - 1] == 0.0)
      throw std::invalid_argument("convergence_rates: zero error without a floor partner");
    r.present = true;
    r.value = std::log(errors[i - 1] / errors[i]) / std::log(h[i - 1] / h[i]);
  }
  return rates;
}

namespace {

double energy_like(const Assembler& assembler, const VectorXd& x, int extra_order, bool enstro) {
  const Mesh& mesh = assembler.mesh();
  const int ne = mesh.n_elements();
  std::vector<double> parts(ne, 0.0);
  parallel_for(ne, [&](int e) {
    ElementView view(assembler, x, e);
    auto rule = cell_rule(mesh.element_loop(e),
                          norm_order(assembler.config().profile) + extra_order);
    double s = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      const Vec2 pt = rule.point(q);
      if (enstro) {
        const double w = view.vorticity(pt);
        s += rule.weights(q) * w * w;
      } else {
        s += rule.weights(q) * view.velocity(pt).squaredNorm();
      }
    }
    parts[e] = 0.5 * s;
  });
  double total = 0.0;
  for (double p : parts) total += p;
  return total;
}

}  // namespace

double kinetic_energy(const Assembler& assembler, const VectorXd& x, int extra_order) {
  return energy_like(assembler, x, extra_order, false);
}

double enstrophy(const Assembler& assembler, const VectorXd& x, int extra_order) {
  return energy_like(assembler, x, extra_order, true);
}

double relative_ke_error(const std::vector<double>& kinetic_series) {
  if (kinetic_series.size() < 2 || kinetic_series.front() == 0.0)
    throw std::invalid_argument("relative_ke_error: need a series with nonzero start");
  return (kinetic_series.front() - kinetic_series.back()) / kinetic_series.front();
}

namespace {

bool point_in_element(const Mesh& mesh, int e, const Vec2& p, double tol) {
  const auto& loop = mesh.elements[e];
  const int n = static_cast<int>(loop.size());
  for (int i = 0; i < n; ++i) {
    const Vec2 a = mesh.vertices[loop[i]];
    const Vec2 b = mesh.vertices[loop[(i + 1) % n]];
    const Vec2 d = b - a;
    if (d.x() * (p.y() - a.y()) - d.y() * (p.x() - a.x()) < -tol) return false;
  }
  return true;
}

/// Element containing p; ties resolved toward the element whose centroid has
/// the smaller coordinate along `axis`.
int locate(const Mesh& mesh, const Vec2& p, int axis) {
  int best = -1;
  const double tol = 1e-10;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    if (!point_in_element(mesh, e, p, tol)) continue;
    if (best < 0 || mesh.centroid[e](axis) < mesh.centroid[best](axis)) best = e;
  }
  return best;
}

}  // namespace

Centerlines sample_centerlines(const Assembler& assembler, const VectorXd& x, int samples) {
  const Mesh& mesh = assembler.mesh();
  const Rect dom{mesh.vertices[0].x(), mesh.vertices[0].x(), mesh.vertices[0].y(),
                 mesh.vertices[0].y()};
  Rect box = dom;
  for (const Vec2& v : mesh.vertices) {
    box.xmin = std::min(box.xmin, v.x());
    box.xmax = std::max(box.xmax, v.x());
    box.ymin = std::min(box.ymin, v.y());
    box.ymax = std::max(box.ymax, v.y());
  }
  const double xc = 0.5 * (box.xmin + box.xmax);
  const double yc = 0.5 * (box.ymin + box.ymax);

  Centerlines out;
  out.y.resize(samples);
  out.u_at_x05.resize(samples);
  out.x.resize(samples);
  out.v_at_y05.resize(samples);
  for (int i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / (samples - 1);
    const double y = box.ymin + t * (box.ymax - box.ymin);
    const double xx = box.xmin + t * (box.xmax - box.xmin);
    out.y[i] = y;
    out.x[i] = xx;
    const int ev = locate(mesh, Vec2(xc, y), 0);
    const int eh = locate(mesh, Vec2(xx, yc), 1);
    out.u_at_x05[i] = ev >= 0 ? ElementView(assembler, x, ev).velocity(Vec2(xc, y)).x() : 0.0;
    out.v_at_y05[i] = eh >= 0 ? ElementView(assembler, x, eh).velocity(Vec2(xx, yc)).y() : 0.0;
  }
  return out;
}

void export_vtk(const Assembler& assembler, const VectorXd& x, const std::string& path) {
  const Mesh& mesh = assembler.mesh();
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("export_vtk: cannot open " + path);

  const int n = assembler.config().profile.k + 1;  // lattice density per element
  std::vector<Vec2> points;
  std::vector<std::array<int, 3>> tris;
  std::vector<int> owner;  // element of each point

  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto loop = mesh.element_loop(e);
    const int base = static_cast<int>(points.size());
    if (loop.size() == 3) {
      auto idx = [&](int i, int j) { return base + i * (2 * n + 3 - i) / 2 + j; };
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n - i; ++j) {
          const double l1 = static_cast<double>(i) / n, l2 = static_cast<double>(j) / n;
          points.push_back((1 - l1 - l2) * loop[0] + l2 * loop[1] + l1 * loop[2]);
          owner.push_back(e);
        }
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n - i; ++j) {
          tris.push_back({idx(i, j), idx(i, j + 1), idx(i + 1, j)});
          if (j + 1 <= n - i - 1) tris.push_back({idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j)});
        }
    } else {
      auto idx = [&](int i, int j) { return base + i * (n + 1) + j; };
      for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) {
          const double a = static_cast<double>(j) / n, b = static_cast<double>(i) / n;
          points.push_back((1 - a) * (1 - b) * loop[0] + a * (1 - b) * loop[1] + a * b * loop[2] +
                           (1 - a) * b * loop[3]);
          owner.push_back(e);
        }
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          tris.push_back({idx(i, j), idx(i, j + 1), idx(i + 1, j + 1)});
          tris.push_back({idx(i, j), idx(i + 1, j + 1), idx(i + 1, j)});
        }
    }
  }

  std::fprintf(f, "# vtk DataFile Version 3.0\nhhoflow fields\nASCII\nDATASET UNSTRUCTURED_GRID\n");
  std::fprintf(f, "POINTS %zu double\n", points.size());
  for (const Vec2& p : points) std::fprintf(f, "%.12g %.12g 0\n", p.x(), p.y());
  std::fprintf(f, "CELLS %zu %zu\n", tris.size(), 4 * tris.size());
  for (const auto& t : tris) std::fprintf(f, "3 %d %d %d\n", t[0], t[1], t[2]);
  std::fprintf(f, "CELL_TYPES %zu\n", tris.size());
  for (size_t i = 0; i < tris.size(); ++i) std::fprintf(f, "5\n");

  std::fprintf(f, "POINT_DATA %zu\n", points.size());
  std::fprintf(f, "VECTORS velocity double\n");
  std::vector<ElementView> views;
  views.reserve(mesh.n_elements());
  for (int e = 0; e < mesh.n_elements(); ++e) views.emplace_back(assembler, x, e);
  for (size_t i = 0; i < points.size(); ++i) {
    const Vec2 u = views[owner[i]].velocity(points[i]);
    std::fprintf(f, "%.12g %.12g 0\n", u.x(), u.y());
  }
  std::fprintf(f, "SCALARS pressure double 1\nLOOKUP_TABLE default\n");
  for (size_t i = 0; i < points.size(); ++i)
    std::fprintf(f, "%.12g\n", views[owner[i]].pressure(points[i]));
  std::fprintf(f, "SCALARS vorticity double 1\nLOOKUP_TABLE default\n");
  for (size_t i = 0; i < points.size(); ++i)
    std::fprintf(f, "%.12g\n", views[owner[i]].vorticity(points[i]));
  std::fclose(f);
}

namespace {

std::string rate_cell(const RateEntry& r) {
  if (!r.present) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", r.floored ? 0.0 : r.value);
  return buf;
}

}  // namespace

void export_csv(const std::vector<RunRecord>& rows, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("export_csv: cannot open " + path);
  std::fprintf(f,
               "case,scheme,k,cells,h,err_gradu,rate_gradu,err_u,rate_u,err_p,rate_p,err_div,"
               "rate_div,newton_iters,seconds\n");
  for (const RunRecord& r : rows) {
    std::fprintf(f, "%s,%s,%d,%d,%.6g,%.6e,%s,%.6e,%s,%.6e,%s,%.6e,%s,%d,%.3f\n",
                 r.case_name.c_str(), r.scheme.c_str(), r.k, r.cells, r.h, r.err.grad_u,
                 rate_cell(r.rate_gradu).c_str(), r.err.u, rate_cell(r.rate_u).c_str(), r.err.p,
                 rate_cell(r.rate_p).c_str(), r.err.div_u, rate_cell(r.rate_div).c_str(),
                 r.newton_iters, r.seconds);
  }
  std::fclose(f);
}

namespace {

std::string hexf(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double unhexf(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

nlohmann::json hex_array(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double d : v) a.push_back(hexf(d));
  return a;
}

std::vector<double> unhex_array(const nlohmann::json& a) {
  std::vector<double> v;
  for (const auto& s : a) v.push_back(unhexf(s.get<std::string>()));
  return v;
}

}  // namespace

void save_report(const RunReport& r, const std::string& path) {
  nlohmann::json j;
  j["case"] = r.case_name;
  j["scheme"] = r.scheme;
  j["k"] = r.k;
  j["cells"] = r.cells;
  j["h"] = hexf(r.h);
  j["err_gradu"] = hexf(r.err.grad_u);
  j["err_u"] = hexf(r.err.u);
  j["err_p"] = hexf(r.err.p);
  j["err_div"] = hexf(r.err.div_u);
  j["times"] = hex_array(r.times);
  j["kinetic"] = hex_array(r.kinetic);
  j["enstrophy"] = hex_array(r.enstrophy_series);
  j["newton_iters"] = r.newton_iters;
  j["converged"] = r.converged;
  j["failure"] = r.failure;
  j["seconds"] = hexf(r.seconds);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_report: cannot open " + path);
  out << j.dump(2) << "\n";
}

RunReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_report: cannot open " + path);
  nlohmann::json j;
  in >> j;
  RunReport r;
  r.case_name = j["case"];
  r.scheme = j["scheme"];
  r.k = j["k"];
  r.cells = j["cells"];
  r.h = unhexf(j["h"]);
  r.err.grad_u = unhexf(j["err_gradu"]);
  r.err.u = unhexf(j["err_u"]);
  r.err.p = unhexf(j["err_p"]);
  r.err.div_u = unhexf(j["err_div"]);
  r.times = unhex_array(j["times"]);
  r.kinetic = unhex_array(j["kinetic"]);
  r.enstrophy_series = unhex_array(j["enstrophy"]);
  r.newton_iters = j["newton_iters"];
  r.converged = j["converged"];
  r.failure = j["failure"];
  r.seconds = unhexf(j["seconds"]);
  return r;
}

HdivConformity hdiv_conformity(const Assembler& assembler, const VectorXd& x,
                               const CaseDefinition& def) {
  const Mesh& mesh = assembler.mesh();
  const auto& kits = assembler.kits();
  HdivConformity out;

  // normal-trace samples per dof face, accumulated from both sides; the
  // canonical face-rule orientation aligns the quadrature points of the two
  // sides (periodic images included)
  std::map<int, VectorXd> jump;
  std::map<int, VectorXd> weights;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    ElementView view(assembler, x, e);
    const LocalKit& kit = kits[e];
    for (const KitFace& kf : kit.faces) {
      if (kf.tag == FaceTag::Neumann || kf.tag == FaceTag::Dirichlet) continue;
      VectorXd& acc = jump[kf.dof_face];
      if (acc.size() == 0) {
        acc = VectorXd::Zero(kf.rule.size());
        weights[kf.dof_face] = kf.rule.weights;
      }
      for (int q = 0; q < kf.rule.size(); ++q)
        acc(q) += view.velocity(kf.rule.point(q)).dot(kf.normal);
    }
  }
  for (const auto& [face, vals] : jump) {
    double s = 0.0;
    for (int q = 0; q < vals.size(); ++q) s += weights[face](q) * vals(q) * vals(q);
    out.max_interior_jump = std::max(out.max_interior_jump, std::sqrt(s));
  }

  for (int e = 0; e < mesh.n_elements(); ++e) {
    ElementView view(assembler, x, e);
    const LocalKit& kit = kits[e];
    for (const KitFace& kf : kit.faces) {
      if (kf.tag != FaceTag::Dirichlet) continue;
      // project (u_T - g_D) . n onto the face space of degree k+1
      const int np = assembler.config().profile.k + 2;
      MatrixXd mass = MatrixXd::Zero(np, np);
      VectorXd rhs = VectorXd::Zero(np);
      for (int q = 0; q < kf.rule.size(); ++q) {
        const auto psi = kf.fvals.row(q).head(np);
        const double val =
            (view.velocity(kf.rule.point(q)) - def.g_D(kf.rule.point(q))).dot(kf.normal);
        mass += kf.rule.weights(q) * psi.transpose() * psi;
        rhs += kf.rule.weights(q) * val * psi.transpose();
      }
      VectorXd c = mass.llt().solve(rhs);
      out.max_dirichlet_mismatch = std::max(out.max_dirichlet_mismatch, std::sqrt(c.dot(mass * c)));
    }
  }

  // global divergence norm
  const int ne = mesh.n_elements();
  std::vector<double> div(ne, 0.0);
  parallel_for(ne, [&](int e) {
    ElementView view(assembler, x, e);
    auto rule = cell_rule(mesh.element_loop(e), norm_order(assembler.config().profile));
    double s = 0.0;
    for (int q = 0; q < rule.size(); ++q) {
      const Mat2 g = view.grad(rule.point(q));
      s += rule.weights(q) * (g(0, 0) + g(1, 1)) * (g(0, 0) + g(1, 1));
    }
    div[e] = s;
  });
  double total = 0.0;
  for (double d : div) total += d;
  out.div_norm = std::sqrt(total);
  return out;
}

}  // namespace hhoflow
