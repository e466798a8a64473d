#include "hhoflow/quadrature.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>

namespace hhoflow {

int thread_budget() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* env = std::getenv("HHOFLOW_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1 && cap < n) n = cap;
  }
  return n;
}

void parallel_for(int n, const std::function<void(int)>& fn) {
  int nt = std::min(thread_budget(), n);
  if (nt <= 1 || n < 4) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(nt);
  std::atomic<int> next{0};
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  // Newton iteration on P_n from the Chebyshev-like initial guess.
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double pp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double pnm1 = 1.0, pn = x;
      for (int j = 2; j <= n; ++j) {
        double pnew = ((2.0 * j - 1.0) * x * pn - (j - 1.0) * pnm1) / j;
        pnm1 = pn;
        pn = pnew;
      }
      pp = n * (x * pn - pnm1) / (x * x - 1.0);
      double dx = pn / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    nodes[i] = -x;
    nodes[n - 1 - i] = x;
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
}

QuadratureRule segment_rule(const Vec2& a, const Vec2& b, int order) {
  int n = order / 2 + 1;  // 2n-1 >= order
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  QuadratureRule rule;
  rule.points.resize(n, 2);
  rule.weights.resize(n);
  const double half = 0.5 * (b - a).norm();
  for (int q = 0; q < n; ++q) {
    Vec2 p = 0.5 * (a + b) + 0.5 * x[q] * (b - a);
    rule.points.row(q) = p.transpose();
    rule.weights(q) = w[q] * half;
  }
  return rule;
}

QuadratureRule triangle_rule(const Vec2& a, const Vec2& b, const Vec2& c, int order) {
  // Duffy map (xi, eta) -> (xi, eta (1 - xi)) onto the unit reference
  // triangle. A total-degree-n integrand times the (1 - xi) Jacobian has
  // degree <= n+1 in xi and <= n in eta.
  int mx = (order + 3) / 2;
  int my = (order + 2) / 2;
  std::vector<double> xg, wxg, yg, wyg;
  gauss_legendre(mx, xg, wxg);
  gauss_legendre(my, yg, wyg);

  const double jac = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();  // = 2*area
  QuadratureRule rule;
  rule.points.resize(mx * my, 2);
  rule.weights.resize(mx * my);
  int idx = 0;
  for (int i = 0; i < mx; ++i) {
    const double xi = 0.5 * (xg[i] + 1.0);
    for (int j = 0; j < my; ++j) {
      const double eta = 0.5 * (yg[j] + 1.0);
      const double rx = xi;
      const double ry = eta * (1.0 - xi);
      Vec2 p = a + rx * (b - a) + ry * (c - a);
      rule.points.row(idx) = p.transpose();
      rule.weights(idx) = 0.25 * wxg[i] * wyg[j] * (1.0 - xi) * jac;
      ++idx;
    }
  }
  return rule;
}

QuadratureRule quadrilateral_rule(const std::array<Vec2, 4>& corners, int order) {
  // Bilinear map from [0,1]^2; integrand times det J has degree <= order+1
  // per direction.
  int m = (order + 3) / 2;
  std::vector<double> g, wg;
  gauss_legendre(m, g, wg);

  const Vec2& p0 = corners[0];
  const Vec2& p1 = corners[1];
  const Vec2& p2 = corners[2];
  const Vec2& p3 = corners[3];
  QuadratureRule rule;
  rule.points.resize(m * m, 2);
  rule.weights.resize(m * m);
  int idx = 0;
  for (int i = 0; i < m; ++i) {
    const double xi = 0.5 * (g[i] + 1.0);
    for (int j = 0; j < m; ++j) {
      const double eta = 0.5 * (g[j] + 1.0);
      Vec2 p = (1 - xi) * (1 - eta) * p0 + xi * (1 - eta) * p1 + xi * eta * p2 + (1 - xi) * eta * p3;
      Vec2 dxi = (1 - eta) * (p1 - p0) + eta * (p2 - p3);
      Vec2 deta = (1 - xi) * (p3 - p0) + xi * (p2 - p1);
      const double det = dxi.x() * deta.y() - dxi.y() * deta.x();
      if (det <= 0.0) throw std::runtime_error("quadrilateral_rule: non-positive Jacobian");
      rule.points.row(idx) = p.transpose();
      rule.weights(idx) = 0.25 * wg[i] * wg[j] * det;
      ++idx;
    }
  }
  return rule;
}

QuadratureRule cell_rule(const std::vector<Vec2>& loop, int order) {
  if (loop.size() == 3) return triangle_rule(loop[0], loop[1], loop[2], order);
  if (loop.size() == 4) return quadrilateral_rule({loop[0], loop[1], loop[2], loop[3]}, order);
  throw std::runtime_error("cell_rule: unsupported cell shape with " +
                           std::to_string(loop.size()) + " vertices");
}

}  // namespace hhoflow
