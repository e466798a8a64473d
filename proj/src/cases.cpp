#include "hhoflow/cases.hpp"

#include <cmath>
#include <random>

namespace hhoflow {

namespace {

std::function<Vec2(Vec2, Vec2)> traction_from(const CaseDefinition& def) {
  auto u_grad = def.exact_grad_u;
  auto p = def.exact_p;
  const double nu = def.nu;
  return [u_grad, p, nu](Vec2 x, Vec2 n) {
    const Mat2 g = u_grad(x);
    Vec2 ndotgrad(n.x() * g(0, 0) + n.y() * g(1, 0), n.x() * g(0, 1) + n.y() * g(1, 1));
    return Vec2(p(x) * n - nu * ndotgrad);
  };
}

BoundaryClassifier right_side_neumann() {
  return [](const Vec2&, const Vec2& n) -> std::optional<FaceTag> {
    return n.x() > 0.5 ? FaceTag::Neumann : FaceTag::Dirichlet;
  };
}

BoundaryClassifier all_dirichlet() {
  return [](const Vec2&, const Vec2&) -> std::optional<FaceTag> { return FaceTag::Dirichlet; };
}

}  // namespace

CaseDefinition kovasznay(double re) {
  if (re <= 0.0) throw std::invalid_argument("kovasznay: Re must be positive");
  CaseDefinition def;
  def.name = "kovasznay";
  def.domain = Rect{-0.5, 1.5, 0.0, 2.0};
  def.nu = 1.0 / re;
  const double kappa = re / 2.0 - std::sqrt(re * re / 4.0 + 4.0 * M_PI * M_PI);
  const double twopi = 2.0 * M_PI;
  def.has_exact = true;
  def.exact_u = [kappa, twopi](Vec2 x) {
    const double ex = std::exp(kappa * x.x());
    return Vec2(1.0 - ex * std::cos(twopi * x.y()), kappa / twopi * ex * std::sin(twopi * x.y()));
  };
  def.exact_grad_u = [kappa, twopi](Vec2 x) {
    const double ex = std::exp(kappa * x.x());
    const double c = std::cos(twopi * x.y()), s = std::sin(twopi * x.y());
    Mat2 g;
    g(0, 0) = -kappa * ex * c;            // d_x u
    g(1, 0) = twopi * ex * s;             // d_y u
    g(0, 1) = kappa * kappa / twopi * ex * s;  // d_x v
    g(1, 1) = kappa * ex * c;             // d_y v
    return g;
  };
  def.exact_p = [kappa](Vec2 x) { return -0.5 * std::exp(2.0 * kappa * x.x()); };
  def.classifier = right_side_neumann();
  def.g_D = def.exact_u;
  def.g_N = traction_from(def);
  def.initial_u = [](Vec2) { return Vec2(0, 0); };
  def.initial_p = [](Vec2) { return 0.0; };
  return def;
}

CaseDefinition llms(double nu, LLMSMode mode) {
  CaseDefinition def;
  def.name = "llms";
  def.domain = Rect{0, 1, 0, 1};
  def.nu = nu;
  // stream function g(x) g(y) with g = x^2 (x-1)^2
  auto g0 = [](double x) { return x * x * (x - 1.0) * (x - 1.0); };
  auto g1 = [](double x) { return 2.0 * x * (x - 1.0) * (2.0 * x - 1.0); };
  auto g2 = [](double x) { return 12.0 * x * x - 12.0 * x + 2.0; };
  auto g3 = [](double x) { return 24.0 * x - 12.0; };
  def.has_exact = true;
  def.exact_u = [=](Vec2 p) { return Vec2(g0(p.x()) * g1(p.y()), -g1(p.x()) * g0(p.y())); };
  def.exact_grad_u = [=](Vec2 p) {
    Mat2 g;
    g(0, 0) = g1(p.x()) * g1(p.y());   // d_x u
    g(1, 0) = g0(p.x()) * g2(p.y());   // d_y u
    g(0, 1) = -g2(p.x()) * g0(p.y());  // d_x v
    g(1, 1) = -g1(p.x()) * g1(p.y());  // d_y v
    return g;
  };
  def.exact_p = [](Vec2 p) {
    return -0.25 + std::pow(p.x(), 7) + std::pow(p.y(), 7);  // zero mean on the unit square
  };
  def.forcing = [=](Vec2 p, double) {
    const double x = p.x(), y = p.y();
    const Vec2 u(g0(x) * g1(y), -g1(x) * g0(y));
    const Mat2 gr = def.exact_grad_u(p);
    const Vec2 conv(u.x() * gr(0, 0) + u.y() * gr(1, 0), u.x() * gr(0, 1) + u.y() * gr(1, 1));
    const Vec2 gradp(7.0 * std::pow(x, 6), 7.0 * std::pow(y, 6));
    const Vec2 lap(g2(x) * g1(y) + g0(x) * g3(y), -g3(x) * g0(y) - g1(x) * g2(y));
    return Vec2(conv + gradp - nu * lap);
  };
  def.g_D = def.exact_u;
  def.g_N = traction_from(def);
  def.initial_u = [](Vec2) { return Vec2(0, 0); };
  def.initial_p = [](Vec2) { return 0.0; };
  if (mode == LLMSMode::Given) {
    def.classifier = all_dirichlet();
    def.given_mode = true;
  } else {
    def.classifier = right_side_neumann();
  }
  return def;
}

CaseDefinition gresho_chan(double u0, double v0, double p0, double nu) {
  CaseDefinition def;
  def.name = "gresho_chan";
  def.domain = Rect{0, 1, 0, 1};
  def.periodic_x = def.periodic_y = true;
  def.nu = nu;
  def.t_end = 3.0;
  def.dt = def.t_end / 1e4;
  const Vec2 center(0.5, 0.5);
  def.initial_u = [=](Vec2 p) {
    const Vec2 d = p - center;
    const double r = d.norm();
    Vec2 u(u0, v0);
    if (r < 0.2)
      u += Vec2(-5.0 * d.y(), 5.0 * d.x());
    else if (r < 0.4)
      u += Vec2(-2.0 * d.y() / r + 5.0 * d.y(), 2.0 * d.x() / r - 5.0 * d.x());
    return u;
  };
  def.initial_p = [=](Vec2 p) {
    const double r = (p - center).norm();
    if (r < 0.2) return p0 + 12.5 * r * r;
    if (r < 0.4) return p0 + 4.0 * std::log(5.0 * r) + 12.5 * r * r - 20.0 * r + 4.0;
    return p0 + 4.0 * std::log(2.0) - 2.0;
  };
  return def;
}

CaseDefinition double_shear_layer() {
  CaseDefinition def;
  def.name = "double_shear_layer";
  def.domain = Rect{0, 1, 0, 1};
  def.periodic_x = def.periodic_y = true;
  def.nu = 0.0;
  def.t_end = 2.0;
  def.dt = 1e-3;
  const double xi = 1.0 / 30.0, delta = 1.0 / 20.0;
  def.initial_u = [=](Vec2 p) {
    const double u = p.y() <= 0.5 ? std::tanh((p.y() - 0.25) / xi) : std::tanh((0.75 - p.y()) / xi);
    return Vec2(u, delta * std::sin(2.0 * M_PI * p.x()));
  };
  def.initial_p = [](Vec2) { return 0.0; };
  def.hdiv_rejection =
      "double_shear_layer is inviscid (nu = 0): the hdiv scheme is not stable in this limit and "
      "the run blows up; use the hll scheme";
  return def;
}

CaseDefinition lid_driven_cavity(double re) {
  if (re <= 0.0) throw std::invalid_argument("lid_driven_cavity: Re must be positive");
  CaseDefinition def;
  def.name = "lid_driven_cavity";
  def.domain = Rect{0, 1, 0, 1};
  def.nu = 1.0 / re;
  def.classifier = all_dirichlet();
  def.g_D = [](Vec2 x) { return x.y() > 1.0 - 1e-12 ? Vec2(1.0, 0.0) : Vec2(0.0, 0.0); };
  def.initial_u = [](Vec2) { return Vec2(0, 0); };  // fluid at rest
  def.initial_p = [](Vec2) { return 0.0; };
  def.steady_continuation = true;
  return def;
}

double max_grad_mismatch(const CaseDefinition& def, int n, uint64_t seed) {
  if (!def.has_exact) throw std::invalid_argument("max_grad_mismatch: no exact solution");
  std::mt19937_64 rng(seed);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec2 p(def.domain.xmin + def.domain.width() * uniform01(rng()),
           def.domain.ymin + def.domain.height() * uniform01(rng()));
    const Mat2 g = def.exact_grad_u(p);
    for (int d = 0; d < 2; ++d) {
      Vec2 dp = Vec2::Zero();
      dp(d) = h;
      const Vec2 fd = (def.exact_u(p + dp) - def.exact_u(p - dp)) / (2.0 * h);
      worst = std::max(worst, std::abs(fd.x() - g(d, 0)));
      worst = std::max(worst, std::abs(fd.y() - g(d, 1)));
    }
  }
  return worst;
}

double max_ns_residual(const CaseDefinition& def, int n, uint64_t seed) {
  if (!def.has_exact) throw std::invalid_argument("max_ns_residual: no exact solution");
  std::mt19937_64 rng(seed);
  const double h = 1e-6;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec2 p(def.domain.xmin + def.domain.width() * uniform01(rng()),
           def.domain.ymin + def.domain.height() * uniform01(rng()));
    const Vec2 u = def.exact_u(p);
    const Mat2 g = def.exact_grad_u(p);
    // Laplacian from differences of the hand-coded first derivatives
    Vec2 lap = Vec2::Zero();
    for (int d = 0; d < 2; ++d) {
      Vec2 dp = Vec2::Zero();
      dp(d) = h;
      const Mat2 gp = def.exact_grad_u(p + dp), gm = def.exact_grad_u(p - dp);
      lap.x() += (gp(d, 0) - gm(d, 0)) / (2.0 * h);
      lap.y() += (gp(d, 1) - gm(d, 1)) / (2.0 * h);
    }
    const Vec2 gradp((def.exact_p(p + Vec2(h, 0)) - def.exact_p(p - Vec2(h, 0))) / (2.0 * h),
                     (def.exact_p(p + Vec2(0, h)) - def.exact_p(p - Vec2(0, h))) / (2.0 * h));
    const Vec2 conv(u.x() * g(0, 0) + u.y() * g(1, 0), u.x() * g(0, 1) + u.y() * g(1, 1));
    const Vec2 f = def.forcing ? def.forcing(p, 0.0) : Vec2(0, 0);
    const Vec2 mom = conv + gradp - def.nu * lap - f;
    worst = std::max(worst, mom.norm());
    worst = std::max(worst, std::abs(g(0, 0) + g(1, 1)));  // div u
  }
  return worst;
}

const CavityReference& cavity_reference_re1000() {
  // Ghia, Ghia & Shin (1982), Re = 1000: u along x = 0.5 (Table I) and
  // v along y = 0.5 (Table II).
  static const CavityReference ref = {
      {0.0000, 0.0547, 0.0625, 0.0703, 0.1016, 0.1719, 0.2813, 0.4531, 0.5000, 0.6172, 0.7344,
       0.8516, 0.9531, 0.9609, 0.9688, 0.9766, 1.0000},
      {0.00000, -0.18109, -0.20196, -0.22220, -0.29730, -0.38289, -0.27805, -0.10648, -0.06080,
       0.05702, 0.18719, 0.33304, 0.46604, 0.51117, 0.57492, 0.65928, 1.00000},
      {0.0000, 0.0625, 0.0703, 0.0781, 0.0938, 0.1563, 0.2266, 0.2344, 0.5000, 0.8047, 0.8594,
       0.9063, 0.9453, 0.9531, 0.9609, 0.9688, 1.0000},
      {0.00000, 0.27485, 0.29012, 0.30353, 0.32627, 0.37095, 0.33075, 0.32235, 0.02526, -0.31966,
       -0.42665, -0.51550, -0.39188, -0.33714, -0.27669, -0.21388, 0.00000}};
  return ref;
}

}  // namespace hhoflow
