#include "kforge/real_ma.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "kforge/parallel.hpp"
#include "section_table.hpp"

namespace kforge {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Gauss-Legendre nodes and weights on [0, 1].
struct GaussRule {
  std::vector<double> x, w;
};

GaussRule gauss_legendre(int n) {
  GaussRule g;
  g.x.resize(n);
  g.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    g.x[i] = 0.5 * (1.0 - z);
    g.w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
  return g;
}

int reflect(int i, int n) {
  if (i < 0) return -i;
  if (i > n - 1) return 2 * (n - 1) - i;
  return i;
}

bool active(const GridPotential& w, int i, int j) {
  if (w.boundary == BoundaryMode::neumann) return true;
  const int n = w.grid.nodes_per_side();
  return i > 0 && j > 0 && i < n - 1 && j < n - 1;
}

double phi_at(const GridPotential& w, int i, int j) {
  const int n = w.grid.nodes_per_side();
  return w.phi[w.grid.index(reflect(i, n), reflect(j, n))];
}

// Second-difference Hessian of f at (i, j). diagonal = +1 or -1 gives the
// 7-point stencil whose mixed term comes from the second difference along
// (1, diagonal); 0 gives the symmetric 9-point stencil.
template <class F>
Mat2 stencil_hessian(const F& f, int i, int j, double h2, int diagonal) {
  const double c = f(i, j);
  const double d11 = (f(i + 1, j) - 2.0 * c + f(i - 1, j)) / h2;
  const double d22 = (f(i, j + 1) - 2.0 * c + f(i, j - 1)) / h2;
  double d12 = 0.0;
  if (diagonal == 0) {
    d12 = (f(i + 1, j + 1) - f(i + 1, j - 1) - f(i - 1, j + 1) + f(i - 1, j - 1)) / (4.0 * h2);
  } else {
    const double dd = (f(i + 1, j + diagonal) - 2.0 * c + f(i - 1, j - diagonal)) / h2;
    d12 = diagonal * 0.5 * (dd - d11 - d22);
  }
  Mat2 d;
  d << d11, d12, d12, d22;
  return d;
}

struct Tap {
  int di, dj;
  double coef;
};

// Coefficients of phi -> tr(A D^2 phi) for the stencil above.
int hessian_taps(const Mat2& a, int diagonal, double h2, Tap* out) {
  int n = 0;
  auto second = [&](int di, int dj, double c) {
    out[n++] = {di, dj, c / h2};
    out[n++] = {-di, -dj, c / h2};
    out[n++] = {0, 0, -2.0 * c / h2};
  };
  if (diagonal == 0) {
    second(1, 0, a(0, 0));
    second(0, 1, a(1, 1));
    const double x = a(0, 1) / (2.0 * h2);
    out[n++] = {1, 1, x};
    out[n++] = {-1, -1, x};
    out[n++] = {1, -1, -x};
    out[n++] = {-1, 1, -x};
  } else {
    const double s = diagonal;
    second(1, 0, a(0, 0) - s * a(0, 1));
    second(0, 1, a(1, 1) - s * a(0, 1));
    second(1, diagonal, s * a(0, 1));
  }
  return n;
}

bool convex(const Mat2& h) { return h(0, 0) > 0.0 && h(1, 1) > 0.0 && h.determinant() > 0.0; }

struct Evaluation {
  std::vector<double> f;
  double sup = 0.0;
  double merit = 0.0;
  double norm_defect = 0.0;
  // max_k (|f_k| - floor_k), and the largest floor.
  double excess = 0.0;
  double floor = 0.0;
  bool feasible = true;
};

double normalization_sum(const GridPotential& w) {
  const int n = w.grid.nodes_per_side();
  std::vector<double> terms(w.grid.node_count());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) terms[w.grid.index(i, j)] = w.grid.weight(i, j) * std::exp(-w.value(w.grid.index(i, j)));
  return pairwise_sum(terms);
}

// Residual at one node; `floor` receives a bound on its rounding error. The
// stencil differences of phi carry absolute error ~ ulp(phi) / h^2, which the
// log det amplifies by tr(H^{-1}); near the divisors one eigenvalue of H is
// of order e^{-R}.
double node_residual(const MAProblem& p, const GridPotential& w, int i, int j, double cst, double* floor = nullptr) {
  const Mat2 h = w.hessian(i, j);
  if (!convex(h)) return kNaN;
  const std::size_t k = w.grid.index(i, j);
  const double logdet = std::log(h.determinant());
  double f = logdet + p.eps * w.value(k) + cst - p.log_rhs[k];
  if (p.c.x() != 0.0 || p.c.y() != 0.0) f += p.c.dot(w.gradient(i, j));
  if (floor) {
    double pmax = 0.0;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) pmax = std::max(pmax, std::abs(phi_at(w, i + di, j + dj)));
    const double u = std::numeric_limits<double>::epsilon();
    const double h2 = w.grid.spacing * w.grid.spacing;
    const double tr_inv = (h(0, 0) + h(1, 1)) / h.determinant();
    *floor = 8.0 * u * pmax / h2 * tr_inv +
             16.0 * u * (std::abs(logdet) + std::abs(p.eps * w.value(k)) + std::abs(cst) + std::abs(p.log_rhs[k]));
  }
  return f;
}

Evaluation evaluate(const MAProblem& p, const GridPotential& w, double cst) {
  Evaluation e;
  const int n = w.grid.nodes_per_side();
  e.f.assign(w.grid.node_count(), 0.0);
  std::vector<double> sq;
  sq.reserve(w.grid.node_count());
  e.excess = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (!active(w, i, j)) continue;
      double floor = 0.0;
      const double f = node_residual(p, w, i, j, cst, &floor);
      if (!std::isfinite(f)) {
        e.feasible = false;
        return e;
      }
      e.f[w.grid.index(i, j)] = f;
      e.sup = std::max(e.sup, std::abs(f));
      e.excess = std::max(e.excess, std::abs(f) - floor);
      e.floor = std::max(e.floor, floor);
      sq.push_back(f * f);
    }
  double ms = pairwise_sum(sq) / static_cast<double>(sq.size());
  if (p.normalization) {
    e.norm_defect = normalization_sum(w) / *p.normalization - 1.0;
    e.sup = std::max(e.sup, std::abs(e.norm_defect));
    e.excess = std::max(e.excess, std::abs(e.norm_defect));
    ms += e.norm_defect * e.norm_defect;
  }
  e.merit = std::sqrt(ms);
  return e;
}

}  // namespace

int GridSpec::nodes_per_side() const { return static_cast<int>(std::lround(2.0 * radius / spacing)) + 1; }

std::size_t GridSpec::node_count() const {
  const auto n = static_cast<std::size_t>(nodes_per_side());
  return n * n;
}

double GridSpec::weight(int i, int j) const {
  const int n = nodes_per_side();
  double w = spacing * spacing;
  if (i == 0 || i == n - 1) w *= 0.5;
  if (j == 0 || j == n - 1) w *= 0.5;
  return w;
}

void GridSpec::validate() const {
  if (!(radius > 0.0) || !(spacing > 0.0)) throw std::invalid_argument("grid radius and spacing must be positive");
  const double cells = 2.0 * radius / spacing;
  if (std::abs(cells - std::round(cells)) > 1e-9 * cells)
    throw std::invalid_argument("grid spacing must divide the diameter 2R");
  if (nodes_per_side() < 7) throw std::invalid_argument("grid needs at least 7 nodes per side");
}

std::string to_string(BoundaryMode m) { return m == BoundaryMode::dirichlet ? "dirichlet" : "neumann"; }

BoundaryMode parse_boundary(const std::string& name) {
  if (name == "dirichlet") return BoundaryMode::dirichlet;
  if (name == "neumann") return BoundaryMode::neumann;
  throw std::invalid_argument("unknown boundary mode '" + name + "'");
}

std::vector<LatticePoint> boundary_lattice_points(const FanoPolygon& polygon) {
  std::vector<LatticePoint> out;
  for (const auto& m : enumerate_sections(polygon, 1).points)
    if (polygon.facet_gap(m.to_real()) < 0.5) out.push_back(m);
  return out;
}

PotentialJet smooth_reference_potential(const std::vector<LatticePoint>& points, const Vec2& x) {
  std::vector<double> e(points.size());
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    e[i] = points[i].to_real().dot(x);
    shift = std::max(shift, e[i]);
  }
  double total = 0.0;
  for (double& v : e) {
    v = std::exp(v - shift);
    total += v;
  }
  PotentialJet jet;
  jet.value = shift + std::log(total);
  for (std::size_t i = 0; i < points.size(); ++i) jet.gradient += (e[i] / total) * points[i].to_real();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec2 d = points[i].to_real() - jet.gradient;
    jet.hessian += (e[i] / total) * d * d.transpose();
  }
  return jet;
}

GridPotential GridPotential::reference(const FanoPolygon& polygon, const GridSpec& grid, BoundaryMode boundary) {
  grid.validate();
  const auto points = boundary_lattice_points(polygon);
  GridPotential w;
  w.grid = grid;
  w.boundary = boundary;
  w.diagonal = stencil_diagonal(polygon);
  const std::size_t count = grid.node_count();
  w.ref_value.resize(count);
  w.ref_grad.resize(count);
  w.ref_hess.resize(count);
  w.phi.assign(count, 0.0);
  const int n = grid.nodes_per_side();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto jet = smooth_reference_potential(points, grid.node(i, j));
      const std::size_t k = grid.index(i, j);
      w.ref_value[k] = jet.value;
      w.ref_grad[k] = jet.gradient;
      w.ref_hess[k] = jet.hessian;
    }
  return w;
}

int stencil_diagonal(const FanoPolygon& polygon) {
  for (int s : {1, -1}) {
    bool fits = true;
    for (const auto& v : polygon.rays()) {
      const bool axis = (std::abs(v.x) + std::abs(v.y) == 1);
      const bool diag = (v.x == v.y * s) && std::abs(v.x) == 1;
      fits = fits && (axis || diag);
    }
    if (fits) return s;
  }
  return 0;
}

std::vector<double> GridPotential::values() const {
  std::vector<double> v(phi.size());
  for (std::size_t k = 0; k < phi.size(); ++k) v[k] = value(k);
  return v;
}

Mat2 GridPotential::hessian(int i, int j) const {
  const auto f = [this](int a, int b) { return phi_at(*this, a, b); };
  return ref_hess[grid.index(i, j)] + stencil_hessian(f, i, j, grid.spacing * grid.spacing, diagonal);
}

Vec2 GridPotential::gradient(int i, int j) const {
  const double h = grid.spacing;
  const Vec2 d{(phi_at(*this, i + 1, j) - phi_at(*this, i - 1, j)) / (2.0 * h),
               (phi_at(*this, i, j + 1) - phi_at(*this, i, j - 1)) / (2.0 * h)};
  return ref_grad[grid.index(i, j)] + d;
}

// ---------------------------------------------------------------------------
// Soliton coefficients

PolygonMoments exponential_moments(const FanoPolygon& polygon, const Vec2& c) {
  static const GaussRule g = gauss_legendre(24);
  const auto& verts = polygon.dual_vertices();
  const Vec2 b = polygon.barycenter();
  PolygonMoments m;
  for (std::size_t t = 0; t < verts.size(); ++t) {
    const Vec2 p = verts[t].to_real() - b;
    const Vec2 q = verts[(t + 1) % verts.size()].to_real() - verts[t].to_real();
    const double jac = std::abs(p.x() * q.y() - p.y() * q.x());
    for (std::size_t a = 0; a < g.x.size(); ++a)
      for (std::size_t k = 0; k < g.x.size(); ++k) {
        const double s = g.x[a], u = g.x[k];
        const Vec2 y = b + s * (p + u * q);
        const double w = g.w[a] * g.w[k] * s * jac * std::exp(c.dot(y));
        m.mass += w;
        m.first += w * y;
        m.second += w * y * y.transpose();
      }
  }
  return m;
}

SolitonData soliton_coefficients(const FanoPolygon& polygon, double tolerance) {
  // Newton on the strictly convex function log int_Delta e^{<c,y>} dy, whose
  // gradient is the e^{<c,y>}-weighted barycenter.
  SolitonData out;
  Vec2 c = Vec2::Zero();
  for (int it = 0; it < 100; ++it) {
    const auto m = exponential_moments(polygon, c);
    const Vec2 mean = m.first / m.mass;
    out.residual = mean.norm();
    out.iterations = it;
    if (out.residual <= tolerance) {
      out.converged = true;
      break;
    }
    const Mat2 cov = m.second / m.mass - mean * mean.transpose();
    Vec2 step = -cov.ldlt().solve(mean);
    // Backtrack on the gradient norm.
    for (int k = 0; k < 60; ++k) {
      const auto trial = exponential_moments(polygon, c + step);
      if ((trial.first / trial.mass).norm() < out.residual) break;
      step *= 0.5;
    }
    c += step;
  }
  out.c = c;
  out.c_x = exponential_moments(polygon, c).mass;
  if (!out.converged) {
    const auto m = exponential_moments(polygon, c);
    out.residual = (m.first / m.mass).norm();
    out.converged = out.residual <= tolerance;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Newton solver

MAProblem problem_from_rhs(const std::vector<double>& rhs) {
  MAProblem p;
  p.log_rhs.resize(rhs.size());
  for (std::size_t k = 0; k < rhs.size(); ++k) {
    if (!(rhs[k] > 0.0) || !std::isfinite(rhs[k]))
      throw std::invalid_argument("Monge-Ampere right-hand side must be positive at every node (node " +
                                  std::to_string(k) + ")");
    p.log_rhs[k] = std::log(rhs[k]);
  }
  return p;
}

std::vector<double> ma_residual(const MAProblem& problem, const GridPotential& w) {
  const int n = w.grid.nodes_per_side();
  std::vector<double> f(w.grid.node_count(), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (active(w, i, j)) f[w.grid.index(i, j)] = node_residual(problem, w, i, j, problem.cst);
  return f;
}

struct NewtonWorkspace::Impl {
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  Eigen::Index size = -1;
  bool factored = false;
};

NewtonWorkspace::NewtonWorkspace() : impl_(std::make_unique<Impl>()) {}
NewtonWorkspace::~NewtonWorkspace() = default;
NewtonWorkspace::NewtonWorkspace(NewtonWorkspace&&) noexcept = default;
NewtonWorkspace& NewtonWorkspace::operator=(NewtonWorkspace&&) noexcept = default;
void NewtonWorkspace::reset() { impl_->factored = false; }

GridPotential ma_newton_solve(const MAProblem& problem, const GridPotential& start, const NewtonOptions& options,
                              NewtonReport* report, NewtonWorkspace* workspace) {
  start.grid.validate();
  const std::size_t count = start.grid.node_count();
  if (problem.log_rhs.size() != count || start.phi.size() != count || start.ref_hess.size() != count)
    throw std::invalid_argument("grid size mismatch in Monge-Ampere problem");
  for (double v : problem.log_rhs)
    if (!std::isfinite(v)) throw std::invalid_argument("Monge-Ampere right-hand side must be positive and finite");
  if (problem.normalization && !(*problem.normalization > 0.0))
    throw std::invalid_argument("normalization target must be positive");

  const int n = start.grid.nodes_per_side();
  const double h = start.grid.spacing;
  const double h2 = h * h;
  GridPotential w = start;
  if (w.boundary == BoundaryMode::dirichlet) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (!active(w, i, j)) w.phi[w.grid.index(i, j)] = 0.0;
  }

  // Unknown numbering: active nodes, then cst when it is solved for.
  std::vector<int> unknown(count, -1);
  int n_active = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (active(w, i, j)) unknown[w.grid.index(i, j)] = n_active++;
  const bool bordered = problem.normalization.has_value();
  const int n_unknowns = n_active + (bordered ? 1 : 0);

  NewtonWorkspace local;
  NewtonWorkspace::Impl& ws = (workspace && options.reuse_factorization ? *workspace : local).impl();
  if (ws.size != n_unknowns) ws.factored = false;

  double cst = problem.cst;
  NewtonReport rep;
  auto fail = [&](const std::string& msg) {
    if (report) *report = rep;
    throw MASolverError(msg);
  };
  Evaluation ev = evaluate(problem, w, cst);
  if (!ev.feasible) fail("initial potential is not convex on the grid");
  rep.history.push_back(ev.sup);

  std::vector<Eigen::Triplet<double>> triplets;
  auto factor = [&] {
    triplets.clear();
    triplets.reserve(static_cast<std::size_t>(n_active) * 10 + (bordered ? 2 * static_cast<std::size_t>(n_active) : 0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const int row = unknown[w.grid.index(i, j)];
        if (row < 0) continue;
        auto add = [&](int di, int dj, double v) {
          const int col = unknown[w.grid.index(reflect(i + di, n), reflect(j + dj, n))];
          if (col >= 0) triplets.emplace_back(row, col, v);
        };
        Tap taps[12];
        const int nt = hessian_taps(w.hessian(i, j).inverse(), w.diagonal, h2, taps);
        for (int t = 0; t < nt; ++t) add(taps[t].di, taps[t].dj, taps[t].coef);
        const double cx = problem.c.x() / (2.0 * h), cy = problem.c.y() / (2.0 * h);
        add(0, 0, problem.eps);
        add(1, 0, cx);
        add(-1, 0, -cx);
        add(0, 1, cy);
        add(0, -1, -cy);
        if (bordered) triplets.emplace_back(row, n_active, 1.0);
      }
    if (bordered) {
      const double target = *problem.normalization;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const std::size_t k = w.grid.index(i, j);
          if (unknown[k] >= 0)
            triplets.emplace_back(n_active, unknown[k], -w.grid.weight(i, j) * std::exp(-w.value(k)) / target);
        }
    }
    Eigen::SparseMatrix<double> jac(n_unknowns, n_unknowns);
    jac.setFromTriplets(triplets.begin(), triplets.end());
    jac.makeCompressed();
    ws.lu.compute(jac);
    if (ws.lu.info() != Eigen::Success) fail("sparse factorization of the Newton system failed: " + ws.lu.lastErrorMessage());
    ws.size = n_unknowns;
    ws.factored = true;
    ++rep.factorizations;
  };

  Eigen::VectorXd rhs(n_unknowns);
  GridPotential trial = w;
  while (ev.excess > options.tolerance) {
    if (rep.iterations >= options.max_iterations)
      fail("Newton did not converge in " + std::to_string(options.max_iterations) + " iterations (residual " +
           std::to_string(ev.sup) + ")");
    bool fresh = false;
    if (!ws.factored) {
      factor();
      fresh = true;
    }
    double alpha = 1.0;
    int halvings = 0;
    for (;;) {
      for (std::size_t k = 0; k < count; ++k)
        if (unknown[k] >= 0) rhs[unknown[k]] = -ev.f[k];
      if (bordered) rhs[n_active] = -ev.norm_defect;
      const Eigen::VectorXd delta = ws.lu.solve(rhs);
      if (ws.lu.info() != Eigen::Success || !delta.allFinite()) fail("Newton linear solve failed");

      bool accepted = false;
      for (;;) {
        for (std::size_t k = 0; k < count; ++k)
          if (unknown[k] >= 0) trial.phi[k] = w.phi[k] + alpha * delta[unknown[k]];
        const double trial_cst = bordered ? cst + alpha * delta[n_active] : cst;
        Evaluation te = evaluate(problem, trial, trial_cst);
        const double target = fresh ? (1.0 - 1e-4 * alpha) * ev.merit : options.chord_ratio * ev.merit;
        if (te.feasible && (te.merit < target || te.excess <= options.tolerance)) {
          w.phi.swap(trial.phi);
          cst = trial_cst;
          ev = std::move(te);
          accepted = true;
          break;
        }
        // A stale factorization that stops contracting is replaced first.
        if (!fresh) break;
        ++rep.rejections;
        if (++halvings > options.max_rejections)
          fail("Newton line search failed (residual " + std::to_string(ev.sup) + ")");
        alpha *= 0.5;
      }
      if (accepted) break;
      factor();
      fresh = true;
    }
    ++rep.iterations;
    rep.history.push_back(ev.sup);
  }
  rep.residual = ev.sup;
  rep.roundoff_floor = ev.floor;
  rep.cst = cst;
  const auto& hs = rep.history;
  if (hs.size() >= 3) {
    const double q1 = hs[hs.size() - 2] / hs[hs.size() - 3];
    const double q2 = hs.back() / hs[hs.size() - 2];
    rep.quadratic_tail = q2 < q1 || hs.back() <= options.tolerance;
  }
  if (report) *report = std::move(rep);
  return w;
}

// ---------------------------------------------------------------------------
// Curvature on the grid

std::vector<double> grid_sigma(const GridPotential& w) {
  const int n = w.grid.nodes_per_side();
  const double h2 = w.grid.spacing * w.grid.spacing;
  std::vector<double> logdet(w.grid.node_count(), kNaN);
  std::vector<Mat2> hess(w.grid.node_count());
  for (int i = 1; i < n - 1; ++i)
    for (int j = 1; j < n - 1; ++j) {
      const std::size_t k = w.grid.index(i, j);
      hess[k] = w.hessian(i, j);
      if (convex(hess[k])) logdet[k] = std::log(hess[k].determinant());
    }
  std::vector<double> sigma(w.grid.node_count(), kNaN);
  auto l = [&](int i, int j) { return logdet[w.grid.index(i, j)]; };
  for (int i = 2; i < n - 2; ++i)
    for (int j = 2; j < n - 2; ++j) {
      const Mat2 d = stencil_hessian(l, i, j, h2, w.diagonal);
      const Mat2& hk = hess[w.grid.index(i, j)];
      if (!convex(hk)) continue;
      sigma[w.grid.index(i, j)] = -0.5 * (hk.inverse() * d).trace();
    }
  return sigma;
}

GridSigmaStats grid_sigma_stats(const GridPotential& w, double fraction) {
  const auto sigma = grid_sigma(w);
  const int n = w.grid.nodes_per_side();
  const double limit = fraction * w.grid.radius + 1e-12;
  GridSigmaStats s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  std::vector<double> vals;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 x = w.grid.node(i, j);
      if (std::max(std::abs(x.x()), std::abs(x.y())) > limit) continue;
      const double v = sigma[w.grid.index(i, j)];
      if (!std::isfinite(v)) continue;
      vals.push_back(v);
      s.min = std::min(s.min, v);
      s.max = std::max(s.max, v);
    }
  s.count = vals.size();
  if (s.count == 0) throw std::invalid_argument("no grid nodes in the curvature window");
  s.avg = pairwise_sum(vals) / static_cast<double>(s.count);
  return s;
}

// ---------------------------------------------------------------------------
// Outer iteration

GridPotential ricci_real_step(const GridPotential& w_prev, double eps, const Vec2& c, double c0,
                              const std::vector<double>& extra_log_density, const NewtonOptions& options,
                              NewtonReport* report, NewtonWorkspace* workspace) {
  if (!(eps >= 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in [0, 1)");
  const std::size_t count = w_prev.grid.node_count();
  if (!extra_log_density.empty() && extra_log_density.size() != count)
    throw std::invalid_argument("extra log density has the wrong size");
  MAProblem p;
  p.eps = eps;
  p.c = c;
  p.normalization = c0;
  p.log_rhs.resize(count);
  for (std::size_t k = 0; k < count; ++k)
    p.log_rhs[k] = -(1.0 - eps) * w_prev.value(k) + (extra_log_density.empty() ? 0.0 : extra_log_density[k]);

  // Start cst at the mean defect of the previous potential.
  const auto f = ma_residual(p, w_prev);
  std::vector<double> active_f;
  const int n = w_prev.grid.nodes_per_side();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (active(w_prev, i, j)) active_f.push_back(f[w_prev.grid.index(i, j)]);
  p.cst = -pairwise_sum(active_f) / static_cast<double>(active_f.size());
  if (!std::isfinite(p.cst)) throw MASolverError("previous potential is not convex on the grid");
  try {
    return ma_newton_solve(p, w_prev, options, report, workspace);
  } catch (const MASolverError&) {
    if (workspace) workspace->reset();
  }

  // Continuation: the target log_rhs + (1 - t) r0 is solved by w_prev at t = 0
  // (r0 is its residual), and t is advanced adaptively to 1.
  std::vector<double> r0(count, 0.0);
  for (std::size_t k = 0; k < count; ++k) r0[k] = f[k] + p.cst;
  NewtonReport total;
  GridPotential w = w_prev;
  double t = 0.0, dt = 0.25;
  MAProblem pt = p;
  while (t < 1.0) {
    const double next = std::min(1.0, t + dt);
    for (std::size_t k = 0; k < count; ++k) pt.log_rhs[k] = p.log_rhs[k] + (1.0 - next) * r0[k];
    NewtonReport rep;
    try {
      GridPotential solved = ma_newton_solve(pt, w, options, &rep, workspace);
      w = std::move(solved);
      pt.cst = rep.cst;
      t = next;
      dt = std::min(2.0 * dt, 1.0 - t);
      total.iterations += rep.iterations;
      total.rejections += rep.rejections;
      total.factorizations += rep.factorizations;
      total.history.insert(total.history.end(), rep.history.begin(), rep.history.end());
      total.residual = rep.residual;
      total.roundoff_floor = rep.roundoff_floor;
      total.cst = rep.cst;
      total.quadratic_tail = rep.quadratic_tail;
    } catch (const MASolverError& e) {
      if (workspace) workspace->reset();
      dt *= 0.5;
      if (dt < 1.0 / 64.0) throw MASolverError(std::string("continuation stalled at t = ") + std::to_string(t) + ": " + e.what());
    }
  }
  if (report) *report = std::move(total);
  return w;
}

RealIterationResult ricci_iteration_real(const FanoPolygon& polygon, const RealIterationConfig& config,
                                         const GridPotential* start, const RealStepCallback& on_step) {
  if (config.steps < 1) throw std::invalid_argument("steps must be positive");
  RealIterationResult out;
  if (config.soliton) {
    out.soliton = *config.soliton;
  } else {
    const auto sol = soliton_coefficients(polygon);
    if (!sol.converged) throw MASolverError("soliton coefficients did not converge");
    out.soliton = sol.c;
  }
  out.c0 = exponential_moments(polygon, out.soliton).mass;
  GridPotential w = start ? *start : GridPotential::reference(polygon, config.grid, config.boundary);
  NewtonWorkspace workspace;
  for (int step = 1; step <= config.steps; ++step) {
    RealStep rs;
    rs.step = step;
    GridPotential next;
    try {
      next = ricci_real_step(w, config.eps, out.soliton, out.c0, {}, config.newton, &rs.newton, &workspace);
    } catch (const MASolverError& e) {
      throw MASolverError("outer step " + std::to_string(step) + ": " + e.what());
    }
    rs.cst = rs.newton.cst;
    for (std::size_t k = 0; k < next.phi.size(); ++k)
      rs.increment = std::max(rs.increment, std::abs(next.phi[k] - w.phi[k]));
    rs.normalization = normalization_sum(next);
    rs.sigma = grid_sigma_stats(next, config.interior_fraction);
    out.steps.push_back(std::move(rs));
    if (on_step) on_step(out.steps.back());
    w = std::move(next);
  }
  out.final_potential = std::move(w);
  return out;
}

// ---------------------------------------------------------------------------
// Cross validation

namespace {

CrossValidation compare(const std::vector<double>& diff, double threshold) {
  CrossValidation cv;
  cv.threshold = threshold;
  cv.count = diff.size();
  if (diff.empty()) throw std::invalid_argument("no grid nodes in the comparison window");
  const auto [lo, hi] = std::minmax_element(diff.begin(), diff.end());
  cv.shift = 0.5 * (*lo + *hi);
  cv.sup = 0.5 * (*hi - *lo);
  const double mean = pairwise_sum(diff) / static_cast<double>(diff.size());
  std::vector<double> sq(diff.size());
  for (std::size_t k = 0; k < diff.size(); ++k) sq[k] = (diff[k] - mean) * (diff[k] - mean);
  cv.l2 = std::sqrt(pairwise_sum(sq) / static_cast<double>(sq.size()));
  cv.within = cv.sup <= threshold;
  return cv;
}

}  // namespace

CrossValidation cross_validate(const GridPotential& grid_limit, const MetricWeights& weights, double fraction,
                               double threshold) {
  const detail::SectionTable table(weights);
  const int n = grid_limit.grid.nodes_per_side();
  const double limit = fraction * grid_limit.grid.radius + 1e-12;
  std::vector<double> diff, p;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 x = grid_limit.grid.node(i, j);
      if (std::max(std::abs(x.x()), std::abs(x.y())) > limit) continue;
      const double u = table.probabilities(x, p) / table.rank;
      diff.push_back(grid_limit.value(grid_limit.grid.index(i, j)) - u);
    }
  return compare(diff, threshold);
}

CrossValidation cross_validate(const GridPotential& a, const GridPotential& b, double fraction, double threshold) {
  if (a.grid.nodes_per_side() != b.grid.nodes_per_side() || a.grid.radius != b.grid.radius)
    throw std::invalid_argument("cross validation needs identical grids");
  const int n = a.grid.nodes_per_side();
  const double limit = fraction * a.grid.radius + 1e-12;
  std::vector<double> diff;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const Vec2 x = a.grid.node(i, j);
      if (std::max(std::abs(x.x()), std::abs(x.y())) > limit) continue;
      const std::size_t k = a.grid.index(i, j);
      diff.push_back(a.value(k) - b.value(k));
    }
  return compare(diff, threshold);
}

void write_grid_csv(std::ostream& out, const GridSpec& grid, const std::vector<double>& values,
                    const std::string& name, int stride) {
  if (values.size() != grid.node_count()) throw std::invalid_argument("value count does not match the grid");
  if (stride < 1) throw std::invalid_argument("stride must be positive");
  const int n = grid.nodes_per_side();
  out << "x1,x2," << name << '\n';
  char buf[96];
  for (int i = 0; i < n; i += stride)
    for (int j = 0; j < n; j += stride) {
      const Vec2 x = grid.node(i, j);
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.12e\n", x.x(), x.y(), values[grid.index(i, j)]);
      out << buf;
    }
}

}  // namespace kforge
