#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kforge/bergman.hpp"
#include "kforge/toric.hpp"

namespace kforge {

/// Uniform square grid over [-R, R]^2 with n x n nodes, row-major in x1.
struct GridSpec {
  double radius = 14.0;
  double spacing = 0.05;

  [[nodiscard]] int nodes_per_side() const;
  [[nodiscard]] std::size_t node_count() const;
  [[nodiscard]] Vec2 node(int i, int j) const { return {-radius + i * spacing, -radius + j * spacing}; }
  [[nodiscard]] std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(nodes_per_side()) + static_cast<std::size_t>(j);
  }
  /// Trapezoid weight of node (i, j).
  [[nodiscard]] double weight(int i, int j) const;
  void validate() const;
};

/// Near the divisor of a ray v the Hessian of w degenerates along v, so the
/// stencil should contain v as a neighbor offset. Returns s = +1 or -1 when
/// every ray is one of +-e1, +-e2, +-(1, s), else 0 (9-point stencil).
[[nodiscard]] int stencil_diagonal(const FanoPolygon& polygon);

enum class BoundaryMode {
  dirichlet,  ///< phi = w - w_ref vanishes on the boundary ring
  neumann,    ///< phi is reflected evenly across the boundary (zero normal derivative)
};

[[nodiscard]] std::string to_string(BoundaryMode m);
[[nodiscard]] BoundaryMode parse_boundary(const std::string& name);

/// Potential w = w_ref + phi on a grid; w_ref carries analytic derivatives.
struct GridPotential {
  GridSpec grid;
  BoundaryMode boundary = BoundaryMode::neumann;
  /// Hessian stencil: +1 or -1 uses second differences along e1, e2 and
  /// (1, diagonal); 0 uses the symmetric 9-point stencil. See stencil_diagonal().
  int diagonal = 0;
  std::vector<double> ref_value;
  std::vector<Vec2> ref_grad;
  std::vector<Mat2> ref_hess;
  std::vector<double> phi;

  /// Reference log sum_m e^{<m,x>} over the boundary lattice points of Delta
  /// (the vertices when every edge has lattice length one) and phi = 0.
  static GridPotential reference(const FanoPolygon& polygon, const GridSpec& grid, BoundaryMode boundary);

  [[nodiscard]] double value(std::size_t k) const { return ref_value[k] + phi[k]; }
  [[nodiscard]] std::vector<double> values() const;
  /// Discrete Hessian: analytic reference part plus the 9-point stencil of phi.
  [[nodiscard]] Mat2 hessian(int i, int j) const;
  [[nodiscard]] Vec2 gradient(int i, int j) const;
};

/// Lattice points on the boundary of Delta, in enumeration order.
[[nodiscard]] std::vector<LatticePoint> boundary_lattice_points(const FanoPolygon& polygon);
/// log sum_m e^{<m,x>} over `points` with its gradient and Hessian.
[[nodiscard]] PotentialJet smooth_reference_potential(const std::vector<LatticePoint>& points, const Vec2& x);

/// Soliton vector field coefficients: int_Delta y e^{<c,y>} dy = 0.
struct SolitonData {
  Vec2 c = Vec2::Zero();
  /// int_Delta e^{<c,y>} dy.
  double c_x = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Integrals of (1, y, y y^T) e^{<c,y>} over Delta by triangulation from the
/// barycenter with a degree-8 product Gauss rule on each triangle.
struct PolygonMoments {
  double mass = 0.0;
  Vec2 first = Vec2::Zero();
  Mat2 second = Mat2::Zero();
};
[[nodiscard]] PolygonMoments exponential_moments(const FanoPolygon& polygon, const Vec2& c);

[[nodiscard]] SolitonData soliton_coefficients(const FanoPolygon& polygon, double tolerance = 1e-10);

/**
 * Discrete equation solved by ma_newton_solve at every active node:
 *     log det D^2 w + eps w + <c, grad w> + cst = log_rhs.
 * When `normalization` is set, cst is an extra unknown fixed by
 *     sum_k weight_k e^{-w_k} = normalization.
 */
struct MAProblem {
  std::vector<double> log_rhs;
  double eps = 0.0;
  Vec2 c = Vec2::Zero();
  double cst = 0.0;
  std::optional<double> normalization;
};

struct NewtonOptions {
  /// Sup-norm tolerance on the residual, applied on top of the per-node
  /// rounding bound of the finite-difference evaluation.
  double tolerance = 1e-8;
  int max_iterations = 60;
  /// Step halvings allowed per Newton iteration.
  int max_rejections = 40;
  /// A factorization from an earlier Jacobian is kept while each step cuts
  /// the residual norm by at least this factor.
  double chord_ratio = 0.25;
  bool reuse_factorization = true;
};

struct NewtonReport {
  int iterations = 0;
  int rejections = 0;
  int factorizations = 0;
  double residual = 0.0;
  /// Largest per-node rounding bound of the residual evaluation.
  double roundoff_floor = 0.0;
  double cst = 0.0;
  std::vector<double> history;
  /// False when the last three residuals fail the superlinear ratio test.
  bool quadratic_tail = true;
};

class MASolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sparse LU of the last Newton Jacobian, reusable across solves on one grid.
class NewtonWorkspace {
 public:
  NewtonWorkspace();
  ~NewtonWorkspace();
  NewtonWorkspace(NewtonWorkspace&&) noexcept;
  NewtonWorkspace& operator=(NewtonWorkspace&&) noexcept;
  void reset();

  struct Impl;
  [[nodiscard]] Impl& impl() { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

/// Builds the problem for a positive right-hand side det D^2 w = rhs.
[[nodiscard]] MAProblem problem_from_rhs(const std::vector<double>& rhs);

/// Damped Newton with residual line search. `start` supplies the reference
/// potential and the initial phi; returns the converged potential.
[[nodiscard]] GridPotential ma_newton_solve(const MAProblem& problem, const GridPotential& start,
                                            const NewtonOptions& options = {}, NewtonReport* report = nullptr,
                                            NewtonWorkspace* workspace = nullptr);

/// Pointwise residual of the discrete equation (NaN at non-convex nodes).
[[nodiscard]] std::vector<double> ma_residual(const MAProblem& problem, const GridPotential& w);

struct GridSigmaStats {
  double avg = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

/// sigma = -(1/2) tr(H^{-1} D^2 log det H) from discrete Hessians; NaN on the
/// outer two rings.
[[nodiscard]] std::vector<double> grid_sigma(const GridPotential& w);
/// Statistics over nodes with |x|_inf <= fraction * R.
[[nodiscard]] GridSigmaStats grid_sigma_stats(const GridPotential& w, double fraction);

struct RealStep {
  int step = 0;
  double increment = 0.0;  ///< sup |w_j - w_{j-1}|
  double cst = 0.0;
  double normalization = 0.0;  ///< sum weight e^{-w_j}
  GridSigmaStats sigma;
  NewtonReport newton;
};

struct RealIterationConfig {
  double eps = 0.0;
  int steps = 30;
  GridSpec grid;
  BoundaryMode boundary = BoundaryMode::neumann;
  /// Soliton coefficients; computed from the polygon when empty.
  std::optional<Vec2> soliton;
  double interior_fraction = 0.6;
  NewtonOptions newton;
};

struct RealIterationResult {
  std::vector<RealStep> steps;
  GridPotential final_potential;
  double c0 = 0.0;
  Vec2 soliton = Vec2::Zero();
};

/**
 * Aubin-type iteration
 *     det D^2 w_j = exp(-cst - (1 - eps) w_{j-1} - eps w_j - <c, grad w_j>),
 * with cst fixed every step by sum weight e^{-w_j} = C0 = int_Delta e^{<c,y>} dy.
 * eps = 0 realizes the inverse Ricci iteration.
 */
using RealStepCallback = std::function<void(const RealStep&)>;

[[nodiscard]] RealIterationResult ricci_iteration_real(const FanoPolygon& polygon, const RealIterationConfig& config,
                                                       const GridPotential* start = nullptr,
                                                       const RealStepCallback& on_step = {});

/// One outer step from w_prev (exposed for stationarity checks).
[[nodiscard]] GridPotential ricci_real_step(const GridPotential& w_prev, double eps, const Vec2& c, double c0,
                                            const std::vector<double>& extra_log_density, const NewtonOptions& options,
                                            NewtonReport* report = nullptr, NewtonWorkspace* workspace = nullptr);

struct CrossValidation {
  double sup = 0.0;
  double l2 = 0.0;
  double shift = 0.0;
  std::size_t count = 0;
  bool within = false;
  double threshold = 2e-2;
};

/// Compares w_grid with the Kahler potential of `weights` on |x|_inf <= fraction * R
/// after removing the best constant (midrange for sup, mean for L2).
[[nodiscard]] CrossValidation cross_validate(const GridPotential& grid_limit, const MetricWeights& weights,
                                             double fraction = 0.6, double threshold = 2e-2);
[[nodiscard]] CrossValidation cross_validate(const GridPotential& a, const GridPotential& b, double fraction = 0.6,
                                             double threshold = 2e-2);

/// CSV dumps with header x1,x2,<name>.
void write_grid_csv(std::ostream& out, const GridSpec& grid, const std::vector<double>& values,
                    const std::string& name, int stride = 1);

}  // namespace kforge
