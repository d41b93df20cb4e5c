#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "kforge/toric.hpp"

namespace kforge {

/**
 * Diagonal torus-invariant Hermitian metric on the sections of -K^r,
 * constant on symmetry orbits. b[o] is the squared norm of every section
 * in orbit o, so section m contributes exp(<m,x>) / b_m to the density.
 */
struct MetricWeights {
  std::shared_ptr<const SectionBasis> basis;
  std::vector<double> b;

  static MetricWeights uniform(std::shared_ptr<const SectionBasis> basis);

  [[nodiscard]] int rank() const { return basis->rank; }
  /// Per lattice point weights (orbit values broadcast).
  [[nodiscard]] std::vector<double> expanded() const;
  /// Throws std::invalid_argument when a weight is not positive and finite.
  void validate() const;
};

/// Central moments of the lattice-point distribution pi_m ~ exp(<m,x>)/b_m.
/// `mean` is in standard coordinates; cov, k3 and k4 are expressed in the
/// orthonormal frame whose columns are `frame` (identity unless rotated).
struct LogMoments {
  double log_rho = 0.0;
  Vec2 mean = Vec2::Zero();
  Mat2 frame = Mat2::Identity();
  Mat2 cov = Mat2::Zero();
  /// k3[i][j][k]: third central moment (equal to the third cumulant).
  std::array<std::array<std::array<double, 2>, 2>, 2> k3{};
  /// k4[i][j][k][l]: fourth cumulant.
  std::array<std::array<std::array<std::array<double, 2>, 2>, 2>, 2> k4{};

  /// Same moments with the tensors rotated back to standard coordinates.
  [[nodiscard]] LogMoments standard_frame() const;
  /// Covariance in standard coordinates.
  [[nodiscard]] Mat2 standard_cov() const { return frame * cov * frame.transpose(); }
};

/// Moments up to order 4 at x in standard coordinates, evaluated with a max shift.
[[nodiscard]] LogMoments bergman_density(const MetricWeights& weights, const Vec2& x);

/// u = log(rho)/r with its gradient (a point of Delta) and Hessian.
[[nodiscard]] PotentialJet kaehler_data(const MetricWeights& weights, const Vec2& x);

/// log det H with analytic first and second derivatives.
struct LogDetJet {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();
  Mat2 hessian = Mat2::Zero();
};

[[nodiscard]] LogDetJet log_det_hessian(const MetricWeights& weights, const Vec2& x);

/// Pointwise curvature data. `ill_conditioned` is set when cond(H) exceeds
/// the bound; such points are excluded from curvature statistics.
struct CurvaturePoint {
  PotentialJet potential;
  double det_h = 0.0;
  double sigma = 1.0;
  double condition = 1.0;
  bool ill_conditioned = false;
};

inline constexpr double kDefaultConditionBound = 1e10;

/// sigma = -(1/2) tr(H^{-1} D^2 log det H), equal to 1 at a Kahler-Einstein metric.
[[nodiscard]] double normalized_scalar_curvature(const MetricWeights& weights, const Vec2& x);
[[nodiscard]] CurvaturePoint curvature_point(const MetricWeights& weights, const Vec2& x,
                                             double condition_bound = kDefaultConditionBound);

/// sigma from a moment record (shared by the cloud evaluators).
[[nodiscard]] CurvaturePoint curvature_from_moments(const LogMoments& mom, int r,
                                                    double condition_bound = kDefaultConditionBound);

/// Weights file: one line per orbit, "mx my weight", weights at full precision.
void write_weights(std::ostream& out, const MetricWeights& weights);
void write_weights_file(const std::string& path, const MetricWeights& weights);
/// Reads weights for an existing basis; every orbit must appear exactly once.
[[nodiscard]] MetricWeights read_weights(std::istream& in, std::shared_ptr<const SectionBasis> basis);
[[nodiscard]] MetricWeights read_weights_file(const std::string& path, std::shared_ptr<const SectionBasis> basis);

}  // namespace kforge
