#pragma once

#include <span>
#include <vector>

#include "kforge/bergman.hpp"
#include "kforge/quadrature.hpp"

namespace kforge {

/// Potential and curvature data of one metric sampled on a cloud.
struct MetricField {
  std::vector<double> u;
  std::vector<Vec2> grad;
  std::vector<Mat2> hess;
  std::vector<double> det_h;
  /// Empty unless curvature was requested.
  std::vector<double> sigma;
  std::vector<unsigned char> ill_conditioned;

  [[nodiscard]] std::size_t size() const { return u.size(); }
};

struct FieldOptions {
  bool curvature = true;
  double condition_bound = kDefaultConditionBound;
  int threads = 0;
};

[[nodiscard]] MetricField evaluate_metric_field(const MetricWeights& weights, const SampleCloud& cloud,
                                                const FieldOptions& options = {});

/// Rank-one metric whose sections are the vertices of Delta with unit
/// weights; its potential is exactly w0 and its curvature is analytic.
[[nodiscard]] MetricWeights reference_metric(const FanoPolygon& polygon);

/// For every section m (per lattice point, not per orbit):
///     sum_k w_k exp(<m,x_k>) nu_k / rho(x_k).
/// Evaluated as b_m * sum_k w_k pi_m(x_k) nu_k in fixed blocks.
[[nodiscard]] std::vector<double> section_integrals(const MetricWeights& weights, const SampleCloud& cloud,
                                                    std::span<const double> nu, int threads = 0);

/// Scalar-curvature statistics over the unflagged points of a window.
struct SigmaStats {
  double avg = 0.0;
  double min = 0.0;
  double max = 0.0;
  /// Volume-weighted mean sum w det H sigma / sum w det H over the whole cloud.
  double volume_avg = 0.0;
  std::size_t count = 0;
  std::size_t flagged = 0;
};

/// Points with level (support value) <= window enter avg/min/max.
[[nodiscard]] SigmaStats sigma_statistics(const MetricField& field, const SampleCloud& cloud, double window);

/// Moment-map volume sum_k w_k det H_k.
[[nodiscard]] double field_volume(const MetricField& field, const SampleCloud& cloud);

/**
 * Ricci deviation of the reference metric,
 *     h = -log det D^2 w0 - w0 + c,
 * with c fixed by (1/V) int e^h det D^2 w0 dx = 1, i.e. c = log(V / int e^{-w0} dx).
 */
class RicciDeviation {
 public:
  RicciDeviation(const FanoPolygon& polygon, const SampleCloud& cloud);

  [[nodiscard]] double constant() const { return constant_; }
  [[nodiscard]] double operator()(const Vec2& x) const;
  [[nodiscard]] std::vector<double> on_cloud(const SampleCloud& cloud) const;

 private:
  FanoPolygon polygon_;
  double constant_ = 0.0;
};

/// Ricci deviation of an arbitrary potential field: -log det H - u + c with
/// the same normalization as RicciDeviation.
[[nodiscard]] std::vector<double> ricci_deviation_of(const MetricField& field, const SampleCloud& cloud, double area);

}  // namespace kforge
