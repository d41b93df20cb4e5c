#include "kforge/field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "kforge/parallel.hpp"
#include "section_table.hpp"

namespace kforge {

namespace {

std::size_t block_count(std::size_t n) { return (n + kReductionBlock - 1) / kReductionBlock; }

}  // namespace

MetricField evaluate_metric_field(const MetricWeights& weights, const SampleCloud& cloud, const FieldOptions& options) {
  weights.validate();
  const detail::SectionTable table(weights);
  const std::size_t n = cloud.size();
  const int r = weights.rank();
  const double rr = r;

  MetricField field;
  field.u.resize(n);
  field.grad.resize(n);
  field.hess.resize(n);
  field.det_h.resize(n);
  if (options.curvature) {
    field.sigma.resize(n);
    field.ill_conditioned.resize(n);
  }

  parallel_for_blocks(block_count(n), options.threads, [&](std::size_t block) {
    std::vector<double> p;
    const std::size_t lo = block * kReductionBlock;
    const std::size_t hi = std::min(n, lo + kReductionBlock);
    for (std::size_t k = lo; k < hi; ++k) {
      if (options.curvature) {
        const LogMoments mom = table.moments(cloud.points[k], 4, p);
        const CurvaturePoint pt = curvature_from_moments(mom, r, options.condition_bound);
        field.u[k] = pt.potential.value;
        field.grad[k] = pt.potential.gradient;
        field.hess[k] = pt.potential.hessian;
        field.det_h[k] = pt.det_h;
        field.sigma[k] = pt.sigma;
        field.ill_conditioned[k] = pt.ill_conditioned ? 1 : 0;
      } else {
        const LogMoments mom = table.moments(cloud.points[k], 2, p);
        field.u[k] = mom.log_rho / rr;
        field.grad[k] = mom.mean / rr;
        field.hess[k] = mom.cov / rr;
        field.det_h[k] = field.hess[k].determinant();
      }
    }
  });
  return field;
}

MetricWeights reference_metric(const FanoPolygon& polygon) {
  auto basis = std::make_shared<SectionBasis>();
  basis->rank = 1;
  basis->points = polygon.dual_vertices();
  std::sort(basis->points.begin(), basis->points.end());
  for (std::size_t i = 0; i < basis->points.size(); ++i) {
    basis->orbits.push_back({i});
    basis->orbit_of.push_back(i);
  }
  return MetricWeights::uniform(std::move(basis));
}

std::vector<double> section_integrals(const MetricWeights& weights, const SampleCloud& cloud,
                                      std::span<const double> nu, int threads) {
  weights.validate();
  if (nu.size() != cloud.size()) throw std::invalid_argument("density does not match the cloud size");
  const detail::SectionTable table(weights);
  const std::size_t n = cloud.size();
  const std::size_t m = table.size();
  const std::size_t blocks = block_count(n);

  std::vector<std::vector<double>> partial(blocks);
  parallel_for_blocks(blocks, threads, [&](std::size_t block) {
    std::vector<double> p;
    std::vector<double> acc(m, 0.0);
    const std::size_t lo = block * kReductionBlock;
    const std::size_t hi = std::min(n, lo + kReductionBlock);
    for (std::size_t k = lo; k < hi; ++k) {
      const double scale = cloud.weights[k] * nu[k];
      if (!std::isfinite(scale)) throw std::domain_error("non-finite density at cloud point " + std::to_string(k));
      if (scale == 0.0) continue;
      table.probabilities(cloud.points[k], p);
      for (std::size_t i = 0; i < m; ++i) acc[i] += scale * p[i];
    }
    partial[block] = std::move(acc);
  });

  std::vector<double> out(m);
  std::vector<double> column(blocks);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t b = 0; b < blocks; ++b) column[b] = partial[b][i];
    out[i] = pairwise_sum(column) * std::exp(table.log_b[i]);
    if (!std::isfinite(out[i])) throw std::domain_error("non-finite section integral");
  }
  return out;
}

SigmaStats sigma_statistics(const MetricField& field, const SampleCloud& cloud, double window) {
  if (field.sigma.size() != cloud.size()) throw std::invalid_argument("field has no curvature data for this cloud");
  SigmaStats s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  std::vector<double> in_window;
  std::vector<double> weighted(cloud.size(), 0.0), volume(cloud.size(), 0.0);
  for (std::size_t k = 0; k < cloud.size(); ++k) {
    if (field.ill_conditioned[k] || !std::isfinite(field.sigma[k])) {
      ++s.flagged;
      continue;
    }
    weighted[k] = field.sigma[k] * field.det_h[k];
    volume[k] = field.det_h[k];
    if (cloud.level[k] > window) continue;
    in_window.push_back(field.sigma[k]);
    s.min = std::min(s.min, field.sigma[k]);
    s.max = std::max(s.max, field.sigma[k]);
  }
  s.count = in_window.size();
  s.avg = s.count ? pairwise_sum(in_window) / static_cast<double>(s.count) : std::numeric_limits<double>::quiet_NaN();
  s.volume_avg = cloud_sum(weighted, cloud) / cloud_sum(volume, cloud);
  return s;
}

double field_volume(const MetricField& field, const SampleCloud& cloud) { return cloud_sum(field.det_h, cloud); }

RicciDeviation::RicciDeviation(const FanoPolygon& polygon, const SampleCloud& cloud) : polygon_(polygon) {
  std::vector<double> e(cloud.size());
  for (std::size_t k = 0; k < cloud.size(); ++k) e[k] = std::exp(-reference_potential(polygon, cloud.points[k]).value);
  const double mass = cloud_sum(e, cloud);
  if (!(mass > 0.0) || !std::isfinite(mass)) throw std::domain_error("normalization integral of e^{-w0} failed");
  constant_ = std::log(polygon.area() / mass);
}

double RicciDeviation::operator()(const Vec2& x) const {
  const PotentialJet jet = reference_potential(polygon_, x);
  return -std::log(jet.hessian.determinant()) - jet.value + constant_;
}

std::vector<double> RicciDeviation::on_cloud(const SampleCloud& cloud) const {
  std::vector<double> h(cloud.size());
  for (std::size_t k = 0; k < cloud.size(); ++k) h[k] = (*this)(cloud.points[k]);
  return h;
}

std::vector<double> ricci_deviation_of(const MetricField& field, const SampleCloud& cloud, double area) {
  std::vector<double> e(field.size());
  for (std::size_t k = 0; k < field.size(); ++k) e[k] = std::exp(-field.u[k]);
  const double c = std::log(area / cloud_sum(e, cloud));
  std::vector<double> h(field.size());
  for (std::size_t k = 0; k < field.size(); ++k) h[k] = -std::log(field.det_h[k]) - field.u[k] + c;
  return h;
}

}  // namespace kforge
