#include "kforge/quadrature.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "kforge/parallel.hpp"

namespace kforge {

SampleCloud build_grid(const FanoPolygon& polygon, double resolution, double radius, double tolerance) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) throw std::invalid_argument("grid resolution must be positive");
  if (!(radius > 0.0) || !std::isfinite(radius)) throw std::invalid_argument("grid radius must be positive");

  // support(x) >= |x| / max|v|, so this box contains the whole cut.
  double max_ray = 0.0;
  for (const auto& v : polygon.rays()) max_ray = std::max(max_ray, v.to_real().norm());
  const auto extent = static_cast<int>(std::ceil(radius * max_ray / resolution)) + 1;

  SampleCloud cloud;
  cloud.resolution = resolution;
  cloud.radius = radius;
  const double cell = resolution * resolution;
  for (int i = -extent; i <= extent; ++i) {
    for (int j = -extent; j <= extent; ++j) {
      const Vec2 x(i * resolution, j * resolution);
      const double s = polygon.support(x);
      if (s > radius * (1.0 + 1e-12)) continue;
      cloud.points.push_back(x);
      cloud.index.push_back({i, j});
      cloud.weights.push_back(cell);
      cloud.level.push_back(s);
    }
  }

  cloud.certificate_defect = certificate_defect(polygon, cloud);
  if (!(cloud.certificate_defect <= tolerance)) {
    std::ostringstream msg;
    msg << "sample cloud fails the volume certificate: defect " << cloud.certificate_defect << " exceeds " << tolerance
        << " (radius " << radius << ", resolution " << resolution << ")";
    throw CloudError(msg.str(), cloud.certificate_defect);
  }
  return cloud;
}

double certificate_defect(const FanoPolygon& polygon, const SampleCloud& cloud) {
  std::vector<double> det(cloud.size());
  for (std::size_t k = 0; k < cloud.size(); ++k) det[k] = reference_potential(polygon, cloud.points[k]).hessian.determinant();
  const double vol = cloud_sum(det, cloud);
  return std::abs(vol - polygon.area()) / polygon.area();
}

double cloud_sum(std::span<const double> f, const SampleCloud& cloud) {
  if (f.size() != cloud.size()) throw std::invalid_argument("value array does not match the cloud size");
  std::vector<double> terms(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) terms[k] = cloud.weights[k] * f[k];
  return pairwise_sum(terms);
}

Integral integrate(std::span<const double> f, const SampleCloud& cloud, std::span<const double> density) {
  if (f.size() != cloud.size() || density.size() != cloud.size()) {
    throw std::invalid_argument("value arrays do not match the cloud size");
  }
  const std::size_t n = cloud.size();
  std::vector<double> fine(n), coarse(n, 0.0), absolute(n), ring(n, 0.0), inner_ring(n, 0.0);
  const double ring_level = cloud.radius - 2.0 * cloud.resolution;
  const double inner_level = cloud.radius - 4.0 * cloud.resolution;
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(f[k]) || !std::isfinite(density[k])) {
      throw std::domain_error("non-finite integrand at cloud point " + std::to_string(k));
    }
    if (density[k] < 0.0) throw std::domain_error("negative density at cloud point " + std::to_string(k));
    const double term = cloud.weights[k] * f[k] * density[k];
    fine[k] = term;
    absolute[k] = std::abs(term);
    const auto& idx = cloud.index[k];
    if (idx[0] % 2 == 0 && idx[1] % 2 == 0) coarse[k] = 4.0 * term;
    if (cloud.level[k] > ring_level) {
      ring[k] = std::abs(term);
    } else if (cloud.level[k] > inner_level) {
      inner_ring[k] = std::abs(term);
    }
  }
  Integral out;
  out.value = pairwise_sum(fine);
  const double coarse_value = pairwise_sum(coarse);
  const double rounding = 64.0 * std::numeric_limits<double>::epsilon() * pairwise_sum(absolute);
  // Truncated tail: extend the decay between the two outer bands geometrically.
  // A band that is not decaying gets charged once per band out to 2R.
  const double outer = pairwise_sum(ring), inner = pairwise_sum(inner_ring);
  const double q = inner > 0.0 ? outer / inner : 1.0;
  const double tail = q < 0.9 ? outer * q / (1.0 - q) : outer * cloud.radius / (2.0 * cloud.resolution);
  out.error = std::abs(out.value - coarse_value) / 3.0 + rounding + outer + tail;
  return out;
}

Integral integrate(std::span<const double> f, const SampleCloud& cloud) {
  const std::vector<double> one(cloud.size(), 1.0);
  return integrate(f, cloud, one);
}

}  // namespace kforge
