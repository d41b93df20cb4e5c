#pragma once

// Structure-of-arrays view of the sections of one metric, shared by the
// pointwise and cloud evaluators.

#include <cmath>
#include <limits>
#include <vector>

#include "kforge/bergman.hpp"

namespace kforge::detail {

struct SectionTable {
  std::vector<double> mx, my, log_b;
  int rank = 1;

  explicit SectionTable(const MetricWeights& w) : rank(w.rank()) {
    const auto& pts = w.basis->points;
    mx.reserve(pts.size());
    my.reserve(pts.size());
    log_b.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      mx.push_back(pts[i].x);
      my.push_back(pts[i].y);
      log_b.push_back(std::log(w.b[w.basis->orbit_of[i]]));
    }
  }
  [[nodiscard]] std::size_t size() const { return mx.size(); }

  /// Fills p with the normalized probabilities pi_m(x) and returns log rho(x).
  double probabilities(const Vec2& x, std::vector<double>& p) const {
    const std::size_t n = size();
    p.resize(n);
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = mx[i] * x.x() + my[i] * x.y() - log_b[i];
      shift = std::max(shift, p[i]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::exp(p[i] - shift);
      total += p[i];
    }
    const double inv = 1.0 / total;
    for (std::size_t i = 0; i < n; ++i) p[i] *= inv;
    return shift + std::log(total);
  }

  /// Central moments up to `order` (2 or 4) of the distribution p. For order
  /// 4 the tensors are taken in the eigenframe of the covariance: near the
  /// divisors one variance is tiny and xy-frame sums lose it to cancellation.
  LogMoments moments(const Vec2& x, int order, std::vector<double>& p) const {
    LogMoments mom;
    mom.log_rho = probabilities(x, p);
    const std::size_t n = size();
    double ex = 0.0, ey = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ex += p[i] * mx[i];
      ey += p[i] * my[i];
    }
    mom.mean = {ex, ey};
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = mx[i] - ex, dy = my[i] - ey;
      const double px = p[i] * dx, py = p[i] * dy;
      sxx += px * dx;
      sxy += px * dy;
      syy += py * dy;
    }
    mom.cov << sxx, sxy, sxy, syy;
    if (order < 4) return mom;

    // Rotation angle of the eigenframe; the sums are redone in that frame.
    const double theta = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
    const double c = std::cos(theta), s = std::sin(theta);
    mom.frame << c, -s, s, c;
    double a2 = 0, ab = 0, b2 = 0;
    double a3 = 0, a2b = 0, ab2 = 0, b3 = 0;
    double a4 = 0, a3b = 0, a2b2 = 0, ab3 = 0, b4 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = mx[i] - ex, dy = my[i] - ey;
      const double da = c * dx + s * dy;
      const double db = -s * dx + c * dy;
      const double pa = p[i] * da, pb = p[i] * db;
      const double paa = pa * da, pab = pa * db, pbb = pb * db;
      a2 += paa;
      ab += pab;
      b2 += pbb;
      a3 += paa * da;
      a2b += paa * db;
      ab2 += pab * db;
      b3 += pbb * db;
      a4 += paa * da * da;
      a3b += paa * da * db;
      a2b2 += paa * db * db;
      ab3 += pab * db * db;
      b4 += pbb * db * db;
    }
    mom.cov << a2, ab, ab, b2;

    // Symmetric tensors are indexed by the number of second-axis indices.
    const double t3[4] = {a3, a2b, ab2, b3};
    const double t4[5] = {a4, a3b, a2b2, ab3, b4};
    const auto& cv = mom.cov;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
          mom.k3[i][j][k] = t3[i + j + k];
          for (int l = 0; l < 2; ++l) {
            mom.k4[i][j][k][l] =
                t4[i + j + k + l] - cv(i, j) * cv(k, l) - cv(i, k) * cv(j, l) - cv(i, l) * cv(j, k);
          }
        }
    return mom;
  }
};

}  // namespace kforge::detail
