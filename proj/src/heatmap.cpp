#include "kforge/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "kforge/parallel.hpp"
#include "section_table.hpp"

namespace kforge {

Rgb diverging_color(double sigma, double lo, double hi) {
  if (!std::isfinite(sigma)) return kFlagged;
  const double mid = 0.5 * (lo + hi);
  const double t = std::clamp((sigma - mid) / (0.5 * (hi - lo)), -1.0, 1.0);
  // Linear ramps white -> (59, 76, 192) below and white -> (180, 4, 38) above.
  auto mix = [](double a, double b, double s) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * s)); };
  if (t < 0.0) return {mix(255, 59, -t), mix(255, 76, -t), mix(255, 192, -t)};
  return {mix(255, 180, t), mix(255, 4, t), mix(255, 38, t)};
}

Image::Image(int w, int h, Rgb fill) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {
  for (std::size_t k = 0; k < rgb.size(); k += 3) std::copy(fill.begin(), fill.end(), rgb.begin() + k);
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t k = (static_cast<std::size_t>(y) * width + x) * 3;
  std::copy(c.begin(), c.end(), rgb.begin() + k);
}

Rgb Image::at(int x, int y) const {
  const std::size_t k = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[k], rgb[k + 1], rgb[k + 2]};
}

void write_ppm(std::ostream& out, const Image& image) {
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
}

void write_ppm_file(const std::string& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_ppm(out, image);
  if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

// Newton on f(x) = log(rho)/r - <y, x>; abort once the support value of x
// passes `limit` (the preimage lies outside the region of interest).
std::optional<Vec2> newton_preimage(const detail::SectionTable& table, const FanoPolygon* polygon, const Vec2& y,
                                    Vec2 x, double tolerance, int max_iterations, double limit,
                                    std::vector<double>& p) {
  const double r = table.rank;
  // Armijo on f, or a plain decrease of |grad f| once f stalls at rounding level.
  auto accept = [&](const Vec2& z, double f, double slope, double t, double gnorm) {
    const LogMoments m = table.moments(z, 2, p);
    if (m.log_rho / r - y.dot(z) <= f + 1e-4 * t * slope) return true;
    return (m.mean / r - y).norm() <= (1.0 - 1e-4 * t) * gnorm;
  };
  for (int it = 0; it < max_iterations; ++it) {
    const LogMoments mom = table.moments(x, 2, p);
    const double f = mom.log_rho / r - y.dot(x);
    const Vec2 g = mom.mean / r - y;
    if (g.norm() < tolerance) return x;
    const Mat2 h = mom.cov / r;
    Vec2 dx = -h.ldlt().solve(g);
    if (!dx.allFinite() || g.dot(dx) >= 0.0) dx = -g;
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k) {
      const Vec2 trial = x + t * dx;
      if (accept(trial, f, g.dot(dx), t, g.norm())) {
        x = trial;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) return g.norm() < 1e3 * tolerance ? std::optional<Vec2>(x) : std::nullopt;
    if (polygon && polygon->support(x) > limit) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace

std::optional<Vec2> inverse_moment_map(const MetricWeights& weights, const Vec2& y, const Vec2& start,
                                       double tolerance, int max_iterations) {
  const detail::SectionTable table(weights);
  std::vector<double> p;
  return newton_preimage(table, nullptr, y, start, tolerance, max_iterations,
                         std::numeric_limits<double>::infinity(), p);
}

Image sigma_heatmap(const MetricWeights& weights, const FanoPolygon& polygon, const HeatmapOptions& options,
                    HeatmapStats* stats) {
  if (options.size < 2) throw std::invalid_argument("heatmap size must be >= 2");
  weights.validate();
  const int n = options.size;
  const auto& verts = polygon.dual_vertices();
  double x0 = verts[0].x, x1 = x0, y0 = verts[0].y, y1 = y0;
  for (const auto& v : verts) {
    x0 = std::min<double>(x0, v.x);
    x1 = std::max<double>(x1, v.x);
    y0 = std::min<double>(y0, v.y);
    y1 = std::max<double>(y1, v.y);
  }
  const double span = 1.08 * std::max(x1 - x0, y1 - y0);
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  const double px = span / n;
  auto pixel_center = [&](int col, int row) {
    return Vec2(cx - 0.5 * span + (col + 0.5) * px, cy + 0.5 * span - (row + 0.5) * px);
  };

  const detail::SectionTable table(weights);
  Image img(n, n, kBackground);
  std::vector<unsigned char> kind(static_cast<std::size_t>(n) * n, 0);  // 0 blank, 1 drawn, 2 flagged
  std::vector<double> sig(static_cast<std::size_t>(n) * n, std::numeric_limits<double>::quiet_NaN());

  parallel_for_blocks(static_cast<std::size_t>(n), options.threads, [&](std::size_t row_idx) {
    const int row = static_cast<int>(row_idx);
    std::vector<double> p;
    Vec2 warm = Vec2::Zero();
    for (int col = 0; col < n; ++col) {
      const Vec2 y = pixel_center(col, row);
      if (!(polygon.facet_gap(y) > 0.0)) continue;
      auto x = newton_preimage(table, &polygon, y, warm, 1e-10, 200, options.radius + 2.0, p);
      if (!x) x = newton_preimage(table, &polygon, y, Vec2::Zero(), 1e-10, 200, options.radius + 2.0, p);
      const std::size_t k = static_cast<std::size_t>(row) * n + col;
      if (!x) {
        kind[k] = 2;
        continue;
      }
      warm = *x;
      if (polygon.support(*x) > options.radius) continue;
      const CurvaturePoint cp = curvature_from_moments(table.moments(*x, 4, p), table.rank, options.condition_bound);
      if (cp.ill_conditioned || !std::isfinite(cp.sigma)) {
        kind[k] = 2;
        continue;
      }
      kind[k] = 1;
      sig[k] = cp.sigma;
      img.set(col, row, diverging_color(cp.sigma, options.lo, options.hi));
    }
  });

  // Preimages beyond the radius that Newton abandoned are blank, not flagged;
  // tell them apart by re-checking that the pixel is well inside Delta.
  HeatmapStats st;
  st.sigma_min = std::numeric_limits<double>::infinity();
  st.sigma_max = -std::numeric_limits<double>::infinity();
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col) {
      const std::size_t k = static_cast<std::size_t>(row) * n + col;
      if (kind[k] == 2 && polygon.facet_gap(pixel_center(col, row)) < 2.0 * px) kind[k] = 0;
      if (kind[k] == 1) {
        ++st.drawn;
        st.sigma_min = std::min(st.sigma_min, sig[k]);
        st.sigma_max = std::max(st.sigma_max, sig[k]);
      } else if (kind[k] == 2) {
        ++st.flagged;
        img.set(col, row, kFlagged);
      } else {
        ++st.blank;
      }
    }

  // Outline of Delta.
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const Vec2 a = verts[i].to_real(), b = verts[(i + 1) % verts.size()].to_real();
    const int steps = static_cast<int>(std::ceil((b - a).norm() / px * 2.0)) + 1;
    for (int s = 0; s <= steps; ++s) {
      const Vec2 q = a + (b - a) * (static_cast<double>(s) / steps);
      const int col = static_cast<int>(std::floor((q.x() - (cx - 0.5 * span)) / px));
      const int row = static_cast<int>(std::floor(((cy + 0.5 * span) - q.y()) / px));
      img.set(col, row, kOutline);
    }
  }
  if (stats) *stats = st;
  return img;
}

}  // namespace kforge
