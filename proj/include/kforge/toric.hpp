#pragma once

#include <compare>
#include <cstddef>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace kforge {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using IntMat2 = Eigen::Matrix2i;

/// An integer point of the character lattice (or of the ray lattice).
struct LatticePoint {
  int x = 0;
  int y = 0;

  auto operator<=>(const LatticePoint&) const = default;
  [[nodiscard]] Vec2 to_real() const { return {static_cast<double>(x), static_cast<double>(y)}; }
};

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a polygon file cannot be parsed; carries the offending line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& detail, int line, const std::string& source = {})
      : std::runtime_error((source.empty() ? "" : source + ":") + "line " + std::to_string(line) + ": " + detail),
        line_(line),
        detail_(detail) {}
  [[nodiscard]] int line() const { return line_; }
  [[nodiscard]] const std::string& detail() const { return detail_; }

 private:
  int line_;
  std::string detail_;
};

/**
 * Reflexive lattice polygon of a smooth or Gorenstein toric Fano surface.
 *
 * The fan rays v_i define the moment polygon
 *     Delta = { y : <y, v_i> >= -1 for all i },
 * whose vertices are the pairwise intersections of adjacent facet lines. The
 * symmetry group acts on the character lattice (m -> A m); on log coordinates
 * the compatible action is x -> A^{-T} x, see dual_action().
 */
class FanoPolygon {
 public:
  /// Validates the rays and computes the dual polygon and its symmetries.
  /// Throws GeometryError for non-primitive rays, rays that are not in strict
  /// counterclockwise order, rays that do not positively span the plane, and
  /// polygons whose vertices are not integral.
  static FanoPolygon from_rays(std::vector<LatticePoint> rays);

  [[nodiscard]] const std::vector<LatticePoint>& rays() const { return rays_; }
  /// Vertices of Delta in counterclockwise order.
  [[nodiscard]] const std::vector<LatticePoint>& dual_vertices() const { return vertices_; }
  [[nodiscard]] const std::vector<IntMat2>& symmetry_group() const { return group_; }

  [[nodiscard]] double area() const { return area_; }
  /// Barycenter of Delta (zero iff the Futaki invariant vanishes).
  [[nodiscard]] Vec2 barycenter() const;

  /// m in r * Delta.
  [[nodiscard]] bool contains(LatticePoint m, int r = 1) const;
  /// Smallest facet gap min_i (<y, v_i> + 1); positive iff y is interior.
  [[nodiscard]] double facet_gap(const Vec2& y) const;
  /// Support function max_p <p, x> over the vertices; the asymptotic slope of
  /// the reference potential.
  [[nodiscard]] double support(const Vec2& x) const;

 private:
  std::vector<LatticePoint> rays_;
  std::vector<LatticePoint> vertices_;
  std::vector<IntMat2> group_;
  double area_ = 0.0;
};

/// Action on log coordinates compatible with m -> A m on the lattice.
[[nodiscard]] Mat2 dual_action(const IntMat2& a);

/// Reads rays from text: two integers per line, '#' starts a comment line.
[[nodiscard]] FanoPolygon parse_polygon(std::istream& in);
[[nodiscard]] FanoPolygon read_polygon_file(const std::string& path);

/// Lattice points of r * Delta with their partition into symmetry orbits.
struct SectionBasis {
  int rank = 1;
  /// Sorted lexicographically.
  std::vector<LatticePoint> points;
  /// Indices into `points`; each orbit is sorted, orbit[0] is the representative.
  std::vector<std::vector<std::size_t>> orbits;
  /// orbit_of[i] is the orbit index of points[i].
  std::vector<std::size_t> orbit_of;

  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] std::size_t orbit_count() const { return orbits.size(); }
  [[nodiscard]] LatticePoint representative(std::size_t orbit) const { return points[orbits[orbit][0]]; }
  /// Index of `m` in `points`, or size() if absent.
  [[nodiscard]] std::size_t index_of(LatticePoint m) const;
};

[[nodiscard]] SectionBasis enumerate_sections(const FanoPolygon& polygon, int r);

struct PotentialJet {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();
  Mat2 hessian = Mat2::Zero();
};

/// w0(x) = log sum_p exp(<p, x>) over the vertices of Delta, with its
/// gradient (a point of Delta) and Hessian (the vertex covariance).
[[nodiscard]] PotentialJet reference_potential(const FanoPolygon& polygon, const Vec2& x);

}  // namespace kforge
