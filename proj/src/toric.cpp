#include "kforge/toric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace kforge {

namespace {

long cross(LatticePoint a, LatticePoint b) { return static_cast<long>(a.x) * b.y - static_cast<long>(a.y) * b.x; }
long dot(LatticePoint a, LatticePoint b) { return static_cast<long>(a.x) * b.x + static_cast<long>(a.y) * b.y; }

LatticePoint apply(const IntMat2& a, LatticePoint m) {
  return {a(0, 0) * m.x + a(0, 1) * m.y, a(1, 0) * m.x + a(1, 1) * m.y};
}

std::string show(LatticePoint p) {
  return "(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")";
}

// Key for storing matrices in ordered containers.
std::array<int, 4> key(const IntMat2& a) { return {a(0, 0), a(0, 1), a(1, 0), a(1, 1)}; }

}  // namespace

FanoPolygon FanoPolygon::from_rays(std::vector<LatticePoint> rays) {
  if (rays.size() < 3) throw GeometryError("need at least 3 rays, got " + std::to_string(rays.size()));
  for (const auto& v : rays) {
    if (std::gcd(v.x, v.y) != 1) throw GeometryError("non-primitive ray " + show(v));
  }

  const std::size_t n = rays.size();
  double winding = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = rays[i];
    const auto b = rays[(i + 1) % n];
    const long c = cross(a, b);
    if (c <= 0) {
      throw GeometryError("rays " + show(a) + " and " + show(b) +
                          " are not in strict counterclockwise order (rays must positively span the plane)");
    }
    winding += std::atan2(static_cast<double>(c), static_cast<double>(dot(a, b)));
  }
  if (std::abs(winding - 2.0 * std::numbers::pi) > 1e-9) {
    throw GeometryError("rays do not positively span the plane (winding " + std::to_string(winding) + ")");
  }

  FanoPolygon p;
  p.rays_ = std::move(rays);

  // Vertex i is the intersection of the facet lines of rays i and i+1.
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = p.rays_[i];
    const auto b = p.rays_[(i + 1) % n];
    const long det = cross(a, b);
    // Solve a.y = -1, b.y = -1 by Cramer's rule.
    const long nx = -b.y + a.y;
    const long ny = -a.x + b.x;
    if (nx % det != 0 || ny % det != 0) {
      throw GeometryError("polygon is not reflexive: facets of " + show(a) + " and " + show(b) +
                          " meet at a fractional point");
    }
    const LatticePoint v{static_cast<int>(nx / det), static_cast<int>(ny / det)};
    if (p.vertices_.empty() || p.vertices_.back() != v) p.vertices_.push_back(v);
  }
  if (p.vertices_.size() > 1 && p.vertices_.front() == p.vertices_.back()) p.vertices_.pop_back();
  for (const auto& v : p.vertices_) {
    for (const auto& ray : p.rays_) {
      if (dot(v, ray) < -1) throw GeometryError("rays do not define a convex reflexive polygon");
    }
  }

  long twice_area = 0;
  const std::size_t nv = p.vertices_.size();
  for (std::size_t i = 0; i < nv; ++i) twice_area += cross(p.vertices_[i], p.vertices_[(i + 1) % nv]);
  p.area_ = 0.5 * static_cast<double>(twice_area);

  // Symmetries: unimodular matrices with entries in {-1,0,1} permuting the vertices.
  const std::set<LatticePoint> vset(p.vertices_.begin(), p.vertices_.end());
  std::map<std::array<int, 4>, IntMat2> found;
  for (int e = 0; e < 81; ++e) {
    IntMat2 a;
    int code = e;
    for (int k = 0; k < 4; ++k) {
      a(k / 2, k % 2) = code % 3 - 1;
      code /= 3;
    }
    const int det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    if (det != 1 && det != -1) continue;
    bool ok = true;
    for (const auto& v : p.vertices_) {
      if (!vset.contains(apply(a, v))) {
        ok = false;
        break;
      }
    }
    if (ok) found.emplace(key(a), a);
  }
  // Close under composition (a no-op for a complete scan, kept as a check).
  for (bool grew = true; grew;) {
    grew = false;
    std::vector<IntMat2> current;
    for (const auto& [k, a] : found) current.push_back(a);
    for (const auto& a : current) {
      for (const auto& b : current) {
        const IntMat2 c = a * b;
        if (found.emplace(key(c), c).second) grew = true;
      }
    }
  }
  for (const auto& [k, a] : found) p.group_.push_back(a);
  return p;
}

Vec2 FanoPolygon::barycenter() const {
  Vec2 acc = Vec2::Zero();
  double twice_area = 0.0;
  const std::size_t n = vertices_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = vertices_[i].to_real();
    const Vec2 b = vertices_[(i + 1) % n].to_real();
    const double c = a.x() * b.y() - a.y() * b.x();
    twice_area += c;
    acc += c * (a + b);
  }
  return acc / (3.0 * twice_area);
}

bool FanoPolygon::contains(LatticePoint m, int r) const {
  return std::all_of(rays_.begin(), rays_.end(), [&](const LatticePoint& v) { return dot(m, v) >= -r; });
}

double FanoPolygon::facet_gap(const Vec2& y) const {
  double gap = std::numeric_limits<double>::infinity();
  for (const auto& v : rays_) gap = std::min(gap, y.dot(v.to_real()) + 1.0);
  return gap;
}

double FanoPolygon::support(const Vec2& x) const {
  double s = -std::numeric_limits<double>::infinity();
  for (const auto& p : vertices_) s = std::max(s, x.dot(p.to_real()));
  return s;
}

Mat2 dual_action(const IntMat2& a) { return a.cast<double>().transpose().inverse(); }

FanoPolygon parse_polygon(std::istream& in) {
  std::vector<LatticePoint> rays;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string first;
    if (!(ss >> first)) continue;
    ss.clear();
    ss.seekg(0);
    long x = 0, y = 0;
    if (!(ss >> x >> y)) throw ParseError("expected two integers, got '" + line + "'", lineno);
    std::string rest;
    if (ss >> rest) throw ParseError("unexpected trailing text '" + rest + "'", lineno);
    if (std::abs(x) > 1000000 || std::abs(y) > 1000000) throw ParseError("ray entry out of range", lineno);
    rays.push_back({static_cast<int>(x), static_cast<int>(y)});
  }
  if (rays.empty()) throw ParseError("no rays found", lineno);
  return FanoPolygon::from_rays(std::move(rays));
}

FanoPolygon read_polygon_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open polygon file '" + path + "'");
  try {
    return parse_polygon(in);
  } catch (const ParseError& e) {
    throw ParseError(e.detail(), e.line(), path);
  }
}

std::size_t SectionBasis::index_of(LatticePoint m) const {
  const auto it = std::lower_bound(points.begin(), points.end(), m);
  if (it == points.end() || *it != m) return points.size();
  return static_cast<std::size_t>(it - points.begin());
}

SectionBasis enumerate_sections(const FanoPolygon& polygon, int r) {
  if (r < 1) throw std::invalid_argument("rank r must be >= 1");
  SectionBasis basis;
  basis.rank = r;

  int lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  for (const auto& v : polygon.dual_vertices()) {
    lo_x = std::min(lo_x, v.x * r);
    hi_x = std::max(hi_x, v.x * r);
    lo_y = std::min(lo_y, v.y * r);
    hi_y = std::max(hi_y, v.y * r);
  }
  for (int x = lo_x; x <= hi_x; ++x) {
    for (int y = lo_y; y <= hi_y; ++y) {
      if (polygon.contains({x, y}, r)) basis.points.push_back({x, y});
    }
  }
  std::sort(basis.points.begin(), basis.points.end());

  const std::size_t n = basis.points.size();
  constexpr auto kUnset = static_cast<std::size_t>(-1);
  basis.orbit_of.assign(n, kUnset);
  for (std::size_t i = 0; i < n; ++i) {
    if (basis.orbit_of[i] != kUnset) continue;
    std::set<std::size_t> members;
    for (const auto& a : polygon.symmetry_group()) {
      const std::size_t j = basis.index_of(apply(a, basis.points[i]));
      if (j == n) throw GeometryError("symmetry does not preserve the section lattice points");
      members.insert(j);
    }
    const std::size_t orbit = basis.orbits.size();
    basis.orbits.emplace_back(members.begin(), members.end());
    for (std::size_t j : members) basis.orbit_of[j] = orbit;
  }
  return basis;
}

PotentialJet reference_potential(const FanoPolygon& polygon, const Vec2& x) {
  const auto& verts = polygon.dual_vertices();
  double shift = -std::numeric_limits<double>::infinity();
  for (const auto& p : verts) shift = std::max(shift, x.dot(p.to_real()));

  double total = 0.0;
  Vec2 first = Vec2::Zero();
  Mat2 second = Mat2::Zero();
  for (const auto& p : verts) {
    const Vec2 pv = p.to_real();
    const double w = std::exp(x.dot(pv) - shift);
    total += w;
    first += w * pv;
    second += w * pv * pv.transpose();
  }
  PotentialJet jet;
  jet.value = shift + std::log(total);
  jet.gradient = first / total;
  jet.hessian = second / total - jet.gradient * jet.gradient.transpose();
  return jet;
}

}  // namespace kforge
