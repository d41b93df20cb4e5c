#include "kforge/bergman.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "section_table.hpp"

namespace kforge {

MetricWeights MetricWeights::uniform(std::shared_ptr<const SectionBasis> basis) {
  MetricWeights w;
  w.b.assign(basis->orbit_count(), 1.0);
  w.basis = std::move(basis);
  return w;
}

std::vector<double> MetricWeights::expanded() const {
  std::vector<double> out(basis->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = b[basis->orbit_of[i]];
  return out;
}

void MetricWeights::validate() const {
  if (!basis) throw std::invalid_argument("metric weights without a section basis");
  if (b.size() != basis->orbit_count()) {
    throw std::invalid_argument("weight count " + std::to_string(b.size()) + " does not match orbit count " +
                                std::to_string(basis->orbit_count()));
  }
  for (std::size_t o = 0; o < b.size(); ++o) {
    if (!(b[o] > 0.0) || !std::isfinite(b[o])) {
      throw std::invalid_argument("weight of orbit " + std::to_string(o) + " is not positive and finite");
    }
  }
}

namespace {

LogMoments moments_at(const MetricWeights& weights, const Vec2& x, int order) {
  const detail::SectionTable table(weights);
  std::vector<double> p;
  return table.moments(x, order, p);
}

// Derivatives in the moment frame, rotated back to standard coordinates.
LogDetJet log_det_from_moments(const LogMoments& mom, int r) {
  const Mat2& c = mom.cov;
  const Mat2 ci = c.inverse();
  LogDetJet jet;
  jet.value = std::log(c.determinant()) - 2.0 * std::log(static_cast<double>(r));

  std::array<Mat2, 2> k3;  // k3[a](i,j) = kappa3_{ija}
  for (int a = 0; a < 2; ++a)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) k3[a](i, j) = mom.k3[i][j][a];

  for (int a = 0; a < 2; ++a) jet.gradient[a] = (ci * k3[a]).trace();
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      double k4_term = 0.0;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) k4_term += ci(i, j) * mom.k4[i][j][a][b];
      jet.hessian(a, b) = -(ci * k3[b] * ci * k3[a]).trace() + k4_term;
    }
  }
  jet.hessian = 0.5 * (jet.hessian + jet.hessian.transpose()).eval();
  jet.gradient = (mom.frame * jet.gradient).eval();
  jet.hessian = (mom.frame * jet.hessian * mom.frame.transpose()).eval();
  return jet;
}

}  // namespace

LogMoments LogMoments::standard_frame() const {
  LogMoments out = *this;
  const Mat2& q = frame;
  out.frame = Mat2::Identity();
  out.cov = standard_cov();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        double t3 = 0.0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) t3 += q(i, a) * q(j, b) * q(k, c) * k3[a][b][c];
        out.k3[i][j][k] = t3;
        for (int l = 0; l < 2; ++l) {
          double t4 = 0.0;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int c = 0; c < 2; ++c)
                for (int d = 0; d < 2; ++d) t4 += q(i, a) * q(j, b) * q(k, c) * q(l, d) * k4[a][b][c][d];
          out.k4[i][j][k][l] = t4;
        }
      }
  return out;
}

LogMoments bergman_density(const MetricWeights& weights, const Vec2& x) {
  return moments_at(weights, x, 4).standard_frame();
}

PotentialJet kaehler_data(const MetricWeights& weights, const Vec2& x) {
  const LogMoments mom = moments_at(weights, x, 2);
  const double r = weights.rank();
  return {mom.log_rho / r, mom.mean / r, mom.cov / r};
}

LogDetJet log_det_hessian(const MetricWeights& weights, const Vec2& x) {
  return log_det_from_moments(moments_at(weights, x, 4), weights.rank());
}

CurvaturePoint curvature_from_moments(const LogMoments& mom, int r, double condition_bound) {
  CurvaturePoint pt;
  const double rr = r;
  pt.potential = {mom.log_rho / rr, mom.mean / rr, mom.standard_cov() / rr};
  pt.det_h = mom.cov.determinant() / (rr * rr);

  const Eigen::SelfAdjointEigenSolver<Mat2> eig(mom.cov, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()[0];
  const double hi = eig.eigenvalues()[1];
  pt.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  pt.ill_conditioned = !(pt.condition <= condition_bound);
  if (lo <= 0.0) {
    pt.sigma = std::numeric_limits<double>::quiet_NaN();
    return pt;
  }
  // The trace is frame invariant, so it is taken in the moment frame.
  LogMoments local = mom;
  local.frame = Mat2::Identity();
  const LogDetJet ld = log_det_from_moments(local, r);
  pt.sigma = -0.5 * rr * (mom.cov.inverse().cwiseProduct(ld.hessian)).sum();
  return pt;
}

CurvaturePoint curvature_point(const MetricWeights& weights, const Vec2& x, double condition_bound) {
  return curvature_from_moments(moments_at(weights, x, 4), weights.rank(), condition_bound);
}

double normalized_scalar_curvature(const MetricWeights& weights, const Vec2& x) {
  return curvature_point(weights, x).sigma;
}

void write_weights(std::ostream& out, const MetricWeights& weights) {
  const auto& basis = *weights.basis;
  out << "# rank " << basis.rank << ", " << basis.orbit_count() << " orbits: mx my weight\n";
  for (std::size_t o = 0; o < basis.orbit_count(); ++o) {
    const LatticePoint m = basis.representative(o);
    out << m.x << ' ' << m.y << ' ' << std::setprecision(17) << weights.b[o] << '\n';
  }
}

void write_weights_file(const std::string& path, const MetricWeights& weights) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write weights file '" + path + "'");
  write_weights(out, weights);
  if (!out) throw std::runtime_error("error writing weights file '" + path + "'");
}

MetricWeights read_weights(std::istream& in, std::shared_ptr<const SectionBasis> basis) {
  MetricWeights w;
  w.basis = basis;
  w.b.assign(basis->orbit_count(), std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> seen(basis->orbit_count(), false);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    int x = 0, y = 0;
    double value = 0.0;
    if (!(ss >> x)) continue;
    if (!(ss >> y >> value)) throw ParseError("expected 'mx my weight'", lineno);
    const std::size_t idx = basis->index_of({x, y});
    if (idx == basis->size()) throw ParseError("lattice point is not a section of this rank", lineno);
    const std::size_t orbit = basis->orbit_of[idx];
    if (basis->orbits[orbit][0] != idx) throw ParseError("point is not its orbit's representative", lineno);
    if (seen[orbit]) throw ParseError("orbit listed twice", lineno);
    seen[orbit] = true;
    w.b[orbit] = value;
  }
  for (std::size_t o = 0; o < seen.size(); ++o) {
    if (!seen[o]) throw ParseError("missing weight for orbit " + std::to_string(o), lineno);
  }
  w.validate();
  return w;
}

MetricWeights read_weights_file(const std::string& path, std::shared_ptr<const SectionBasis> basis) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open weights file '" + path + "'");
  try {
    return read_weights(in, std::move(basis));
  } catch (const ParseError& e) {
    throw ParseError(e.detail(), e.line(), path);
  }
}

}  // namespace kforge
