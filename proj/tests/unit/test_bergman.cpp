#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "kforge/bergman.hpp"
#include "kforge/field.hpp"
#include "kforge/quadrature.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace kforge;

namespace {

// Fubini-Study weights on P2: rho = e^{-r(x1+x2)} (1 + e^{x1} + e^{x2})^{3r}, so
// b_m is the inverse multinomial coefficient and u = 3 log(1 + e^x1 + e^x2) - x1 - x2
// solves det D^2 u = 9 e^{-u}.
MetricWeights fubini_study_p2(int r) {
  auto b = test::basis(test::p2(), r);
  MetricWeights w = MetricWeights::uniform(b);
  auto inv_multinomial = [r](const LatticePoint& m) {
    const int a = m.x + r, c = m.y + r, d = 3 * r - a - c;
    return std::exp(std::lgamma(a + 1.0) + std::lgamma(c + 1.0) + std::lgamma(d + 1.0) - std::lgamma(3.0 * r + 1.0));
  };
  for (std::size_t o = 0; o < b->orbit_count(); ++o) {
    w.b[o] = inv_multinomial(b->representative(o));
    for (auto i : b->orbits[o]) REQUIRE(inv_multinomial(b->points[i]) == doctest::Approx(w.b[o]).epsilon(1e-13));
  }
  return w;
}

using test::log_det_h;

}  // namespace

TEST_CASE("density at the origin for uniform rank-one weights") {
  const auto w = MetricWeights::uniform(test::basis(test::hexagon(), 1));
  const auto mom = bergman_density(w, Vec2::Zero());
  CHECK(std::exp(mom.log_rho) == doctest::Approx(7.0).epsilon(1e-14));
  CHECK(mom.mean.norm() < 1e-15);
}

TEST_CASE("density matches a direct sum") {
  std::mt19937_64 rng(3);
  const auto b = test::basis(test::hexagon(), 1);
  const auto w = test::random_weights(b, rng);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int k = 0; k < 50; ++k) {
    const Vec2 x(d(rng), d(rng));
    double rho = 0;
    Vec2 mean = Vec2::Zero();
    const auto full = w.expanded();
    for (std::size_t i = 0; i < b->size(); ++i) {
      const double t = std::exp(b->points[i].to_real().dot(x)) / full[i];
      rho += t;
      mean += t * b->points[i].to_real();
    }
    mean /= rho;
    const auto mom = bergman_density(w, x);
    CHECK(mom.log_rho == doctest::Approx(std::log(rho)).epsilon(1e-13));
    CHECK((mom.mean - mean).norm() < 1e-13);
  }
}

TEST_CASE("no overflow far out; mass concentrates on the maximizing face") {
  std::mt19937_64 rng(5);
  const auto w = test::random_weights(test::basis(test::hexagon(), 3), rng);
  const auto mom = bergman_density(w, Vec2(40.0, 0.0));
  CHECK(std::isfinite(mom.log_rho));
  CHECK(mom.mean.x() == doctest::Approx(3.0).epsilon(1e-12));
  const auto far = bergman_density(w, Vec2(1e4, -3e3));
  CHECK(std::isfinite(far.log_rho));
  CHECK(far.cov.allFinite());
}

TEST_CASE("vertex-dominated weights recover w0") {
  const auto hex = test::hexagon();
  const auto b = test::basis(hex, 1);
  MetricWeights w = MetricWeights::uniform(b);
  const LatticePoint origin{0, 0};
  w.b[b->orbit_of[b->index_of(origin)]] = 1e14;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-4, 4);
  for (int k = 0; k < 100; ++k) {
    const Vec2 x(d(rng), d(rng));
    const auto u = kaehler_data(w, x);
    const auto w0 = reference_potential(hex, x);
    CHECK(u.value == doctest::Approx(w0.value).epsilon(1e-12));
    CHECK((u.gradient - w0.gradient).norm() < 1e-12);
    CHECK((u.hessian - w0.hessian).norm() < 1e-12);
  }
  // The rank-one vertex metric used elsewhere is exactly w0.
  const auto ref = reference_metric(hex);
  CHECK(kaehler_data(ref, Vec2(0.3, -1.2)).value ==
        doctest::Approx(reference_potential(hex, Vec2(0.3, -1.2)).value).epsilon(1e-15));
}

TEST_CASE("moment map containment for random weights") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(-6, 6);
  for (const auto& p : {test::hexagon(), test::p2(), test::blowup1()}) {
    const auto w = test::random_weights(test::basis(p, 3), rng, 2.0);
    for (int k = 0; k < 10000; ++k) {
      const Vec2 x(d(rng), d(rng));
      const auto u = kaehler_data(w, x);
      for (const auto& v : p.rays()) CHECK(u.gradient.dot(v.to_real()) > -1.0);
      CHECK(u.hessian.determinant() > 0.0);
      CHECK(u.hessian(0, 0) > 0.0);
    }
  }
}

TEST_CASE("moment-map volume identity on the default cloud") {
  const auto hex = test::hexagon();
  const SampleCloud cloud = build_grid(hex, kDefaultResolution, kDefaultRadius);
  std::mt19937_64 rng(19);
  for (int r : {1, 4}) {
    const auto w = test::random_weights(test::basis(hex, r), rng);
    FieldOptions o;
    o.curvature = false;
    const auto field = evaluate_metric_field(w, cloud, o);
    CHECK(std::abs(field_volume(field, cloud) - 3.0) / 3.0 < 2e-3);
  }
}

TEST_CASE("sigma is identically one for the Fubini-Study metric on P2") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> d(-5, 5);
  for (int r : {1, 2, 3}) {
    const auto w = fubini_study_p2(r);
    for (int k = 0; k < 200; ++k) {
      const Vec2 x(d(rng), d(rng));
      CHECK(normalized_scalar_curvature(w, x) == doctest::Approx(1.0).epsilon(1e-10));
      // det D^2 u = 9 e^{-u}.
      const auto u = kaehler_data(w, x);
      CHECK(u.hessian.determinant() == doctest::Approx(9.0 * std::exp(-u.value)).epsilon(1e-10));
    }
  }
}

TEST_CASE("analytic D^2 log det H matches central differences") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> d(-3, 3);
  double worst_hess = 0.0, worst_grad = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto& poly = (k % 3 == 0) ? test::hexagon() : (k % 3 == 1 ? test::p2() : test::blowup1());
    const auto w = test::random_weights(test::basis(poly, 1 + k % 4), rng);
    const Vec2 x(d(rng), d(rng));
    const LogDetJet jet = log_det_hessian(w, x);
    CHECK(jet.value == doctest::Approx(log_det_h(w, x)).epsilon(1e-12));
    const Mat2 fd = test::fd_log_det_hessian(w, x);
    const Vec2 g = test::fd_log_det_gradient(w, x);
    worst_hess = std::max(worst_hess, (jet.hessian - fd).norm() / std::max(jet.hessian.norm(), 1e-2));
    worst_grad = std::max(worst_grad, (jet.gradient - g).norm() / std::max(jet.gradient.norm(), 1.0));
  }
  MESSAGE("worst relative errors: hessian " << worst_hess << ", gradient " << worst_grad);
  CHECK(worst_hess < 1e-6);
  CHECK(worst_grad < 1e-6);
}

TEST_CASE("symmetry equivariance of u and sigma") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> d(-4, 4);
  for (const auto& p : {test::hexagon(), test::p2(), test::blowup1()}) {
    const auto w = test::random_weights(test::basis(p, 3), rng);
    for (int k = 0; k < 20; ++k) {
      const Vec2 x(d(rng), d(rng));
      const double u = kaehler_data(w, x).value;
      const double s = normalized_scalar_curvature(w, x);
      for (const auto& a : p.symmetry_group()) {
        const Vec2 y = dual_action(a) * x;
        CHECK(kaehler_data(w, y).value == doctest::Approx(u).epsilon(1e-12));
        CHECK(normalized_scalar_curvature(w, y) == doctest::Approx(s).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("ill-conditioned points are flagged, not fatal") {
  const auto w = MetricWeights::uniform(test::basis(test::hexagon(), 2));
  const auto near = curvature_point(w, Vec2(1.0, 0.5));
  CHECK_FALSE(near.ill_conditioned);
  const auto far = curvature_point(w, Vec2(40.0, 0.0));
  CHECK(far.ill_conditioned);
  CHECK(far.condition > kDefaultConditionBound);
}

TEST_CASE("Ricci deviation of w0") {
  const auto hex = test::hexagon();
  const SampleCloud cloud = build_grid(hex, 0.125, 20.0);
  const RicciDeviation h(hex, cloud);
  // Direct formula at the origin: H = [[2/3,-1/3],[-1/3,2/3]], det = 1/3, w0 = log 6.
  CHECK(h(Vec2::Zero()) == doctest::Approx(-std::log(1.0 / 3.0) - std::log(6.0) + h.constant()).epsilon(1e-14));

  // (1/V) int e^h det D^2 w0 = 1.
  std::vector<double> f(cloud.size());
  for (std::size_t k = 0; k < cloud.size(); ++k)
    f[k] = std::exp(h(cloud.points[k])) * reference_potential(hex, cloud.points[k]).hessian.determinant();
  CHECK(cloud_sum(f, cloud) / 3.0 == doctest::Approx(1.0).epsilon(1e-3));

  // log det D^2 w0 = -h - w0 + c gives sigma(w0) = 1 + tr(H^{-1} D^2 h) / 2.
  const auto ref = reference_metric(hex);
  const double s = 1e-3;
  for (const Vec2& x : {Vec2(0.2, 0.1), Vec2(-1.0, 0.7), Vec2(2.0, -1.5)}) {
    Mat2 d2;
    const double h0 = h(x);
    d2(0, 0) = (h(x + Vec2(s, 0)) - 2 * h0 + h(x - Vec2(s, 0))) / (s * s);
    d2(1, 1) = (h(x + Vec2(0, s)) - 2 * h0 + h(x - Vec2(0, s))) / (s * s);
    d2(0, 1) = d2(1, 0) =
        (h(x + Vec2(s, s)) - h(x + Vec2(s, -s)) - h(x + Vec2(-s, s)) + h(x + Vec2(-s, -s))) / (4 * s * s);
    const Mat2 H = reference_potential(hex, x).hessian;
    const double predicted = 1.0 + 0.5 * (H.inverse() * d2).trace();
    CHECK(normalized_scalar_curvature(ref, x) == doctest::Approx(predicted).epsilon(1e-5));
  }
}

TEST_CASE("weights file round trip") {
  std::mt19937_64 rng(37);
  const auto b = test::basis(test::hexagon(), 4);
  const auto w = test::random_weights(b, rng, 3.0);
  std::stringstream ss;
  write_weights(ss, w);
  const auto back = read_weights(ss, b);
  REQUIRE(back.b.size() == w.b.size());
  for (std::size_t o = 0; o < w.b.size(); ++o) CHECK(back.b[o] == w.b[o]);

  std::stringstream missing("# partial\n0 0 1.0\n");
  CHECK_THROWS((void)read_weights(missing, b));
  MetricWeights bad = w;
  bad.b[0] = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad.b[0] = std::nan("");
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
