#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "kforge/iteration.hpp"
#include "kforge/quadrature.hpp"
#include "support.hpp"

using namespace kforge;

namespace {

const SampleCloud& small_cloud(const FanoPolygon& p) {
  // One cache per polygon area is enough here: the three test polygons differ in area.
  static std::map<double, SampleCloud> cache;
  auto it = cache.find(p.area());
  if (it == cache.end()) it = cache.emplace(p.area(), build_grid(p, 0.25, 14.0)).first;
  return it->second;
}

IterationConfig quiet(Scheme s, int r, int iters) {
  IterationConfig c;
  c.scheme = s;
  c.rank = r;
  c.max_iterations = iters;
  c.timing = false;
  return c;
}

double max_rel(const MetricWeights& a, const MetricWeights& b) { return weight_residual(a, b); }

// Direct evaluation of b'_m = int e^{<m,x>} rho^{-(1 + 1/r)} dx without any shifting.
MetricWeights naive_canonical(const MetricWeights& w, const SampleCloud& cloud) {
  const auto& b = *w.basis;
  const auto full = w.expanded();
  std::vector<double> rho(cloud.size(), 0.0);
  for (std::size_t k = 0; k < cloud.size(); ++k)
    for (std::size_t i = 0; i < b.size(); ++i) rho[k] += std::exp(b.points[i].to_real().dot(cloud.points[k])) / full[i];
  MetricWeights out = w;
  for (std::size_t o = 0; o < b.orbit_count(); ++o) {
    const Vec2 m = b.representative(o).to_real();
    long double s = 0;
    for (std::size_t k = 0; k < cloud.size(); ++k)
      s += cloud.weights[k] * std::exp(m.dot(cloud.points[k])) * std::pow(rho[k], -(1.0 + 1.0 / b.rank));
    out.b[o] = static_cast<double>(s);
  }
  return normalize(out);
}

}  // namespace

TEST_CASE("scheme names round trip") {
  for (auto s : {Scheme::balanced, Scheme::canonical, Scheme::ricci_outer, Scheme::refined_balanced,
                 Scheme::refined_canonical})
    CHECK(parse_scheme(to_string(s)) == s);
  CHECK_THROWS_AS((void)parse_scheme("donaldson"), std::invalid_argument);
  CHECK(parse_init(to_string(InitMode::reference_l2)) == InitMode::reference_l2);
  CHECK_THROWS_AS((void)parse_init("random"), std::invalid_argument);
}

TEST_CASE("config validation") {
  IterationConfig c;
  CHECK_NOTHROW(c.validate());
  c.rank = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = IterationConfig{};
  c.inner_iterations = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = IterationConfig{};
  c.tolerance = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = IterationConfig{};
  c.scheme = Scheme::refined_canonical;
  c.rank = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("normalize") {
  const auto b = test::basis(test::hexagon(), 3);
  MetricWeights w = MetricWeights::uniform(b);
  for (auto& v : w.b) v = 7.5;
  for (double v : normalize(w).b) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));

  std::mt19937_64 rng(53);
  const auto r = test::random_weights(b, rng, 2.0);
  const auto n1 = normalize(r);
  const auto n2 = normalize(n1);
  for (std::size_t o = 0; o < n1.b.size(); ++o) CHECK(n2.b[o] == doctest::Approx(n1.b[o]).epsilon(1e-14));
  double log_sum = 0;
  for (std::size_t i = 0; i < b->size(); ++i) log_sum += std::log(n1.b[b->orbit_of[i]]);
  CHECK(std::abs(log_sum) < 1e-11);
  // Curvature depends on the Hessian only.
  for (const Vec2& x : {Vec2(0.3, -0.2), Vec2(2.0, 1.0)})
    CHECK(normalized_scalar_curvature(n1, x) == doctest::Approx(normalized_scalar_curvature(r, x)).epsilon(1e-12));
}

TEST_CASE("canonical step matches a direct evaluation") {
  const auto hex = test::hexagon();
  const auto cloud = build_grid(hex, 0.25, 10.0);
  std::mt19937_64 rng(59);
  for (int r : {1, 2}) {
    const auto w = test::random_weights(test::basis(hex, r), rng);
    CHECK(max_rel(t_canonical_step(w, cloud), naive_canonical(w, cloud)) < 1e-10);
  }
}

TEST_CASE("orbit-mates integrate to the same value") {
  for (const auto& p : {test::hexagon(), test::p2(), test::blowup1()}) {
    const auto& cloud = small_cloud(p);
    std::mt19937_64 rng(61);
    const auto w = test::random_weights(test::basis(p, 3), rng);
    FieldOptions o;
    o.curvature = false;
    const auto field = evaluate_metric_field(w, cloud, o);
    const auto ints = section_integrals(w, cloud, field.det_h);
    const auto& b = *w.basis;
    for (const auto& orbit : b.orbits)
      for (auto i : orbit) CHECK(ints[i] == doctest::Approx(ints[orbit[0]]).epsilon(1e-12));
    // And the steps go through the orbit check.
    CHECK_NOTHROW((void)t_nu_step(w, cloud, field.det_h, p.area()));
    CHECK_NOTHROW((void)t_canonical_step(w, cloud));
  }
}

TEST_CASE("density errors") {
  const auto& cloud = small_cloud(test::hexagon());
  const auto w = MetricWeights::uniform(test::basis(test::hexagon(), 2));
  std::vector<double> nu(cloud.size(), 0.0);
  CHECK_THROWS_AS((void)t_nu_step(w, cloud, nu, 3.0), std::domain_error);
  nu.assign(cloud.size(), 1.0);
  nu[0] = -1.0;
  CHECK_THROWS_AS((void)t_nu_step(w, cloud, nu, 3.0), std::domain_error);
  nu[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS((void)t_nu_step(w, cloud, nu, 3.0), std::domain_error);
  std::vector<double> short_target(5, 1.0);
  CHECK_THROWS_AS((void)t_canonical_step(w, cloud, short_target), std::invalid_argument);
}

TEST_CASE("converged weights are fixed points") {
  const auto hex = test::hexagon();
  const auto& cloud = small_cloud(hex);
  for (Scheme s : {Scheme::canonical, Scheme::balanced}) {
    auto cfg = quiet(s, 2, 300);
    cfg.tolerance = 1e-11;
    cfg.record_functionals = false;
    const auto trace = run_iteration(cfg, hex, cloud);
    REQUIRE(trace.converged);
    CHECK(trace.last().residual < cfg.tolerance);
    const auto& w = trace.last().weights;
    MetricWeights again;
    if (s == Scheme::canonical) {
      again = t_canonical_step(w, cloud);
    } else {
      const auto field = evaluate_metric_field(w, cloud);
      again = t_nu_step(w, cloud, field.det_h, hex.area());
    }
    CHECK(max_rel(again, w) < 1e-8);
  }
}

TEST_CASE("ricci_outer with one inner step follows the canonical trajectory") {
  const auto hex = test::hexagon();
  const auto& cloud = small_cloud(hex);
  auto a = quiet(Scheme::canonical, 3, 3);
  auto b = quiet(Scheme::ricci_outer, 3, 3);
  a.tolerance = b.tolerance = 0.0;
  b.inner_iterations = 1;
  const auto ta = run_iteration(a, hex, cloud);
  const auto tb = run_iteration(b, hex, cloud);
  REQUIRE(ta.steps.size() == tb.steps.size());
  double worst = 0;
  for (std::size_t k = 0; k < ta.steps.size(); ++k) worst = std::max(worst, max_rel(tb.steps[k].weights, ta.steps[k].weights));
  MESSAGE("max relative deviation of the trajectories: " << worst);
  CHECK(worst < 1e-12);
}

TEST_CASE("ricci_outer: stationary input and E0 monotonicity") {
  const auto hex = test::hexagon();
  const auto& cloud = small_cloud(hex);
  auto cfg = quiet(Scheme::ricci_outer, 3, 8);
  cfg.tolerance = 0.0;
  const auto trace = run_iteration(cfg, hex, cloud);
  CHECK(trace.warnings.empty());
  for (std::size_t k = 2; k < trace.steps.size(); ++k)
    CHECK(trace.steps[k].functionals.E0 <= trace.steps[k - 1].functionals.E0 + 1e-4);

  auto conv = quiet(Scheme::canonical, 3, 400);
  conv.tolerance = 1e-11;
  conv.record_functionals = false;
  const auto fixed = run_iteration(conv, hex, cloud);
  REQUIRE(fixed.converged);
  auto again = quiet(Scheme::ricci_outer, 3, 3);
  again.tolerance = 0.0;
  again.record_functionals = false;
  const auto t = run_iteration_from(fixed.last().weights, again, hex, cloud);
  for (std::size_t k = 1; k < t.steps.size(); ++k) CHECK(t.steps[k].residual < 1e-8);
}

TEST_CASE("refined target") {
  const auto hex = test::hexagon();
  const auto& cloud = small_cloud(hex);
  std::mt19937_64 rng(67);
  const auto w = test::random_weights(test::basis(hex, 3), rng, 0.5);
  MetricField field = evaluate_metric_field(w, cloud);
  const std::size_t n4 = enumerate_sections(hex, 4).size();

  auto mass = [&](const std::vector<double>& tau) {
    std::vector<double> m(tau.size());
    for (std::size_t k = 0; k < tau.size(); ++k) m[k] = tau[k] * field.det_h[k];
    return cloud_sum(m, cloud) / hex.area();
  };
  const auto tau = refined_target(field, 3, n4, cloud, hex.area(), hex.area());
  CHECK(mass(tau) == doctest::Approx(static_cast<double>(n4)).epsilon(1e-12));

  MetricField ke = field;
  std::fill(ke.sigma.begin(), ke.sigma.end(), 1.0);
  const auto flat = refined_target(ke, 3, n4, cloud, hex.area(), hex.area());
  for (double t : flat) CHECK(t == doctest::Approx(flat[0]).epsilon(1e-14));
  CHECK(flat[0] == doctest::Approx(n4 * hex.area() / field_volume(field, cloud)).epsilon(1e-12));

  // A constant target changes nothing after normalization.
  auto cfg = quiet(Scheme::canonical, 4, 4);
  cfg.tolerance = 0.0;
  cfg.record_functionals = false;
  const auto w4 = MetricWeights::uniform(test::basis(hex, 4));
  const auto plain = run_iteration_from(w4, cfg, hex, cloud);
  const auto targeted = run_iteration_from(w4, cfg, hex, cloud, {}, flat);
  CHECK(max_rel(targeted.last().weights, plain.last().weights) < 1e-12);

  ke.sigma[10] = 11.0;
  CHECK_THROWS_AS((void)refined_target(ke, 3, n4, cloud, hex.area(), hex.area()), std::domain_error);
  ke.sigma[10] = -10.5;
  CHECK_THROWS_AS((void)refined_target(ke, 3, n4, cloud, hex.area(), hex.area()), std::domain_error);
}

TEST_CASE("initial weights") {
  const auto hex = test::hexagon();
  const auto& cloud = small_cloud(hex);
  const auto b = test::basis(hex, 4);
  const auto u = initial_weights(hex, b, InitMode::uniform, cloud);
  for (double v : u.b) CHECK(v == 1.0);
  const auto l2 = initial_weights(hex, b, InitMode::reference_l2, cloud);
  for (double v : l2.b) CHECK(v > 0.0);
}

TEST_CASE("tolerance zero runs the whole budget; budget zero records the start") {
  const auto hex = test::hexagon();
  const auto& cloud = small_cloud(hex);
  auto cfg = quiet(Scheme::canonical, 2, 7);
  cfg.tolerance = 0.0;
  const auto t = run_iteration(cfg, hex, cloud);
  CHECK(t.steps.size() == 8);
  CHECK_FALSE(t.converged);
  CHECK(t.budget_exhausted);
  cfg.max_iterations = 0;
  CHECK(run_iteration(cfg, hex, cloud).steps.size() == 1);
}

TEST_CASE("traces are bit-identical across runs and thread counts") {
  const auto hex = test::hexagon();
  const auto& cloud = small_cloud(hex);
  for (Scheme s : {Scheme::balanced, Scheme::refined_canonical}) {
    auto a = quiet(s, 3, 4);
    auto b = a;
    a.threads = 1;
    b.threads = 6;
    std::ostringstream ca, cb, cc;
    write_trace_csv(ca, run_iteration(a, hex, cloud));
    write_trace_csv(cb, run_iteration(b, hex, cloud));
    write_trace_csv(cc, run_iteration(b, hex, cloud));
    CHECK(ca.str() == cb.str());
    CHECK(cb.str() == cc.str());
    CHECK(ca.str().rfind(kTraceHeader, 0) == 0);
  }
}

TEST_CASE("per-step invariants on the default cloud") {
  const auto hex = test::hexagon();
  const auto cloud = build_grid(hex, kDefaultResolution, kDefaultRadius);
  auto cfg = quiet(Scheme::canonical, 4, 15);
  cfg.tolerance = 0.0;
  int seen = 0;
  const auto trace = run_iteration(cfg, hex, cloud, [&](const IterationStep&) { ++seen; });
  CHECK(seen == static_cast<int>(trace.steps.size()));
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const auto& s = trace.steps[k];
    for (double v : s.weights.b) CHECK(v > 0.0);
    CHECK(std::abs(s.volume - 3.0) / 3.0 < 5e-3);
    CHECK(s.sigma.volume_avg == doctest::Approx(1.0).epsilon(1e-2));
    if (k > 0) CHECK(s.residual == weight_residual(s.weights, trace.steps[k - 1].weights));
  }
  // Stored statistics are reproducible from the snapshot.
  const auto field = evaluate_metric_field(trace.last().weights, cloud);
  const auto st = sigma_statistics(field, cloud, cfg.stats_window);
  CHECK(st.avg == trace.last().sigma.avg);
  CHECK(st.min == trace.last().sigma.min);
  CHECK(st.max == trace.last().sigma.max);
  CHECK(trace.last().sigma.avg > trace.steps[1].sigma.avg);
}
