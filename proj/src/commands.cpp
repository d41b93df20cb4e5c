#include "kforge/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "kforge/heatmap.hpp"
#include "kforge/quadrature.hpp"

namespace kforge {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

FanoPolygon load_polygon(const RunConfig& config) {
  if (config.polygon.empty()) throw ConfigError("polygon: no polygon file given", 0);
  return read_polygon_file(config.polygon);
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

fs::path prepare_out(const RunConfig& config) {
  const fs::path dir(config.out);
  fs::create_directories(dir);
  return dir;
}

IterationConfig iteration_config(const RunConfig& c) {
  IterationConfig ic;
  ic.scheme = c.scheme;
  ic.rank = c.rank;
  ic.max_iterations = c.iterations.value_or(15);
  ic.tolerance = c.tolerance.value_or(1e-8);
  ic.init = c.init;
  ic.stats_window = c.stats_window;
  ic.refinement_gain = c.refinement_gain;
  ic.inner_iterations = c.inner_iterations;
  ic.timing = c.timing;
  ic.threads = c.threads;
  ic.validate();
  return ic;
}

SampleCloud cloud_for(const RunConfig& c, const FanoPolygon& polygon) {
  return build_grid(polygon, c.grid_resolution.value_or(kDefaultResolution), c.grid_radius.value_or(kDefaultRadius));
}

std::string pt(const LatticePoint& p) { return "(" + std::to_string(p.x) + "," + std::to_string(p.y) + ")"; }

// CSV cells must not contain the separator.
std::string csv_safe(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

HeatmapStats render(const MetricWeights& w, const FanoPolygon& polygon, const RunConfig& c, double radius,
                    const fs::path& path) {
  HeatmapOptions ho;
  ho.size = c.heatmap_size;
  ho.radius = radius;
  ho.threads = c.threads;
  HeatmapStats st;
  const Image img = sigma_heatmap(w, polygon, ho, &st);
  write_ppm_file(path.string(), img);
  return st;
}

}  // namespace

const std::vector<std::string>& table_schemes() {
  static const std::vector<std::string> names = {"balanced", "refined_balanced", "canonical", "refined_canonical"};
  return names;
}

int cmd_info(const RunConfig& config, std::ostream& out) {
  const FanoPolygon polygon = load_polygon(config);
  out << "polygon: " << config.polygon << '\n';
  out << "rays:";
  for (const auto& r : polygon.rays()) out << ' ' << pt(r);
  out << "\ndual vertices:";
  for (const auto& v : polygon.dual_vertices()) out << ' ' << pt(v);
  const Vec2 bc = polygon.barycenter();
  out << '\n' << format("area: %.10g\n", polygon.area());
  out << format("barycenter: (%.10g, %.10g)\n", bc.x(), bc.y());
  out << "symmetry order: " << polygon.symmetry_group().size() << '\n';
  const SolitonData sol = soliton_coefficients(polygon);
  out << format("soliton c: (%.12g, %.12g)  C_X = int e^<c,y> dy: %.12g%s\n", sol.c.x(), sol.c.y(), sol.c_x,
                sol.converged ? "" : "  (not converged)");
  out << "r,N_r,orbits\n";
  for (int r = 1; r <= 12; ++r) {
    const SectionBasis b = enumerate_sections(polygon, r);
    out << r << ',' << b.size() << ',' << b.orbit_count() << '\n';
  }
  return kExitOk;
}

int cmd_iterate(const RunConfig& config, std::ostream& log) {
  config.validate();
  const IterationConfig ic = iteration_config(config);
  for (int s : config.heatmap_at)
    if (s > ic.max_iterations)
      throw ConfigError("heatmap_at: step " + std::to_string(s) + " exceeds the iteration budget", 0);
  const FanoPolygon polygon = load_polygon(config);
  const SampleCloud cloud = cloud_for(config, polygon);
  const fs::path dir = prepare_out(config);
  log << format("cloud: %zu points, h = %g, R = %g, certificate defect %.2e\n", cloud.size(), cloud.resolution,
                cloud.radius, cloud.certificate_defect);

  std::ofstream trace_out = open_out(dir / "trace.csv");
  write_trace_header(trace_out);
  std::vector<int> pending = config.heatmap_at;
  std::sort(pending.begin(), pending.end());
  pending.erase(std::unique(pending.begin(), pending.end()), pending.end());

  auto heatmap = [&](const MetricWeights& w, int step, const char* note) {
    const fs::path path = dir / ("sigma_step" + std::to_string(step) + ".ppm");
    const HeatmapStats st = render(w, polygon, config, cloud.radius, path);
    log << format("heatmap %s: %zu pixels, sigma in [%.4f, %.4f], %zu flagged%s\n", path.string().c_str(), st.drawn,
                  st.sigma_min, st.sigma_max, st.flagged, note);
  };

  const IterationTrace trace = run_iteration(ic, polygon, cloud, [&](const IterationStep& s) {
    write_trace_row(trace_out, s);
    trace_out.flush();
    log << format("step %3d  residual %.3e  sigma avg %.4f min %.4f max %.4f\n", s.step, s.residual, s.sigma.avg,
                  s.sigma.min, s.sigma.max);
    if (std::binary_search(pending.begin(), pending.end(), s.step)) heatmap(s.weights, s.step, "");
  });
  if (!trace_out) throw std::runtime_error("write failed: trace.csv");

  // A converged run stops early; its later iterates equal the last one.
  const int last = trace.last().step;
  for (int s : pending)
    if (s > last) heatmap(trace.last().weights, s, " (converged earlier; final metric)");

  if (config.dump_weights) {
    const fs::path path = dir / "weights_final.txt";
    write_weights_file(path.string(), trace.last().weights);
    log << "weights: " << path.string() << '\n';
  }
  for (const auto& w : trace.warnings) log << "warning: " << w << '\n';
  log << format("%s r=%d: %zu steps, %s\n", to_string(trace.scheme).c_str(), trace.rank, trace.steps.size(),
                trace.converged ? "converged" : "budget exhausted");

  if (config.scheme == Scheme::ricci_outer) {
    const AuditReport audit = monotonicity_audit(trace, cloud, polygon.area(), 1e-4, config.threads);
    std::ofstream a = open_out(dir / "audit.csv");
    write_audit_csv(a, audit);
    if (!audit.pass) {
      log << format("energy audit failed at step %d (violation %.3e)\n", audit.worst_step, audit.worst_violation);
      return kExitFailure;
    }
  }
  return kExitOk;
}

int cmd_table(const RunConfig& config, std::ostream& log) {
  config.validate();
  const FanoPolygon polygon = load_polygon(config);
  const SampleCloud cloud = cloud_for(config, polygon);
  const fs::path dir = prepare_out(config);
  std::ofstream out = open_out(dir / "table.csv");
  out << "scheme,r,steps,sigma_avg,sigma_max,sigma_min,time_s,status\n";
  bool all_ok = true;
  for (const auto& name : table_schemes()) {
    RunConfig c = config;
    c.scheme = parse_scheme(name);
    const auto t0 = Clock::now();
    try {
      IterationConfig ic = iteration_config(c);
      ic.record_functionals = false;
      const IterationTrace trace = run_iteration(ic, polygon, cloud);
      const double secs = config.timing ? std::chrono::duration<double>(Clock::now() - t0).count() : 0.0;
      const auto& s = trace.last().sigma;
      out << format("%s,%d,%d,%.6f,%.6f,%.6f,%.2f,ok\n", name.c_str(), c.rank, trace.last().step, s.avg, s.max, s.min,
                    secs);
      log << format("%-18s avg %.4f  max %.4f  min %.4f  %.1f s\n", name.c_str(), s.avg, s.max, s.min, secs);
    } catch (const std::exception& e) {
      all_ok = false;
      out << format("%s,%d,0,nan,nan,nan,0,failed: %s\n", name.c_str(), c.rank, csv_safe(e.what()).c_str());
      log << name << " failed: " << e.what() << '\n';
    }
    out.flush();
  }
  return all_ok ? kExitOk : kExitFailure;
}

int cmd_real_ma(const RunConfig& config, std::ostream& log) {
  config.validate();
  const FanoPolygon polygon = load_polygon(config);
  RealIterationConfig rc;
  rc.eps = config.eps;
  rc.steps = config.iterations.value_or(30);
  rc.grid.radius = config.grid_radius.value_or(14.0);
  rc.grid.spacing = config.grid_resolution.value_or(0.05);
  rc.grid.validate();
  rc.boundary = config.boundary;
  rc.newton.tolerance = config.tolerance.value_or(1e-8);
  const fs::path dir = prepare_out(config);

  std::ofstream trace_out = open_out(dir / "real_trace.csv");
  trace_out << "step,increment,cst,normalization,newton_iterations,factorizations,residual,roundoff_floor,"
               "quadratic_tail,sigma_avg,sigma_min,sigma_max\n";
  const int n = rc.grid.nodes_per_side();
  log << format("grid %dx%d, R = %g, h = %g, eps = %g, boundary %s\n", n, n, rc.grid.radius, rc.grid.spacing, rc.eps,
                to_string(rc.boundary).c_str());
  double worst_norm = 0.0;
  double c0 = 0.0;
  const RealIterationResult result = ricci_iteration_real(polygon, rc, nullptr, [&](const RealStep& s) {
    trace_out << format("%d,%.10e,%.12e,%.12e,%d,%d,%.3e,%.3e,%d,%.8f,%.8f,%.8f\n", s.step, s.increment, s.cst,
                        s.normalization, s.newton.iterations, s.newton.factorizations, s.newton.residual,
                        s.newton.roundoff_floor, s.newton.quadratic_tail ? 1 : 0, s.sigma.avg, s.sigma.min,
                        s.sigma.max);
    trace_out.flush();
    log << format("step %2d  increment %.3e  newton %d (%d LU)  residual %.1e  sigma %.5f [%.5f, %.5f]\n", s.step,
                  s.increment, s.newton.iterations, s.newton.factorizations, s.newton.residual, s.sigma.avg,
                  s.sigma.min, s.sigma.max);
  });
  c0 = result.c0;
  for (const auto& s : result.steps) worst_norm = std::max(worst_norm, std::abs(s.normalization - c0) / c0);
  log << format("soliton c = (%.10g, %.10g), C0 = %.10g, worst normalization defect %.2e\n", result.soliton.x(),
                result.soliton.y(), c0, worst_norm);

  const GridPotential& w = result.final_potential;
  {
    std::ofstream pot = open_out(dir / "potential.csv");
    write_grid_csv(pot, w.grid, w.values(), "w", config.dump_stride);
    std::ofstream sig = open_out(dir / "sigma.csv");
    write_grid_csv(sig, w.grid, grid_sigma(w), "sigma", config.dump_stride);
    if (!pot || !sig) throw std::runtime_error("write failed: grid dumps");
  }
  int code = kExitOk;
  if (worst_norm > 1e-6) {
    log << "normalization check failed\n";
    code = kExitFailure;
  }

  if (config.cross_rank > 0) {
    const SampleCloud cloud = cloud_for(RunConfig{}, polygon);
    RunConfig cc = config;
    cc.scheme = Scheme::canonical;
    cc.rank = config.cross_rank;
    cc.iterations = config.cross_iterations;
    cc.tolerance = std::nullopt;
    IterationConfig ic = iteration_config(cc);
    ic.record_functionals = false;
    const IterationTrace trace = run_iteration(ic, polygon, cloud);
    const CrossValidation cv = cross_validate(w, trace.last().weights, rc.interior_fraction);
    std::ofstream cvo = open_out(dir / "cross_validation.csv");
    cvo << "r,steps,weight_residual,sup,l2,shift,count,threshold,within\n";
    cvo << format("%d,%d,%.6e,%.6e,%.6e,%.10e,%zu,%.3e,%d\n", cc.rank, trace.last().step, trace.last().residual, cv.sup,
                  cv.l2, cv.shift, cv.count, cv.threshold, cv.within ? 1 : 0);
    log << format("cross validation vs canonical r=%d (%d steps, residual %.2e): sup %.3e, L2 %.3e -> %s\n", cc.rank,
                  trace.last().step, trace.last().residual, cv.sup, cv.l2, cv.within ? "within" : "ABOVE threshold");
    if (!cv.within) code = kExitFailure;
  }
  return code;
}

}  // namespace kforge
