#include "kforge/energy.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "kforge/iteration.hpp"

namespace kforge {

namespace {

Mat2 adj(const Mat2& h) {
  Mat2 a;
  a << h(1, 1), -h(0, 1), -h(1, 0), h(0, 0);
  return a;
}

double mixed_discriminant(const Mat2& a, const Mat2& b) { return 0.5 * (adj(a) * b).trace(); }

// (1/V) sum_k w_k f_k
double mean_integral(const std::vector<double>& f, const PotentialPair& pair) {
  return cloud_sum(f, pair.cloud) / pair.volume;
}

// I - J from the two gradient forms: blind to constants added to phi, which
// the phi-weighted forms are only up to the cloud's volume defect.
double shift_free_i_minus_j(const PotentialPair& pair) {
  return functional_I_gradient(pair) - functional_J(pair);
}

}  // namespace

PotentialPair::PotentialPair(const MetricField& ref, const MetricField& cmp, const SampleCloud& c, double v)
    : u0(ref), u1(cmp), cloud(c), volume(v) {
  if (ref.size() != c.size() || cmp.size() != c.size()) throw std::invalid_argument("potentials do not match the cloud");
  if (!(v > 0.0)) throw std::invalid_argument("volume must be positive");
}

std::vector<double> PotentialPair::phi() const {
  std::vector<double> out(cloud.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = u1.u[k] - u0.u[k];
  return out;
}

double functional_I(const PotentialPair& pair) {
  const auto phi = pair.phi();
  std::vector<double> f(phi.size());
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = phi[k] * (pair.u0.det_h[k] - pair.u1.det_h[k]);
  return mean_integral(f, pair);
}

double functional_I_gradient(const PotentialPair& pair) {
  std::vector<double> f(pair.cloud.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const Vec2 g = pair.u1.grad[k] - pair.u0.grad[k];
    f[k] = 0.5 * g.dot(adj(pair.u0.hess[k] + pair.u1.hess[k]) * g);
  }
  return mean_integral(f, pair);
}

double functional_J(const PotentialPair& pair) {
  std::vector<double> f(pair.cloud.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const Vec2 g = pair.u1.grad[k] - pair.u0.grad[k];
    f[k] = g.dot((2.0 * adj(pair.u0.hess[k]) + adj(pair.u1.hess[k])) * g) / 6.0;
  }
  return mean_integral(f, pair);
}

double functional_J_mixed(const PotentialPair& pair) {
  const auto phi = pair.phi();
  std::vector<double> f(phi.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double d01 = mixed_discriminant(pair.u0.hess[k], pair.u1.hess[k]);
    f[k] = phi[k] * ((2.0 / 3.0) * pair.u0.det_h[k] - d01 / 3.0 - pair.u1.det_h[k] / 3.0);
  }
  return mean_integral(f, pair);
}

FValues f_functionals(const PotentialPair& pair, int mu, std::span<const double> h) {
  if (mu < -1 || mu > 1) throw std::invalid_argument("mu must be -1, 0 or 1");
  if (h.size() != pair.cloud.size()) throw std::invalid_argument("Ricci deviation does not match the cloud");
  const auto phi = pair.phi();
  const std::size_t n = phi.size();

  FValues out;
  std::vector<double> f(n);
  // Average of phi against omega_phi^n over its own discrete volume, so that
  // phi = c gives F0 = -c exactly and F1 stays shift invariant.
  for (std::size_t k = 0; k < n; ++k) f[k] = phi[k] * pair.u1.det_h[k];
  const double vol1 = cloud_sum(pair.u1.det_h, pair.cloud);
  out.f0 = -shift_free_i_minus_j(pair) - cloud_sum(f, pair.cloud) / vol1;

  if (mu == 0) {
    for (std::size_t k = 0; k < n; ++k) f[k] = phi[k] * std::exp(h[k]) * pair.u0.det_h[k];
    out.f_mu = out.f0 + mean_integral(f, pair);
  } else {
    for (std::size_t k = 0; k < n; ++k) {
      f[k] = std::exp(h[k] - mu * phi[k]) * pair.u0.det_h[k];
      if (!std::isfinite(f[k])) throw std::domain_error("non-finite exponential integrand in F_mu");
    }
    out.f_mu = out.f0 - mu * std::log(mean_integral(f, pair));
  }
  return out;
}

double mabuchi_e0(const PotentialPair& pair, int mu, std::span<const double> h) {
  if (h.size() != pair.cloud.size()) throw std::invalid_argument("Ricci deviation does not match the cloud");
  const std::size_t n = pair.cloud.size();
  std::vector<double> entropy(n), twist(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double d0 = pair.u0.det_h[k];
    const double d1 = pair.u1.det_h[k];
    entropy[k] = (std::log(d1) - std::log(d0)) * d1;
    twist[k] = h[k] * (d0 - d1);
  }
  return mean_integral(entropy, pair) - mu * shift_free_i_minus_j(pair) + mean_integral(twist, pair);
}

FunctionalValues evaluate_functionals(const MetricField& ref, const MetricField& cmp, const SampleCloud& cloud,
                                      double volume, std::span<const double> h_ref) {
  const PotentialPair pair(ref, cmp, cloud, volume);
  FunctionalValues v;
  v.I = functional_I(pair);
  v.J = functional_J(pair);
  v.F1 = f_functionals(pair, 1, h_ref).f_mu;
  v.E0 = mabuchi_e0(pair, 1, h_ref);
  return v;
}

AuditReport monotonicity_audit(const IterationTrace& trace, const SampleCloud& cloud, double area, double slack,
                               int threads) {
  if (trace.steps.empty()) throw std::invalid_argument("audit needs at least one trace step");
  for (const auto& s : trace.steps) {
    if (!s.weights.basis) throw std::invalid_argument("trace step " + std::to_string(s.step) + " has no snapshot");
  }
  AuditReport report;
  report.slack = slack;
  FieldOptions opts;
  opts.curvature = false;
  opts.threads = threads;
  const MetricField ref = evaluate_metric_field(trace.steps.front().weights, cloud, opts);
  const auto h = ricci_deviation_of(ref, cloud, area);

  double prev_e0 = 0.0;
  for (std::size_t l = 0; l < trace.steps.size(); ++l) {
    const MetricField cur = l == 0 ? ref : evaluate_metric_field(trace.steps[l].weights, cloud, opts);
    const FunctionalValues v = evaluate_functionals(ref, cur, cloud, area, h);
    AuditRow row;
    row.step = trace.steps[l].step;
    row.I = v.I;
    row.J = v.J;
    row.I_minus_J = v.I - v.J;
    row.F1 = v.F1;
    row.E0 = v.E0;
    double violation = 0.0;
    if (l >= 1) violation = std::max(violation, v.E0 - prev_e0);
    if (l >= 2) violation = std::max(violation, v.F1);
    row.violation = violation;
    if (violation > slack) {
      report.pass = false;
    }
    if (violation > report.worst_violation) {
      report.worst_violation = violation;
      report.worst_step = row.step;
    }
    prev_e0 = v.E0;
    report.rows.push_back(row);
  }
  return report;
}

void write_audit_csv(std::ostream& out, const AuditReport& report) {
  out << "step,I,J,I_minus_J,F1,E0,violation\n";
  out.precision(12);
  for (const auto& r : report.rows) {
    out << r.step << ',' << r.I << ',' << r.J << ',' << r.I_minus_J << ',' << r.F1 << ',' << r.E0 << ','
        << r.violation << '\n';
  }
  out << "# summary," << (report.pass ? "pass" : "fail") << ",worst_violation=" << report.worst_violation
      << ",worst_step=" << report.worst_step << ",slack=" << report.slack << '\n';
}

}  // namespace kforge
