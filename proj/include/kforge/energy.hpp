#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kforge/field.hpp"

namespace kforge {

/**
 * Two potentials on a shared cloud, phi = u1 - u0. The energy functionals
 * below use the real-coordinate normalization in which a Kahler-Einstein
 * potential solves det D^2 u = e^{-u + affine}, and V = Area(Delta).
 *
 * Wedge densities for n = 2 reduce to 2x2 mixed discriminants:
 *     omega_phi^2 / omega^2 -> det H1 / det H0,
 *     omega_0 ^ omega_1     -> D(H0, H1) = tr(adj(H0) H1) / 2.
 */
struct PotentialPair {
  const MetricField& u0;
  const MetricField& u1;
  const SampleCloud& cloud;
  double volume;

  PotentialPair(const MetricField& ref, const MetricField& cmp, const SampleCloud& c, double v);

  [[nodiscard]] std::vector<double> phi() const;
};

/// I = (1/V) int phi (det H0 - det H1) dx.
[[nodiscard]] double functional_I(const PotentialPair& pair);
/// I = (1/(2V)) int grad(phi)^T adj(H0 + H1) grad(phi) dx.
[[nodiscard]] double functional_I_gradient(const PotentialPair& pair);
/// J = (1/(6V)) int grad(phi)^T (2 adj H0 + adj H1) grad(phi) dx.
[[nodiscard]] double functional_J(const PotentialPair& pair);
/// J = (1/V) int phi [(2/3) det H0 - (1/3) D(H0,H1) - (1/3) det H1] dx.
[[nodiscard]] double functional_J_mixed(const PotentialPair& pair);

struct FValues {
  double f0 = 0.0;
  double f_mu = 0.0;
};

/// F0 = -(I - J) - (1/V) int phi det H1, and
/// (discretized with the gradient forms of I and J, and V1 = sum_k w_k det H1 in the second term)
/// F_mu = F0 - mu log((1/V) int e^{h - mu phi} det H0) for mu = +-1,
/// F_0  = F0 + (1/V) int phi e^h det H0.
/// `h` is the Ricci deviation of u0 normalized by (1/V) int e^h det H0 = 1.
[[nodiscard]] FValues f_functionals(const PotentialPair& pair, int mu, std::span<const double> h);

/// E0 = (1/V) int log(det H1/det H0) det H1 - mu (I - J) + (1/V) int h (det H0 - det H1).
[[nodiscard]] double mabuchi_e0(const PotentialPair& pair, int mu, std::span<const double> h);

/// Functionals of one step relative to a reference (used by traces).
struct FunctionalValues {
  double I = 0.0;
  double J = 0.0;
  double F1 = 0.0;
  double E0 = 0.0;
};

[[nodiscard]] FunctionalValues evaluate_functionals(const MetricField& ref, const MetricField& cmp,
                                                    const SampleCloud& cloud, double volume,
                                                    std::span<const double> h_ref);

struct AuditRow {
  int step = 0;
  double I = 0.0;
  double J = 0.0;
  double I_minus_J = 0.0;
  double F1 = 0.0;
  double E0 = 0.0;
  /// Positive amount by which this step violates a monotonicity claim.
  double violation = 0.0;
};

struct AuditReport {
  std::vector<AuditRow> rows;
  bool pass = true;
  double worst_violation = 0.0;
  int worst_step = -1;
  double slack = 1e-4;
};

struct IterationTrace;

/**
 * Recomputes E0, F1 and I-J for every snapshot against step 0 and checks
 *   E0 nonincreasing from step 1 on, and F1 <= 0 past step 1,
 * each within `slack`.
 */
[[nodiscard]] AuditReport monotonicity_audit(const IterationTrace& trace, const SampleCloud& cloud, double area,
                                             double slack = 1e-4, int threads = 0);

/// One row per step plus a summary line.
void write_audit_csv(std::ostream& out, const AuditReport& report);

}  // namespace kforge
