#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "kforge/toric.hpp"

namespace kforge {

inline constexpr double kDefaultResolution = 0.125;
inline constexpr double kDefaultRadius = 20.0;
inline constexpr double kDefaultCertificateTolerance = 2e-3;

/// Raised when the adequacy certificate of a cloud fails.
class CloudError : public std::runtime_error {
 public:
  CloudError(const std::string& what, double defect) : std::runtime_error(what), defect_(defect) {}
  [[nodiscard]] double defect() const { return defect_; }

 private:
  double defect_;
};

/**
 * Lattice cloud h*Z^2 cut out by the polygon's support function,
 *     { x : max_p <p, x> <= R },
 * with uniform cell weights h^2. The cut is invariant under the dual
 * symmetry action, so the cloud is exactly symmetric.
 */
struct SampleCloud {
  std::vector<Vec2> points;
  /// Integer lattice coordinates: points[k] = resolution * index[k].
  std::vector<std::array<int, 2>> index;
  std::vector<double> weights;
  /// max_p <p, x_k>, used for radial windows.
  std::vector<double> level;
  double resolution = 0.0;
  double radius = 0.0;
  /// |sum_k w_k det D^2 w0(x_k) - Area| / Area.
  double certificate_defect = 0.0;

  [[nodiscard]] std::size_t size() const { return points.size(); }
};

/// Builds the cloud and its certificate; throws CloudError when the defect
/// exceeds `tolerance` (pass infinity to skip the check).
[[nodiscard]] SampleCloud build_grid(const FanoPolygon& polygon, double resolution, double radius,
                                     double tolerance = kDefaultCertificateTolerance);

/// Certificate defect without throwing.
[[nodiscard]] double certificate_defect(const FanoPolygon& polygon, const SampleCloud& cloud);

struct Integral {
  double value = 0.0;
  /// Richardson-style estimate from the even-index subgrid, a rounding floor,
  /// and the truncated tail extrapolated from the two outermost level bands.
  double error = 0.0;
};

/// sum_k w_k f_k density_k.
[[nodiscard]] Integral integrate(std::span<const double> f, const SampleCloud& cloud, std::span<const double> density);
[[nodiscard]] Integral integrate(std::span<const double> f, const SampleCloud& cloud);

/// Plain weighted sum without the error estimate (fixed reduction order).
[[nodiscard]] double cloud_sum(std::span<const double> f, const SampleCloud& cloud);

}  // namespace kforge
