#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kforge/bergman.hpp"

namespace kforge {

using Rgb = std::array<std::uint8_t, 3>;

/// Blue below 1, white at 1, red above; sigma is clamped to [lo, hi].
[[nodiscard]] Rgb diverging_color(double sigma, double lo = 0.5, double hi = 1.5);

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, Rgb fill);
  void set(int x, int y, Rgb c);
  [[nodiscard]] Rgb at(int x, int y) const;
};

/// Binary PPM (P6).
void write_ppm(std::ostream& out, const Image& image);
void write_ppm_file(const std::string& path, const Image& image);

/// Solves grad u(x) = y by damped Newton on u(x) - <y, x>. Empty when y is
/// not reached within the iteration budget.
[[nodiscard]] std::optional<Vec2> inverse_moment_map(const MetricWeights& weights, const Vec2& y, const Vec2& start,
                                                     double tolerance = 1e-10, int max_iterations = 200);

struct HeatmapOptions {
  int size = 512;
  /// Pixels whose preimage has support value above this are left blank
  /// (the picture covers the moment image of the sample region).
  double radius = 20.0;
  double lo = 0.5;
  double hi = 1.5;
  double condition_bound = kDefaultConditionBound;
  int threads = 0;
};

struct HeatmapStats {
  std::size_t drawn = 0;
  std::size_t blank = 0;
  /// Inside Delta but not drawn (Newton failure or ill-conditioned).
  std::size_t flagged = 0;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
};

inline constexpr Rgb kBackground{255, 255, 255};
inline constexpr Rgb kFlagged{128, 128, 128};
inline constexpr Rgb kOutline{0, 0, 0};

/// sigma over Delta via the inverse moment map; Delta's outline is drawn in
/// black. Rows are independent, so the image does not depend on the thread count.
[[nodiscard]] Image sigma_heatmap(const MetricWeights& weights, const FanoPolygon& polygon,
                                  const HeatmapOptions& options = {}, HeatmapStats* stats = nullptr);

}  // namespace kforge
