#pragma once

#include <memory>
#include <random>
#include <string>

#include "kforge/bergman.hpp"
#include "kforge/toric.hpp"

namespace test {

inline kforge::FanoPolygon hexagon() {
  return kforge::FanoPolygon::from_rays({{1, 0}, {1, 1}, {0, 1}, {-1, 0}, {-1, -1}, {0, -1}});
}
inline kforge::FanoPolygon p2() { return kforge::FanoPolygon::from_rays({{1, 0}, {0, 1}, {-1, -1}}); }
inline kforge::FanoPolygon blowup1() { return kforge::FanoPolygon::from_rays({{1, 0}, {0, 1}, {-1, -1}, {0, -1}}); }

inline std::string data_file(const std::string& name) { return std::string(KFORGE_DATA_DIR) + "/" + name; }

inline std::shared_ptr<const kforge::SectionBasis> basis(const kforge::FanoPolygon& p, int r) {
  return std::make_shared<const kforge::SectionBasis>(kforge::enumerate_sections(p, r));
}

/// Orbit-constant weights log-uniform in [e^-spread, e^spread].
inline kforge::MetricWeights random_weights(std::shared_ptr<const kforge::SectionBasis> b, std::mt19937_64& rng,
                                            double spread = 1.0) {
  std::uniform_real_distribution<double> d(-spread, spread);
  kforge::MetricWeights w = kforge::MetricWeights::uniform(std::move(b));
  for (auto& v : w.b) v = std::exp(d(rng));
  return w;
}

}  // namespace test
