#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kforge/bergman.hpp"
#include "kforge/config.hpp"
#include "kforge/field.hpp"
#include "kforge/iteration.hpp"
#include "kforge/quadrature.hpp"
#include "kforge/real_ma.hpp"
#include "kforge/toric.hpp"

namespace py = pybind11;
using namespace kforge;

namespace {

using Pair = std::pair<int, int>;

std::vector<Pair> to_pairs(const std::vector<LatticePoint>& pts) {
  std::vector<Pair> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.emplace_back(p.x, p.y);
  return out;
}

py::dict step_dict(const IterationStep& s) {
  py::dict d;
  d["step"] = s.step;
  d["residual"] = s.residual;
  d["sigma_avg"] = s.sigma.avg;
  d["sigma_min"] = s.sigma.min;
  d["sigma_max"] = s.sigma.max;
  d["volume"] = s.volume;
  d["I"] = s.functionals.I;
  d["J"] = s.functionals.J;
  d["F1"] = s.functionals.F1;
  d["E0"] = s.functionals.E0;
  return d;
}

}  // namespace

PYBIND11_MODULE(_kforge, m) {
  m.doc() = "Balanced metrics and Monge-Ampere iterations on toric del Pezzo surfaces";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<GeometryError>(m, "GeometryError", PyExc_ValueError);
  py::register_exception<CloudError>(m, "CloudError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<FanoPolygon>(m, "Polygon")
      .def_static(
          "from_rays",
          [](const std::vector<Pair>& rays) {
            std::vector<LatticePoint> pts;
            for (const auto& [x, y] : rays) pts.push_back({x, y});
            return FanoPolygon::from_rays(std::move(pts));
          },
          py::arg("rays"))
      .def_static("read", &read_polygon_file, py::arg("path"))
      .def_property_readonly("rays", [](const FanoPolygon& p) { return to_pairs(p.rays()); })
      .def_property_readonly("dual_vertices", [](const FanoPolygon& p) { return to_pairs(p.dual_vertices()); })
      .def_property_readonly("area", &FanoPolygon::area)
      .def_property_readonly("barycenter", &FanoPolygon::barycenter)
      .def_property_readonly("symmetry_order", [](const FanoPolygon& p) { return p.symmetry_group().size(); })
      .def("support", &FanoPolygon::support, py::arg("x"))
      .def("__repr__", [](const FanoPolygon& p) {
        return "<Polygon with " + std::to_string(p.rays().size()) + " rays, area " + std::to_string(p.area()) + ">";
      });

  m.def(
      "sections",
      [](const FanoPolygon& p, int r) { return to_pairs(enumerate_sections(p, r).points); }, py::arg("polygon"),
      py::arg("r"), "Lattice points of r * Delta, sorted.");

  py::class_<SampleCloud>(m, "Cloud")
      .def_property_readonly("size", &SampleCloud::size)
      .def_property_readonly("resolution", [](const SampleCloud& c) { return c.resolution; })
      .def_property_readonly("radius", [](const SampleCloud& c) { return c.radius; })
      .def_property_readonly("certificate_defect", [](const SampleCloud& c) { return c.certificate_defect; })
      .def_property_readonly("points", [](const SampleCloud& c) {
        py::array_t<double> a({static_cast<py::ssize_t>(c.size()), py::ssize_t{2}});
        auto v = a.mutable_unchecked<2>();
        for (std::size_t k = 0; k < c.size(); ++k) {
          v(k, 0) = c.points[k].x();
          v(k, 1) = c.points[k].y();
        }
        return a;
      });
  m.def("build_grid", &build_grid, py::arg("polygon"), py::arg("resolution") = kDefaultResolution,
        py::arg("radius") = kDefaultRadius, py::arg("tolerance") = kDefaultCertificateTolerance);

  py::class_<MetricWeights>(m, "Weights")
      .def_static(
          "uniform",
          [](const FanoPolygon& p, int r) {
            return MetricWeights::uniform(std::make_shared<const SectionBasis>(enumerate_sections(p, r)));
          },
          py::arg("polygon"), py::arg("r"))
      .def_property_readonly("rank", &MetricWeights::rank)
      .def_property(
          "orbit_values", [](const MetricWeights& w) { return w.b; },
          [](MetricWeights& w, const std::vector<double>& b) {
            if (b.size() != w.b.size()) throw py::value_error("expected one value per orbit");
            MetricWeights t = w;
            t.b = b;
            t.validate();
            w.b = b;
          })
      .def_property_readonly("values", &MetricWeights::expanded)
      .def_property_readonly("sections", [](const MetricWeights& w) { return to_pairs(w.basis->points); })
      .def_property_readonly("orbit_representatives", [](const MetricWeights& w) {
        std::vector<Pair> out;
        for (std::size_t o = 0; o < w.basis->orbit_count(); ++o) {
          const auto m = w.basis->representative(o);
          out.emplace_back(m.x, m.y);
        }
        return out;
      });

  m.def(
      "potential",
      [](const MetricWeights& w, const Vec2& x) {
        const auto j = kaehler_data(w, x);
        return py::make_tuple(j.value, j.gradient, j.hessian);
      },
      py::arg("weights"), py::arg("x"), "(u, grad u, Hessian u) at x.");
  m.def("scalar_curvature", &normalized_scalar_curvature, py::arg("weights"), py::arg("x"));

  m.def(
      "run_iteration",
      [](const FanoPolygon& p, const SampleCloud& cloud, const std::string& scheme, int r, int iterations,
         double tolerance, int threads) {
        IterationConfig c;
        c.scheme = parse_scheme(scheme);
        c.rank = r;
        c.max_iterations = iterations;
        c.tolerance = tolerance;
        c.threads = threads;
        c.timing = false;
        IterationTrace t;
        {
          py::gil_scoped_release release;
          t = run_iteration(c, p, cloud);
        }
        py::list steps;
        for (const auto& s : t.steps) steps.append(step_dict(s));
        py::dict d;
        d["steps"] = steps;
        d["converged"] = t.converged;
        d["weights"] = t.last().weights;
        d["warnings"] = t.warnings;
        return d;
      },
      py::arg("polygon"), py::arg("cloud"), py::arg("scheme") = "canonical", py::arg("r") = 4,
      py::arg("iterations") = 15, py::arg("tolerance") = 1e-8, py::arg("threads") = 0);

  m.def(
      "soliton",
      [](const FanoPolygon& p) {
        const auto s = soliton_coefficients(p);
        return py::make_tuple(s.c, s.c_x);
      },
      py::arg("polygon"), "(c, int_Delta e^<c,y> dy)");

  m.def(
      "real_ma",
      [](const FanoPolygon& p, double eps, int steps, double radius, double spacing) {
        RealIterationConfig c;
        c.eps = eps;
        c.steps = steps;
        c.grid.radius = radius;
        c.grid.spacing = spacing;
        RealIterationResult r;
        {
          py::gil_scoped_release release;
          r = ricci_iteration_real(p, c);
        }
        const auto& w = r.final_potential;
        const int n = w.grid.nodes_per_side();
        py::array_t<double> pot({n, n});
        auto v = pot.mutable_unchecked<2>();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) v(i, j) = w.value(w.grid.index(i, j));
        std::vector<double> inc;
        for (const auto& s : r.steps) inc.push_back(s.increment);
        const auto st = grid_sigma_stats(w, c.interior_fraction);
        py::dict d;
        d["increments"] = inc;
        d["potential"] = pot;
        d["sigma_min"] = st.min;
        d["sigma_max"] = st.max;
        d["sigma_avg"] = st.avg;
        d["c0"] = r.c0;
        d["soliton"] = r.soliton;
        return d;
      },
      py::arg("polygon"), py::arg("eps") = 0.0, py::arg("steps") = 30, py::arg("radius") = 14.0,
      py::arg("spacing") = 0.05);
}
