#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "kforge/commands.hpp"
#include "kforge/config.hpp"
#include "kforge/heatmap.hpp"
#include "kforge/toric.hpp"
#include "support.hpp"

using namespace kforge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("kforge_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

RunConfig small_run(const fs::path& out) {
  RunConfig c;
  c.polygon = test::data_file("hexagon.txt");
  c.rank = 2;
  c.iterations = 3;
  c.grid_resolution = 0.25;
  c.grid_radius = 14.0;
  c.out = out.string();
  c.timing = false;
  c.heatmap_size = 48;
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  std::istringstream in(
      "# demo\n"
      "polygon = hexagon.txt\n"
      "scheme = refined_canonical   # trailing comment\n"
      "r = 6\n"
      "iters=20\n"
      "\n"
      "grid_res = 0.1\n"
      "heatmap_at = 10, 16,20\n"
      "timing = off\n"
      "boundary = dirichlet\n"
      "eps = 0.25\n");
  RunConfig c;
  parse_config(in, c, "/some/dir");
  CHECK(c.polygon == "/some/dir/hexagon.txt");
  CHECK(c.scheme == Scheme::refined_canonical);
  CHECK(c.rank == 6);
  CHECK(c.iterations == 20);
  CHECK(c.grid_resolution == 0.1);
  CHECK_FALSE(c.grid_radius.has_value());
  CHECK(c.heatmap_at == std::vector<int>{10, 16, 20});
  CHECK_FALSE(c.timing);
  CHECK(c.boundary == BoundaryMode::dirichlet);
  CHECK(c.eps == 0.25);

  std::istringstream abs("polygon = /abs/p.txt\n");
  parse_config(abs, c, "/some/dir");
  CHECK(c.polygon == "/abs/p.txt");
}

TEST_CASE("config errors carry the line number") {
  auto line_of = [](const std::string& text) {
    std::istringstream in(text);
    RunConfig c;
    try {
      parse_config(in, c);
    } catch (const ConfigError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("r = 4\nr = four\n") == 2);
  CHECK(line_of("\n\nbogus = 1\n") == 3);
  CHECK(line_of("r 4\n") == 1);
  CHECK(line_of("scheme = donaldson\n") == 1);
  CHECK(line_of("tol = 1e-8x\n") == 1);
  CHECK(line_of("timing = maybe\n") == 1);
  CHECK(line_of("r = 4\n") == -1);

  RunConfig c;
  set_config_value(c, "r", "0");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.rank = 4;
  c.eps = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS((void)parse_int_list("1,,2"), std::invalid_argument);
  CHECK_THROWS_AS((void)parse_int_list("1,2,"), std::invalid_argument);
  CHECK(parse_int_list(" 3 ") == std::vector<int>{3});
  CHECK(parse_int_list("").empty());
}

TEST_CASE("config round trip") {
  RunConfig c;
  c.polygon = "/x/y.txt";
  c.scheme = Scheme::ricci_outer;
  c.rank = 7;
  c.iterations = 11;
  c.grid_radius = 18.5;
  c.tolerance = 1e-9;
  c.heatmap_at = {1, 5};
  c.dump_weights = true;
  c.eps = 0.125;
  c.cross_rank = 6;
  std::ostringstream out;
  write_config(out, c);
  std::istringstream in(out.str());
  RunConfig back;
  parse_config(in, back);
  std::ostringstream again;
  write_config(again, back);
  CHECK(out.str() == again.str());
  CHECK(back.rank == 7);
  CHECK(back.grid_radius == 18.5);
  CHECK_FALSE(back.grid_resolution.has_value());
  // Unset optional keys are omitted; everything else is written.
  for (const auto& k : config_keys())
    if (k != "grid_res") CHECK(out.str().find(k + " =") != std::string::npos);
  CHECK(out.str().find("grid_res =") == std::string::npos);
}

TEST_CASE("diverging color map") {
  CHECK(diverging_color(1.0) == Rgb{255, 255, 255});
  CHECK(diverging_color(0.5) == Rgb{59, 76, 192});
  CHECK(diverging_color(0.1) == Rgb{59, 76, 192});
  CHECK(diverging_color(1.5) == Rgb{180, 4, 38});
  CHECK(diverging_color(9.0) == Rgb{180, 4, 38});
  CHECK(diverging_color(std::nan("")) == kFlagged);
  const auto mid = diverging_color(1.25);
  CHECK(mid[0] > 180);
  CHECK(mid[1] < 255);
}

TEST_CASE("PPM output") {
  Image img(3, 2, kBackground);
  img.set(1, 1, Rgb{1, 2, 3});
  img.set(7, 7, Rgb{9, 9, 9});  // ignored
  std::ostringstream out;
  write_ppm(out, img);
  const std::string s = out.str();
  CHECK(s.rfind("P6\n3 2\n255\n", 0) == 0);
  CHECK(s.size() == 11 + 18);
  CHECK(img.at(1, 1) == Rgb{1, 2, 3});
  CHECK(static_cast<unsigned char>(s[11 + (1 * 3 + 1) * 3]) == 1);
}

TEST_CASE("inverse moment map") {
  std::mt19937_64 rng(103);
  const auto w = test::random_weights(test::basis(test::hexagon(), 3), rng);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int k = 0; k < 100; ++k) {
    const Vec2 x(d(rng), d(rng));
    const Vec2 y = kaehler_data(w, x).gradient;
    const auto back = inverse_moment_map(w, y, Vec2::Zero());
    REQUIRE(back.has_value());
    CHECK((kaehler_data(w, *back).gradient - y).norm() < 1e-9);
    CHECK((*back - x).norm() < 1e-6);
  }
  // Outside Delta there is no preimage.
  CHECK_FALSE(inverse_moment_map(w, Vec2(2.0, 2.0), Vec2::Zero(), 1e-10, 60).has_value());
}

TEST_CASE("heatmap: uniform metric on the hexagon, thread independence") {
  const auto hex = test::hexagon();
  const auto w = MetricWeights::uniform(test::basis(hex, 2));
  HeatmapOptions o;
  o.size = 96;
  o.threads = 1;
  HeatmapStats a, b;
  const Image one = sigma_heatmap(w, hex, o, &a);
  o.threads = 5;
  const Image five = sigma_heatmap(w, hex, o, &b);
  CHECK(one.rgb == five.rgb);
  CHECK(a.drawn == b.drawn);
  CHECK(a.drawn > 3000);
  CHECK(a.flagged == 0);
  CHECK(a.sigma_min < 1.0);
  // The centre pixel is drawn; a corner lies outside Delta.
  CHECK(one.at(48, 48) != kBackground);
  CHECK(one.at(0, 0) == kBackground);
  o.size = 1;
  CHECK_THROWS_AS((void)sigma_heatmap(w, hex, o), std::invalid_argument);
}

TEST_CASE("info command") {
  RunConfig c;
  c.polygon = test::data_file("hexagon.txt");
  std::ostringstream out;
  CHECK(cmd_info(c, out) == kExitOk);
  const std::string s = out.str();
  CHECK(s.find("area: 3\n") != std::string::npos);
  CHECK(s.find("symmetry order: 12") != std::string::npos);
  CHECK(s.find("\n4,61,") != std::string::npos);
  CHECK(s.find("\n12,469,") != std::string::npos);

  c.polygon = test::data_file("p2.txt");
  std::ostringstream p2;
  CHECK(cmd_info(c, p2) == kExitOk);
  CHECK(p2.str().find("area: 4.5\n") != std::string::npos);

  TempDir tmp;
  const fs::path bad = tmp.path / "bad.txt";
  std::ofstream(bad) << "1 0\n0 x\n-1 -1\n";
  c.polygon = bad.string();
  try {
    std::ostringstream sink;
    (void)cmd_info(c, sink);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("iterate: budget zero writes only the initial row") {
  TempDir tmp;
  RunConfig c = small_run(tmp.path);
  c.iterations = 0;
  std::ostringstream log;
  CHECK(cmd_iterate(c, log) == kExitOk);
  const std::string trace = slurp(tmp.path / "trace.csv");
  CHECK(count_lines(trace) == 2);
  CHECK(trace.rfind(kTraceHeader, 0) == 0);
}

TEST_CASE("iterate: artifacts and byte-identical reruns") {
  TempDir a, b;
  RunConfig c = small_run(a.path);
  c.heatmap_at = {1, 3};
  c.dump_weights = true;
  std::ostringstream log;
  REQUIRE(cmd_iterate(c, log) == kExitOk);
  CHECK(fs::exists(a.path / "sigma_step1.ppm"));
  CHECK(fs::exists(a.path / "sigma_step3.ppm"));
  CHECK(fs::exists(a.path / "weights_final.txt"));
  CHECK(count_lines(slurp(a.path / "trace.csv")) == 5);

  RunConfig c2 = c;
  c2.out = b.path.string();
  c2.threads = 3;
  REQUIRE(cmd_iterate(c2, log) == kExitOk);
  CHECK(slurp(a.path / "trace.csv") == slurp(b.path / "trace.csv"));
  CHECK(slurp(a.path / "sigma_step3.ppm") == slurp(b.path / "sigma_step3.ppm"));
  CHECK(slurp(a.path / "weights_final.txt") == slurp(b.path / "weights_final.txt"));

  c.heatmap_at = {9};
  CHECK_THROWS_AS((void)cmd_iterate(c, log), ConfigError);
}

TEST_CASE("iterate: converged runs still render the requested steps") {
  TempDir tmp;
  RunConfig c = small_run(tmp.path);
  c.rank = 1;
  c.iterations = 200;
  c.tolerance = 1e-6;
  c.heatmap_at = {150};
  std::ostringstream log;
  REQUIRE(cmd_iterate(c, log) == kExitOk);
  CHECK(fs::exists(tmp.path / "sigma_step150.ppm"));
  CHECK(log.str().find("converged earlier") != std::string::npos);
}

TEST_CASE("iterate: ricci_outer writes an audit") {
  TempDir tmp;
  RunConfig c = small_run(tmp.path);
  c.scheme = Scheme::ricci_outer;
  c.iterations = 4;
  c.tolerance = 0.0;
  std::ostringstream log;
  CHECK(cmd_iterate(c, log) == kExitOk);
  CHECK(slurp(tmp.path / "audit.csv").find("# summary,pass") != std::string::npos);
}

TEST_CASE("table command") {
  TempDir tmp;
  RunConfig c = small_run(tmp.path);
  c.rank = 3;
  std::ostringstream log;
  CHECK(cmd_table(c, log) == kExitOk);
  const std::string t = slurp(tmp.path / "table.csv");
  CHECK(count_lines(t) == 5);
  for (const auto& name : table_schemes()) CHECK(t.find("\n" + name + ",3,3,") != std::string::npos);
  CHECK(t.find("failed") == std::string::npos);

  // A failing scheme is reported in its row and the others still run.
  c.refinement_gain = 1e6;
  std::ostringstream log2;
  CHECK(cmd_table(c, log2) == kExitFailure);
  const std::string t2 = slurp(tmp.path / "table.csv");
  CHECK(t2.find("failed") != std::string::npos);
  CHECK(t2.find("\ncanonical,3,3,") != std::string::npos);
}

TEST_CASE("real-ma command") {
  TempDir tmp;
  RunConfig c;
  c.polygon = test::data_file("hexagon.txt");
  c.iterations = 3;
  c.grid_radius = 5.0;
  c.grid_resolution = 0.125;
  c.out = tmp.path.string();
  c.dump_stride = 2;
  std::ostringstream log;
  CHECK(cmd_real_ma(c, log) == kExitOk);
  const std::string trace = slurp(tmp.path / "real_trace.csv");
  CHECK(count_lines(trace) == 4);
  CHECK(trace.rfind("step,increment,cst,normalization", 0) == 0);
  const std::string pot = slurp(tmp.path / "potential.csv");
  CHECK(pot.rfind("x1,x2,w\n", 0) == 0);
  CHECK(count_lines(pot) == 1 + 41 * 41);
  CHECK(slurp(tmp.path / "sigma.csv").rfind("x1,x2,sigma\n", 0) == 0);

  c.grid_resolution = 0.3;
  CHECK_THROWS_AS((void)cmd_real_ma(c, log), std::invalid_argument);
}
