#include "kforge/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

namespace kforge {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& key, const std::string& msg, int line) {
  std::string where = line > 0 ? "line " + std::to_string(line) + ": " : std::string{};
  throw ConfigError(where + key + ": " + msg, line);
}

int to_int(const std::string& key, const std::string& v, int line) {
  int out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end) fail(key, "expected an integer, got '" + v + "'", line);
  return out;
}

double to_double(const std::string& key, const std::string& v, int line) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end || !std::isfinite(out)) fail(key, "expected a number, got '" + v + "'", line);
  return out;
}

bool to_bool(const std::string& key, std::string v, int line) {
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  fail(key, "expected a boolean, got '" + v + "'", line);
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&, int)>;

struct Entry {
  const char* key;
  Setter set;
  std::function<std::string(const RunConfig&)> get;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <class T>
std::string opt(const std::optional<T>& v) {
  if (!v) return {};
  if constexpr (std::is_same_v<T, double>) return fmt(*v);
  else return std::to_string(*v);
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"polygon", [](RunConfig& c, const std::string&, const std::string& v, int) { c.polygon = v; },
       [](const RunConfig& c) { return c.polygon; }},
      {"scheme",
       [](RunConfig& c, const std::string& k, const std::string& v, int line) {
         try {
           c.scheme = parse_scheme(v);
         } catch (const std::invalid_argument& e) {
           fail(k, e.what(), line);
         }
       },
       [](const RunConfig& c) { return to_string(c.scheme); }},
      {"r", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.rank = to_int(k, v, l); },
       [](const RunConfig& c) { return std::to_string(c.rank); }},
      {"iters", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.iterations = to_int(k, v, l); },
       [](const RunConfig& c) { return opt(c.iterations); }},
      {"grid_res",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.grid_resolution = to_double(k, v, l); },
       [](const RunConfig& c) { return opt(c.grid_resolution); }},
      {"grid_radius",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.grid_radius = to_double(k, v, l); },
       [](const RunConfig& c) { return opt(c.grid_radius); }},
      {"tol", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.tolerance = to_double(k, v, l); },
       [](const RunConfig& c) { return opt(c.tolerance); }},
      {"out", [](RunConfig& c, const std::string&, const std::string& v, int) { c.out = v; },
       [](const RunConfig& c) { return c.out; }},
      {"threads", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.threads = to_int(k, v, l); },
       [](const RunConfig& c) { return std::to_string(c.threads); }},
      {"dump_weights",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.dump_weights = to_bool(k, v, l); },
       [](const RunConfig& c) { return std::string(c.dump_weights ? "true" : "false"); }},
      {"heatmap_at",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) {
         try {
           c.heatmap_at = parse_int_list(v);
         } catch (const std::invalid_argument& e) {
           fail(k, e.what(), l);
         }
       },
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.heatmap_at.size(); ++i) s += (i ? "," : "") + std::to_string(c.heatmap_at[i]);
         return s;
       }},
      {"heatmap_size",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.heatmap_size = to_int(k, v, l); },
       [](const RunConfig& c) { return std::to_string(c.heatmap_size); }},
      {"init",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) {
         try {
           c.init = parse_init(v);
         } catch (const std::invalid_argument& e) {
           fail(k, e.what(), l);
         }
       },
       [](const RunConfig& c) { return to_string(c.init); }},
      {"stats_window",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.stats_window = to_double(k, v, l); },
       [](const RunConfig& c) { return fmt(c.stats_window); }},
      {"refinement_gain",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.refinement_gain = to_double(k, v, l); },
       [](const RunConfig& c) { return fmt(c.refinement_gain); }},
      {"inner_iters",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.inner_iterations = to_int(k, v, l); },
       [](const RunConfig& c) { return std::to_string(c.inner_iterations); }},
      {"timing", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.timing = to_bool(k, v, l); },
       [](const RunConfig& c) { return std::string(c.timing ? "true" : "false"); }},
      {"eps", [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.eps = to_double(k, v, l); },
       [](const RunConfig& c) { return fmt(c.eps); }},
      {"boundary",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) {
         try {
           c.boundary = parse_boundary(v);
         } catch (const std::invalid_argument& e) {
           fail(k, e.what(), l);
         }
       },
       [](const RunConfig& c) { return to_string(c.boundary); }},
      {"cross_r",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.cross_rank = to_int(k, v, l); },
       [](const RunConfig& c) { return std::to_string(c.cross_rank); }},
      {"cross_iters",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.cross_iterations = to_int(k, v, l); },
       [](const RunConfig& c) { return std::to_string(c.cross_iterations); }},
      {"dump_stride",
       [](RunConfig& c, const std::string& k, const std::string& v, int l) { c.dump_stride = to_int(k, v, l); },
       [](const RunConfig& c) { return std::to_string(c.dump_stride); }},
  };
  return table;
}

const Entry* find_entry(const std::string& key) {
  for (const auto& e : entries())
    if (key == e.key) return &e;
  return nullptr;
}

}  // namespace

void RunConfig::validate() const {
  auto bad = [](const std::string& k, const std::string& m) { fail(k, m, 0); };
  if (rank < 1 || rank > 40) bad("r", "must be in [1, 40]");
  if (iterations && *iterations < 0) bad("iters", "must be >= 0");
  if (grid_resolution && !(*grid_resolution > 0.0)) bad("grid_res", "must be positive");
  if (grid_radius && !(*grid_radius > 0.0)) bad("grid_radius", "must be positive");
  if (tolerance && !(*tolerance >= 0.0)) bad("tol", "must be >= 0");
  if (threads < 0) bad("threads", "must be >= 0");
  if (heatmap_size < 16 || heatmap_size > 4096) bad("heatmap_size", "must be in [16, 4096]");
  for (int s : heatmap_at)
    if (s < 0) bad("heatmap_at", "steps must be >= 0");
  if (!(stats_window > 0.0)) bad("stats_window", "must be positive");
  if (inner_iterations < 1) bad("inner_iters", "must be >= 1");
  if (!(eps >= 0.0 && eps < 1.0)) bad("eps", "must be in [0, 1)");
  if (cross_rank < 0) bad("cross_r", "must be >= 0");
  if (cross_iterations < 0) bad("cross_iters", "must be >= 0");
  if (dump_stride < 1) bad("dump_stride", "must be >= 1");
  if (out.empty()) bad("out", "must not be empty");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.emplace_back(e.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value, int line) {
  const Entry* e = find_entry(key);
  if (!e) fail(key, "unknown key", line);
  e->set(config, key, value, line);
}

void parse_config(std::istream& in, RunConfig& config, const std::string& base_dir) {
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected 'key = value'", line);
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line) + ": missing key", line);
    set_config_value(config, key, value, line);
    if (key == "polygon" && !base_dir.empty() && !value.empty()) {
      const std::filesystem::path p(value);
      if (p.is_relative()) config.polygon = (std::filesystem::path(base_dir) / p).string();
    }
  }
}

void read_config_file(const std::string& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'", 0);
  const auto dir = std::filesystem::path(path).parent_path().string();
  try {
    parse_config(in, config, dir);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ":" + e.what(), e.line());
  }
}

void write_config(std::ostream& out, const RunConfig& config) {
  for (const auto& e : entries()) {
    const std::string v = e.get(config);
    if (v.empty()) continue;
    out << e.key << " = " << v << '\n';
  }
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text + ",");  // so a trailing comma shows up as an empty item
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw std::invalid_argument("empty entry in integer list: '" + text + "'");
    int v = 0;
    const auto* end = item.data() + item.size();
    auto [p, ec] = std::from_chars(item.data(), end, v);
    if (ec != std::errc{} || p != end) throw std::invalid_argument("not an integer list: '" + text + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace kforge
