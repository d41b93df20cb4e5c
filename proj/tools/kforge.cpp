// kforge: command-line front end.
//
//   kforge info    --polygon data/hexagon.txt
//   kforge iterate --polygon data/hexagon.txt --scheme canonical --r 12 --iters 40 --heatmap-at 10,16,20,40
//   kforge table   --polygon data/hexagon.txt
//   kforge real-ma --polygon data/hexagon.txt --iters 30
//
// Settings come from defaults, then --config, then flags (last wins).

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kforge/commands.hpp"

namespace {

struct Flags {
  std::optional<std::string> config_file;
  // Flag values keyed by config key; only flags given on the command line are applied.
  std::map<std::string, std::string> values;
  bool dump_weights = false;
  std::vector<std::string> sets;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_file, "key = value config file")->check(CLI::ExistingFile);
  const std::vector<std::pair<std::string, std::string>> mapped = {
      {"--polygon", "polygon"},     {"--scheme", "scheme"},     {"--r", "r"},        {"--iters", "iters"},
      {"--grid-res", "grid_res"},   {"--grid-radius", "grid_radius"}, {"--tol", "tol"}, {"--out", "out"},
      {"--threads", "threads"},     {"--heatmap-at", "heatmap_at"},
  };
  for (const auto& [flag, key] : mapped) {
    cmd->add_option_function<std::string>(
        flag, [&f, key = key](const std::string& v) { f.values[key] = v; }, "config key " + key);
  }
  cmd->add_flag("--dump-weights", f.dump_weights, "write the final weights");
  cmd->add_option("--set", f.sets, "extra config assignment key=value (repeatable)");
}

kforge::RunConfig resolve(const Flags& f) {
  kforge::RunConfig cfg;
  if (f.config_file) kforge::read_config_file(*f.config_file, cfg);
  for (const auto& [k, v] : f.values) kforge::set_config_value(cfg, k, v);
  if (f.dump_weights) cfg.dump_weights = true;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw kforge::ConfigError("--set expects key=value, got '" + s + "'", 0);
    kforge::set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical Kahler-Einstein metrics on toric del Pezzo surfaces"};
  app.require_subcommand(1);
  Flags flags;
  std::string keys_help = "config keys:";
  for (const auto& k : kforge::config_keys()) keys_help += " " + k;
  app.footer(keys_help + "\nKFORGE_THREADS sets the thread count when --threads is 0 or absent.");

  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const kforge::RunConfig&, std::ostream&);
    std::ostream* stream;
  };
  const std::vector<Cmd> cmds = {
      {"info", "polygon data and section counts", kforge::cmd_info, &std::cout},
      {"iterate", "run one scheme; trace CSV and heatmaps", kforge::cmd_iterate, &std::cerr},
      {"table", "compare the four schemes at one rank", kforge::cmd_table, &std::cerr},
      {"real-ma", "real Monge-Ampere iteration on a grid", kforge::cmd_real_ma, &std::cerr},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_flags(sub, flags);
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      const kforge::RunConfig cfg = resolve(flags);
      return cmds[i].run(cfg, *cmds[i].stream);
    } catch (const kforge::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kforge::kExitInput;
    } catch (const kforge::ParseError& e) {
      std::cerr << "polygon error: " << e.what() << '\n';
      return kforge::kExitInput;
    } catch (const kforge::GeometryError& e) {
      std::cerr << "polygon error: " << e.what() << '\n';
      return kforge::kExitInput;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kforge::kExitFailure;
    }
  }
  return kforge::kExitInput;
}
