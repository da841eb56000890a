// Command-line front end. Exit status: 0 success, 2 invalid configuration or
// usage, 3 solver failure (including sweeps with failed points).
#pragma once

#include <CLI11.hpp>

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qgraph/cli/config.hpp"
#include "qgraph/cli/run.hpp"

namespace qgraph::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_solver = 3;

namespace detail {

/// Flag values as given on the command line; unset flags leave the config alone.
struct Flags {
  std::string config;
  std::string chain;
  std::map<std::string, std::string> settings;  // config key -> raw value
  bool periodic = false;
};

/// `--chain` accepts "40", "N=40" or "N=40,m=1,n=20".
inline std::vector<std::string> apply_chain(RunConfig& c, const std::string& spec) {
  std::vector<std::string> problems;
  for (const auto& item : split(spec, ',')) {
    const auto eq = item.find('=');
    const std::string key = eq == std::string::npos ? "N" : trim(item.substr(0, eq));
    const std::string value = eq == std::string::npos ? item : trim(item.substr(eq + 1));
    if (key != "N" && key != "m" && key != "n" && key != "boundary") {
      problems.push_back("--chain: unknown field '" + key + "'");
      continue;
    }
    if (auto p = apply_setting(c, key, value); !p.empty()) problems.push_back("--chain " + p);
  }
  return problems;
}

inline RunConfig resolve(Command command, const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) c = load_config(f.config, c);
  c.command = command;
  std::vector<std::string> problems;
  if (!f.chain.empty()) {
    auto p = apply_chain(c, f.chain);
    problems.insert(problems.end(), p.begin(), p.end());
  }
  if (f.periodic) c.boundary = Boundary::periodic;
  for (const auto& [key, value] : f.settings)
    if (auto p = apply_setting(c, key, value); !p.empty()) problems.push_back("--" + p);
  if (!problems.empty()) throw ValidationError("invalid arguments", std::move(problems));
  return c;
}

inline void add_run_options(CLI::App& sub, Flags& f) {
  sub.add_option("--config", f.config, "Config file (key = value); flags override its values")
      ->check(CLI::ExistingFile);
  sub.add_option("--chain", f.chain, "Chain family: N, or N=..,m=..,n=..");
  sub.add_flag("--periodic", f.periodic, "Periodic backbone (requires no side sites)");
  struct Opt {
    const char* flag;
    const char* key;
    const char* help;
  };
  static constexpr Opt opts[] = {
      {"--side-sites", "side_sites", "Side sites m attached to one backbone node"},
      {"--attach", "attach", "Attach position(s) n, comma separated"},
      {"--edges", "edges", "Edge-list file replacing the chain family"},
      {"--hopping", "hopping", "Hopping K"},
      {"--g", "g", "Coupling(s) in units of K, comma separated"},
      {"--g-grid", "g_grid", "Coupling grid from:to:count"},
      {"--np", "np", "Pair number(s), comma separated"},
      {"--kind", "kind", "Interaction: bcs or hubbard"},
      {"--output-dir", "output_dir", "Output directory (default $QGPAIR_OUTPUT_DIR or qgpair-out)"},
      {"--format", "format", "Table format: csv or json"},
      {"--workers", "workers", "Worker threads (0: logical cores)"},
      {"--tolerance", "tolerance", "Richardson Newton tolerance"},
      {"--bin-width", "bin_width", "DOS bin width in K"},
  };
  for (const auto& o : opts)
    sub.add_option_function<std::string>(
        o.flag, [&f, key = std::string(o.key)](const std::string& v) { f.settings[key] = v; }, o.help);
}

inline int execute(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto m = run(c);
  const std::filesystem::path dir(c.output_dir);
  for (const auto& o : m.outputs) out << (dir / o.file).string() << "\n";
  out << (dir / "manifest.json").string() << "\n";
  for (const auto& f : m.failures) err << "failed at " << f.point << ": " << f.error << "\n";
  return m.ok() ? exit_ok : exit_solver;
}

inline void print_problems(std::ostream& err, const ValidationError& e) {
  if (e.problems().empty()) err << "error: " << e.what() << "\n";
  for (const auto& p : e.problems()) err << "error: " << p << "\n";
}

}  // namespace detail

inline int qgpair_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pairing on quantum graphs: spectra, two-body states, Richardson solutions and BCS fits.", tool_name};
  app.set_version_flag("--version", std::string(tool_version));
  app.require_subcommand(1);

  detail::Flags flags;
  std::vector<std::pair<CLI::App*, Command>> commands;
  for (auto [cmd, name] : command_names) {
    auto* sub = app.add_subcommand(std::string(name));
    detail::add_run_options(*sub, flags);
    commands.emplace_back(sub, cmd);
  }
  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a config file without computing");
  validate_cmd->add_option("path", validate_path, "Config file")->required();

  if (argc > 1 && argv[1][0] != '-' && std::string(argv[1]) != "validate" && !parse_command(argv[1])) {
    err << "error: unknown command '" << argv[1] << "'\n";
    return exit_config;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_config;
  }

  if (validate_cmd->parsed()) {
    const auto problems = validate(validate_path);
    if (problems.empty()) {
      out << "ok\n";
      return exit_ok;
    }
    for (const auto& p : problems) err << "error: " << p << "\n";
    return exit_config;
  }

  for (const auto& [sub, cmd] : commands) {
    if (!sub->parsed()) continue;
    try {
      return detail::execute(detail::resolve(cmd, flags), out, err);
    } catch (const ValidationError& e) {
      detail::print_problems(err, e);
      return exit_config;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return exit_solver;
    }
  }
  return exit_config;
}

}  // namespace qgraph::cli
