// Run configuration: a flat `key = value` text format, one key per line,
// '#' starts a comment. Lists are comma separated; `m` and `n` are accepted
// as short forms of side_sites and attach. Every field is validated
// before any computation, and all violations are reported together.
#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "qgraph/error.hpp"
#include "qgraph/graph.hpp"
#include "qgraph/manybody.hpp"
#include "qgraph/twobody.hpp"

namespace qgraph::cli {

enum class Command {
  spectrum,
  twobody,
  sweep_depairing,
  dos,
  pdist,
  coherence,
  richardson_gap,
  gap_sweep,
  occupations,
  bcs_fit,
};

inline constexpr std::array<std::pair<Command, std::string_view>, 10> command_names{{
    {Command::spectrum, "spectrum"},
    {Command::twobody, "twobody"},
    {Command::sweep_depairing, "sweep-depairing"},
    {Command::dos, "dos"},
    {Command::pdist, "pdist"},
    {Command::coherence, "coherence"},
    {Command::richardson_gap, "richardson-gap"},
    {Command::gap_sweep, "gap-sweep"},
    {Command::occupations, "occupations"},
    {Command::bcs_fit, "bcs-fit"},
}};

inline std::string_view to_string(Command c) {
  for (auto [cmd, name] : command_names)
    if (cmd == c) return name;
  return "?";
}

inline std::optional<Command> parse_command(std::string_view s) {
  for (auto [cmd, name] : command_names)
    if (name == s) return cmd;
  return std::nullopt;
}

enum class Format { csv, json };

inline std::string_view to_string(Format f) { return f == Format::csv ? "csv" : "json"; }

/// Evenly spaced grid a:b:n (n points, both ends included).
struct Grid {
  double from = 0.0;
  double to = 0.0;
  int count = 0;

  std::vector<double> values() const {
    std::vector<double> out;
    for (int i = 0; i < count; ++i)
      out.push_back(count == 1 ? from : from + (to - from) * static_cast<double>(i) / (count - 1));
    return out;
  }

  bool operator==(const Grid&) const = default;
};

/// Default output directory: $QGPAIR_OUTPUT_DIR, else ./qgpair-out.
inline std::string default_output_dir() {
  const char* env = std::getenv("QGPAIR_OUTPUT_DIR");
  return env && *env ? env : "qgpair-out";
}

struct RunConfig {
  Command command = Command::spectrum;
  int total_sites = 40;
  int side_sites = 0;
  std::vector<int> attach;  // empty: every backbone position (sweeps) or the midpoint
  Boundary boundary = Boundary::open;
  std::string edges;  // edge-list file replacing the chain family
  double hopping = 1.0;
  Interaction kind = Interaction::bcs;
  std::vector<double> g;
  std::optional<Grid> g_grid;
  std::vector<int> n_pairs;
  std::string output_dir = default_output_dir();
  Format format = Format::csv;
  int workers = 0;  // 0: logical core count
  double tolerance = 1e-13;
  double bin_width = 0.05;

  /// Coupling list: the explicit values followed by the grid, if any.
  std::vector<double> couplings() const {
    std::vector<double> out = g;
    if (g_grid) {
      auto v = g_grid->values();
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }

  ChainSpec chain(int pos) const { return {total_sites, side_sites, pos, boundary}; }

  /// Attach positions a sweep visits.
  std::vector<int> sweep_positions() const {
    if (!attach.empty()) return attach;
    if (side_sites == 0) return {1};
    std::vector<int> out;
    for (int n = 1; n <= total_sites - side_sites; ++n) out.push_back(n);
    return out;
  }

  /// Attach position for single-graph commands.
  int single_position() const {
    if (!attach.empty()) return attach.front();
    return side_sites == 0 ? 1 : (total_sites - side_sites + 1) / 2;
  }

  bool operator==(const RunConfig&) const = default;
};

/// Shortest decimal text that reads back to the same double.
inline std::string format_exact(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

inline bool parse_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || v < -1'000'000'000L || v > 1'000'000'000L) return false;
  out = static_cast<int>(v);
  return true;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) out += format_exact(v[i]);
    else out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

inline std::optional<Grid> parse_grid(const std::string& text) {
  auto parts = detail::split(text, ':');
  Grid g;
  if (parts.size() != 3 || !detail::parse_double(parts[0], g.from) || !detail::parse_double(parts[1], g.to) ||
      !detail::parse_int(parts[2], g.count))
    return std::nullopt;
  return g;
}

/// Applies one `key = value` setting; returns a problem description or "".
inline std::string apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  auto bad = [&](const std::string& what) { return key + ": " + what + " (got '" + value + "')"; };
  auto doubles = [&](std::vector<double>& out) -> std::string {
    out.clear();
    if (value.empty()) return "";
    for (const auto& item : detail::split(value, ',')) {
      double v = 0.0;
      if (!detail::parse_double(item, v)) return bad("expected a comma-separated list of numbers");
      out.push_back(v);
    }
    return "";
  };
  auto ints = [&](std::vector<int>& out) -> std::string {
    out.clear();
    if (value.empty()) return "";
    for (const auto& item : detail::split(value, ',')) {
      int v = 0;
      if (!detail::parse_int(item, v)) return bad("expected a comma-separated list of integers");
      out.push_back(v);
    }
    return "";
  };
  auto one_int = [&](int& out) { return detail::parse_int(value, out) ? std::string() : bad("expected an integer"); };
  auto one_double = [&](double& out) {
    return detail::parse_double(value, out) ? std::string() : bad("expected a number");
  };

  if (key == "command") {
    auto cmd = parse_command(value);
    if (!cmd) return bad("unknown command");
    c.command = *cmd;
    return "";
  }
  if (key == "N") return one_int(c.total_sites);
  if (key == "side_sites" || key == "m") return one_int(c.side_sites);
  if (key == "attach" || key == "n") return ints(c.attach);
  if (key == "boundary") {
    if (value == "open") c.boundary = Boundary::open;
    else if (value == "periodic") c.boundary = Boundary::periodic;
    else return bad("expected open or periodic");
    return "";
  }
  if (key == "edges") {
    c.edges = value;
    return "";
  }
  if (key == "hopping") return one_double(c.hopping);
  if (key == "kind") {
    if (value == "bcs") c.kind = Interaction::bcs;
    else if (value == "hubbard") c.kind = Interaction::hubbard;
    else return bad("expected bcs or hubbard");
    return "";
  }
  if (key == "g") return doubles(c.g);
  if (key == "g_grid") {
    if (value.empty()) {
      c.g_grid.reset();
      return "";
    }
    c.g_grid = parse_grid(value);
    return c.g_grid ? "" : bad("expected from:to:count");
  }
  if (key == "np") return ints(c.n_pairs);
  if (key == "output_dir") {
    c.output_dir = value;
    return "";
  }
  if (key == "format") {
    if (value == "csv") c.format = Format::csv;
    else if (value == "json") c.format = Format::json;
    else return bad("expected csv or json");
    return "";
  }
  if (key == "workers") return one_int(c.workers);
  if (key == "tolerance") return one_double(c.tolerance);
  if (key == "bin_width") return one_double(c.bin_width);
  return "unknown key '" + key + "'";
}

/// Parses the text format on top of `base`. Throws ValidationError listing
/// every malformed line.
inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
  std::vector<std::string> problems;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) {
      problems.push_back(where + "expected key = value");
      continue;
    }
    auto p = apply_setting(base, detail::trim(std::string_view(line).substr(0, eq)),
                           detail::trim(std::string_view(line).substr(eq + 1)));
    if (!p.empty()) problems.push_back(where + p);
  }
  if (!problems.empty()) throw ValidationError("malformed config", std::move(problems));
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config", {"cannot read " + path.string()});
  return parse_config(in, std::move(base));
}

/// Flat key/value view of every field, in a fixed key order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& c) {
  return {
      {"command", std::string(to_string(c.command))},
      {"N", std::to_string(c.total_sites)},
      {"side_sites", std::to_string(c.side_sites)},
      {"attach", detail::join(c.attach)},
      {"boundary", to_string(c.boundary)},
      {"edges", c.edges},
      {"hopping", format_exact(c.hopping)},
      {"kind", to_string(c.kind)},
      {"g", detail::join(c.g)},
      {"g_grid", c.g_grid ? format_exact(c.g_grid->from) + ":" + format_exact(c.g_grid->to) + ":" +
                                std::to_string(c.g_grid->count)
                          : ""},
      {"np", detail::join(c.n_pairs)},
      {"output_dir", c.output_dir},
      {"format", std::string(to_string(c.format))},
      {"workers", std::to_string(c.workers)},
      {"tolerance", format_exact(c.tolerance)},
      {"bin_width", format_exact(c.bin_width)},
  };
}

inline std::string serialize_config(const RunConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

inline bool is_sweep(Command c) {
  return c == Command::sweep_depairing || c == Command::gap_sweep;
}

inline bool needs_pairs(Command c) {
  return c == Command::richardson_gap || c == Command::gap_sweep || c == Command::occupations ||
         c == Command::bcs_fit;
}

inline bool needs_coupling(Command c) { return c != Command::spectrum; }

/// Commands evaluated at a single coupling.
inline bool single_coupling(Command c) {
  return c == Command::twobody || c == Command::dos || c == Command::pdist || c == Command::occupations;
}

/// Every violated precondition; empty when the config can run.
inline std::vector<std::string> config_violations(const RunConfig& c) {
  std::vector<std::string> out;
  const bool custom = !c.edges.empty();
  if (custom) {
    if (is_sweep(c.command)) out.push_back("sweeps need a chain family, not an edge list");
    if (!std::filesystem::exists(c.edges)) out.push_back("edge list not found: " + c.edges);
  } else {
    const int backbone = c.total_sites - c.side_sites;
    if (c.attach.empty()) {
      auto v = chain_spec_violations(c.chain(c.side_sites == 0 ? 1 : std::max(1, (backbone + 1) / 2)));
      out.insert(out.end(), v.begin(), v.end());
    }
    std::vector<std::string> seen;
    for (int pos : c.attach) {
      for (auto& v : chain_spec_violations(c.chain(pos)))
        if (std::find(seen.begin(), seen.end(), v) == seen.end()) seen.push_back(v);
    }
    out.insert(out.end(), seen.begin(), seen.end());
    if (c.side_sites == 0 && !c.attach.empty() &&
        std::any_of(c.attach.begin(), c.attach.end(), [](int p) { return p != 1; }))
      out.push_back("attach positions need side_sites >= 1");
    if (!is_sweep(c.command) && c.attach.size() > 1) out.push_back("command takes a single attach position");
    if (is_sweep(c.command) && c.boundary == Boundary::periodic) out.push_back("sweeps use open chains");
  }
  if (!(c.hopping > 0.0) || !std::isfinite(c.hopping)) out.push_back("hopping must be positive");

  const auto gs = c.couplings();
  if (c.g_grid && (c.g_grid->count < 1 || !std::isfinite(c.g_grid->from) || !std::isfinite(c.g_grid->to)))
    out.push_back("g_grid needs finite ends and at least one point");
  for (double v : gs)
    if (!std::isfinite(v)) out.push_back("g values must be finite");
  if (needs_coupling(c.command) && gs.empty()) out.push_back("command needs at least one g value");
  if (single_coupling(c.command) && gs.size() > 1) out.push_back("command takes a single g value");

  if (needs_pairs(c.command)) {
    if (c.n_pairs.empty()) out.push_back("command needs n_p (np)");
    const bool gap = c.command == Command::richardson_gap || c.command == Command::gap_sweep;
    const int max_np = gap ? c.total_sites - 1 : c.total_sites;
    for (int np : c.n_pairs) {
      if (np < 1 || (!custom && np > max_np)) {
        out.push_back("n_p out of range 1.." + std::to_string(max_np) + " (got " + std::to_string(np) + ")");
      } else if (!gap && !custom && c.total_sites <= 63 &&
                 binomial(c.total_sites, np) > PairBasis::default_limit) {
        out.push_back("pair basis C(" + std::to_string(c.total_sites) + "," + std::to_string(np) +
                      ") exceeds the exact-diagonalisation limit");
      }
    }
    if ((c.command == Command::occupations || c.command == Command::bcs_fit) && c.n_pairs.size() > 1)
      out.push_back("command takes a single n_p");
  }
  if (c.kind == Interaction::hubbard &&
      (c.command == Command::richardson_gap || c.command == Command::gap_sweep ||
       c.command == Command::occupations || c.command == Command::bcs_fit))
    out.push_back("pair-model commands use the BCS interaction only");
  if (c.workers < 0) out.push_back("workers must be >= 0");
  if (!(c.tolerance > 0.0) || !(c.tolerance < 1e-3)) out.push_back("tolerance must be in (0, 1e-3)");
  if (!(c.bin_width > 0.0) || !std::isfinite(c.bin_width)) out.push_back("bin_width must be positive");
  if (c.output_dir.empty()) out.push_back("output_dir must not be empty");
  return out;
}

/// Reads and checks a config file without computing anything.
inline std::vector<std::string> validate(const std::filesystem::path& path) {
  try {
    return config_violations(load_config(path));
  } catch (const ValidationError& e) {
    return e.problems();
  }
}

}  // namespace qgraph::cli
