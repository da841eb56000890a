// Command dispatch and persistence. Each command turns a validated RunConfig
// into named tables; files are written atomically (temp file + rename) and
// the manifest is written last, only after every output exists.
#pragma once

#include <zlib.h>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qgraph/cli/config.hpp"
#include "qgraph/cli/table.hpp"
#include "qgraph/manybody.hpp"
#include "qgraph/parallel.hpp"
#include "qgraph/richardson.hpp"
#include "qgraph/twobody.hpp"

namespace qgraph::cli {

inline constexpr const char* tool_name = "qgpair";
inline constexpr const char* tool_version = "0.1.0";

struct OutputRecord {
  std::string file;
  std::uint32_t crc32 = 0;
  std::uint64_t bytes = 0;
};

/// A sweep point that did not produce a value.
struct Failure {
  std::string point;
  std::string error;
};

struct RunManifest {
  RunConfig config;
  std::string started_utc;
  double wall_clock_seconds = 0.0;
  std::vector<OutputRecord> outputs;
  std::vector<Failure> failures;

  bool ok() const { return failures.empty(); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = tool_name;
    j["version"] = tool_version;
    j["command"] = std::string(to_string(config.command));
    nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
    for (const auto& [k, v] : config_entries(config)) cfg[k] = v;
    j["config"] = cfg;
    j["started_utc"] = started_utc;
    j["wall_clock_seconds"] = wall_clock_seconds;
    j["outputs"] = nlohmann::ordered_json::array();
    for (const auto& o : outputs) {
      char crc[9];
      std::snprintf(crc, sizeof crc, "%08x", o.crc32);
      j["outputs"].push_back({{"file", o.file}, {"crc32", crc}, {"bytes", o.bytes}});
    }
    j["failures"] = nlohmann::ordered_json::array();
    for (const auto& f : failures) j["failures"].push_back({{"point", f.point}, {"error", f.error}});
    j["status"] = ok() ? "ok" : "partial";
    return j;
  }
};

inline std::uint32_t crc32_of(const std::string& data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size()));
  return static_cast<std::uint32_t>(crc);
}

/// Writes `data` to `path` via a sibling temp file and rename.
inline void write_atomically(const std::filesystem::path& path, const std::string& data) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << data;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Named tables plus the points that failed.
struct CommandResult {
  std::vector<std::pair<std::string, Table>> tables;
  std::vector<Failure> failures;
};

namespace detail {

inline std::string point(std::initializer_list<std::pair<const char*, std::string>> kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += (out.empty() ? "" : " ") + std::string(k) + "=" + v;
  return out;
}

inline QuantumGraph graph_of(const RunConfig& c, int pos) {
  if (!c.edges.empty()) {
    std::ifstream in(c.edges);
    if (!in) throw ValidationError("config", {"cannot read edge list " + c.edges});
    auto g = read_edge_list(in);
    if (c.hopping != 1.0) return build_custom(g.adjacency(), g.onsite(), c.hopping * g.hopping());
    return g;
  }
  return build_chain(c.chain(pos), c.hopping);
}

inline std::vector<double> levels_of(const QuantumGraph& g) {
  const Eigen::VectorXd e = symmetric_eigenvalues(single_particle_hamiltonian(g));
  return {e.data(), e.data() + e.size()};
}

inline RichardsonOptions richardson_options(const RunConfig& c) {
  RichardsonOptions o;
  o.tolerance = c.tolerance;
  return o;
}

inline CommandResult spectrum(const RunConfig& c) {
  const auto s = single_particle_spectrum(graph_of(c, c.single_position()));
  Table t({"index", "energy_K"});
  for (int i = 0; i < s.size(); ++i) t.add(i + 1, s.energies(i));
  return {{{"spectrum", std::move(t)}}, {}};
}

inline CommandResult twobody(const RunConfig& c) {
  const auto graph = graph_of(c, c.single_position());
  const double g = c.couplings().front();
  const auto sol = solve(assemble(graph, InteractionKind{c.kind, g}));
  Table spec({"sector", "index", "energy_K"});
  for (Parity p : {Parity::symmetric, Parity::antisymmetric}) {
    const auto& e = sol.energies(p);
    for (Eigen::Index i = 0; i < e.size(); ++i) spec.add(to_string(p), i + 1, e(i));
  }
  Table wf({"i", "j", "prob"});
  for (Eigen::Index i = 0; i < sol.ground_state.rows(); ++i)
    for (Eigen::Index j = 0; j < sol.ground_state.cols(); ++j)
      wf.add(i + 1, j + 1, sol.ground_state(i, j) * sol.ground_state(i, j));
  Table summary({"g_K", "ground_K", "depairing_K", "xi_C_sites"});
  summary.add(g, sol.symmetric_energies(0), sol.depairing_energy,
              coherence_length(sol.ground_state, shortest_path_distances(graph)));
  return {{{"twobody_spectrum", std::move(spec)}, {"wavefunction", std::move(wf)}, {"twobody_summary", std::move(summary)}},
          {}};
}

inline CommandResult sweep_depairing(const RunConfig& c) {
  const auto positions = c.sweep_positions();
  const auto gs = c.couplings();
  DepairingSweepOptions opt;
  opt.type = c.kind;
  opt.workers = c.workers;
  opt.hopping = c.hopping;
  const auto rows = depairing_sweep(c.total_sites, c.side_sites, positions, gs, opt);
  CommandResult out;
  Table t({"n", "g_K", "depairing_K", "status"});
  for (const auto& r : rows) {
    t.add(r.attach_pos, r.g, r.depairing, r.ok() ? "ok" : "failed");
    if (!r.ok()) out.failures.push_back({point({{"n", std::to_string(r.attach_pos)}, {"g", format_exact(r.g)}}), r.error});
  }
  out.tables.emplace_back("depairing_sweep", std::move(t));

  // Per coupling: largest depairing over positions, relative to the plain chain.
  Table eta({"g_K", "max_depairing_K", "argmax_n", "chain_depairing_K", "eta"});
  const auto chain = depairing_sweep(c.total_sites, 0, std::vector<int>{1}, gs, opt);
  for (std::size_t k = 0; k < gs.size(); ++k) {
    double best = std::numeric_limits<double>::quiet_NaN();
    int at = 0;
    for (std::size_t p = 0; p < positions.size(); ++p) {
      const auto& r = rows[p * gs.size() + k];
      if (r.ok() && !(r.depairing <= best)) best = r.depairing, at = r.attach_pos;
    }
    const double ref = chain[k].ok() ? chain[k].depairing : std::numeric_limits<double>::quiet_NaN();
    eta.add(gs[k], best, at, ref, best / ref);
  }
  out.tables.emplace_back("depairing_eta", std::move(eta));
  return out;
}

inline CommandResult dos(const RunConfig& c) {
  const auto sol = solve(assemble(graph_of(c, c.single_position()), InteractionKind{c.kind, c.couplings().front()}), false);
  const auto h = dos_histogram(sol, c.bin_width);
  Table t({"bin_low_K", "bin_high_K", "symmetric", "antisymmetric", "combined"});
  for (int b = 0; b < h.bins(); ++b)
    t.add(h.bin_low(b), h.bin_high(b), h.symmetric[static_cast<std::size_t>(b)],
          h.antisymmetric[static_cast<std::size_t>(b)], h.combined[static_cast<std::size_t>(b)]);
  return {{{"dos", std::move(t)}}, {}};
}

inline CommandResult pdist(const RunConfig& c) {
  const auto graph = graph_of(c, c.single_position());
  const auto sol = solve(assemble(graph, InteractionKind{c.kind, c.couplings().front()}));
  const auto d = shortest_path_distances(graph);
  const auto p0 = pair_distance_distribution(sol.state(Parity::symmetric, 0), d);
  const auto p1 = sol.symmetric_energies.size() > 1 ? pair_distance_distribution(sol.state(Parity::symmetric, 1), d)
                                                   : std::vector<double>(p0.size(), 0.0);
  Table t({"r", "P_ground", "P_first_excited", "cumulative_ground", "cumulative_first_excited"});
  double c0 = 0.0, c1 = 0.0;
  for (std::size_t r = 0; r < p0.size(); ++r) {
    c0 += p0[r];
    c1 += p1[r];
    t.add(r, p0[r], p1[r], c0, c1);
  }
  return {{{"pdist", std::move(t)}}, {}};
}

inline CommandResult coherence(const RunConfig& c) {
  const auto graph = graph_of(c, c.single_position());
  const auto d = shortest_path_distances(graph);
  CommandResult out;
  Table t({"g_K", "xi_C_sites", "inverse_xi_C", "depairing_K", "status"});
  for (double g : c.couplings()) {
    try {
      const auto sol = solve(assemble(graph, InteractionKind{c.kind, g}));
      const double xi = coherence_length(sol.ground_state, d);
      t.add(g, xi, 1.0 / xi, sol.depairing_energy, "ok");
    } catch (const SolverError& e) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      t.add(g, nan, nan, nan, "failed");
      out.failures.push_back({point({{"g", format_exact(g)}}), e.what()});
    }
  }
  out.tables.emplace_back("coherence", std::move(t));
  return out;
}

inline CommandResult richardson_gap(const RunConfig& c) {
  const auto levels = levels_of(graph_of(c, c.single_position()));
  const auto gs = c.couplings();
  std::vector<GapResult> results(c.n_pairs.size() * gs.size());
  std::vector<std::string> errors(results.size());
  const auto opt = richardson_options(c);
  parallel_for(results.size(), c.workers, [&](std::size_t k) {
    try {
      results[k] = spectroscopic_gap(levels, c.n_pairs[k / gs.size()], gs[k % gs.size()], opt);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });
  CommandResult out;
  Table t({"n_p", "g_K", "gap_K", "ground_energy_K", "excited_energy_K", "blocked_i", "blocked_j", "status"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < results.size(); ++k) {
    const int np = c.n_pairs[k / gs.size()];
    const double g = gs[k % gs.size()];
    if (errors[k].empty()) {
      const auto& r = results[k];
      t.add(np, g, r.gap, r.ground_energy, r.excited_energy, r.blocked.first + 1, r.blocked.second + 1, "ok");
    } else {
      t.add(np, g, nan, nan, nan, 0, 0, "failed");
      out.failures.push_back({point({{"n_p", std::to_string(np)}, {"g", format_exact(g)}}), errors[k]});
    }
  }
  out.tables.emplace_back("richardson_gap", std::move(t));
  return out;
}

inline CommandResult gap_sweep(const RunConfig& c) {
  GapSweepOptions opt;
  opt.side_sites = c.side_sites;
  opt.workers = c.workers;
  opt.hopping = c.hopping;
  opt.richardson = richardson_options(c);
  const auto rows = qgraph::gap_sweep(c.total_sites, c.sweep_positions(), c.n_pairs, c.couplings(), opt);
  CommandResult out;
  Table t({"n", "n_p", "g_K", "gap_K", "enhancement", "chain_gap_K", "status"});
  for (const auto& r : rows) {
    t.add(r.attach_pos, r.n_pairs, r.g, r.gap, r.enhancement, r.chain_gap, r.ok() ? "ok" : "failed");
    if (!r.ok())
      out.failures.push_back({point({{"n", std::to_string(r.attach_pos)},
                                     {"n_p", std::to_string(r.n_pairs)},
                                     {"g", format_exact(r.g)}}),
                              r.error});
  }
  out.tables.emplace_back("gap_sweep", std::move(t));
  return out;
}

inline CommandResult occupations(const RunConfig& c) {
  const auto levels = levels_of(graph_of(c, c.single_position()));
  const double g = c.couplings().front();
  const auto profile = ground_occupations(levels, g, c.n_pairs.front());
  const auto fit = fit_bcs(profile);
  Table t({"i", "E_K", "nu", "v2_fit"});
  for (std::size_t i = 0; i < profile.nu.size(); ++i) t.add(i + 1, profile.levels[i], profile.nu[i], fit.v2[i]);
  Table s({"g_K", "n_p", "ground_energy_K", "mu_K", "delta_K", "rss", "constraint_gap", "degenerate_ground", "flat"});
  s.add(g, profile.n_pairs, profile.energy, fit.mu, fit.delta, fit.rss, fit.constraint_gap, profile.degenerate_ground,
        fit.flat);
  return {{{"occupations", std::move(t)}, {"occupations_fit", std::move(s)}}, {}};
}

inline CommandResult bcs_fit(const RunConfig& c) {
  const auto levels = levels_of(graph_of(c, c.single_position()));
  const auto gs = c.couplings();
  const auto rows = bcs_sweep(levels, c.n_pairs.front(), gs, c.workers);
  CommandResult out;
  Table t({"g_K", "delta_K", "mu_K", "rss", "constraint_gap", "status"});
  std::vector<double> fg, fd;
  for (const auto& r : rows) {
    t.add(r.g, r.fit.delta, r.fit.mu, r.fit.rss, r.fit.constraint_gap,
          r.ok() ? (r.fit.flat ? "flat" : "ok") : "failed");
    if (!r.ok()) out.failures.push_back({point({{"g", format_exact(r.g)}}), r.error});
    else if (!r.fit.flat) {
      fg.push_back(r.g);
      fd.push_back(r.fit.delta);
    }
  }
  out.tables.emplace_back("bcs_fit", std::move(t));
  if (fg.size() >= 3) {
    const auto cubic = fit_cubic_through_origin(fg, fd);
    Table p({"a1", "a2", "a3", "rms", "points"});
    p.add(cubic.a1, cubic.a2, cubic.a3, cubic.rms, fg.size());
    out.tables.emplace_back("bcs_cubic", std::move(p));
  }
  return out;
}

inline CommandResult dispatch(const RunConfig& c) {
  switch (c.command) {
    case Command::spectrum: return spectrum(c);
    case Command::twobody: return twobody(c);
    case Command::sweep_depairing: return sweep_depairing(c);
    case Command::dos: return dos(c);
    case Command::pdist: return pdist(c);
    case Command::coherence: return coherence(c);
    case Command::richardson_gap: return richardson_gap(c);
    case Command::gap_sweep: return gap_sweep(c);
    case Command::occupations: return occupations(c);
    case Command::bcs_fit: return bcs_fit(c);
  }
  throw ValidationError("config", {"unknown command"});
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

/// Validates, computes and writes every output, then the manifest. Throws
/// ValidationError for a bad config; failed sweep points are recorded in the
/// manifest instead of aborting the run.
inline RunManifest run(const RunConfig& config) {
  auto problems = config_violations(config);
  if (!problems.empty()) throw ValidationError("invalid run config", std::move(problems));
  RunManifest m;
  m.config = config;
  m.started_utc = detail::utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  auto result = detail::dispatch(config);

  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  const std::string ext = config.format == Format::csv ? ".csv" : ".json";
  for (const auto& [stem, table] : result.tables) {
    const std::string data = config.format == Format::csv ? to_csv(table) : to_json(table);
    write_atomically(dir / (stem + ext), data);
    m.outputs.push_back({stem + ext, crc32_of(data), data.size()});
  }
  m.failures = std::move(result.failures);
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_atomically(dir / "manifest.json", m.to_json().dump(2) + "\n");
  return m;
}

}  // namespace qgraph::cli
