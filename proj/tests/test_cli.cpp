#include <gtest/gtest.h>
#include <zlib.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "qgraph/cli/app.hpp"

namespace fs = std::filesystem;
using namespace qgraph;
using namespace qgraph::cli;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("qgpair-test-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

struct Invocation {
  int code;
  std::string out;
  std::string err;
};

Invocation qgpair(std::vector<std::string> args) {
  args.insert(args.begin(), "qgpair");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = qgpair_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

RunConfig gap_sweep_config() {
  RunConfig c;
  c.command = Command::gap_sweep;
  c.total_sites = 40;
  c.side_sites = 1;
  c.n_pairs = {1, 4, 7, 10, 13};
  c.g = {0.01};
  return c;
}

/// Star graph: one hub and `leaves` leaves, whose spectrum has a (leaves-1)-fold zero level.
fs::path star_edges(const fs::path& dir, int leaves) {
  std::string text = "N " + std::to_string(leaves + 1) + "\n";
  for (int i = 2; i <= leaves + 1; ++i) text += "1 " + std::to_string(i) + "\n";
  const auto p = dir / "star.txt";
  spit(p, text);
  return p;
}

}  // namespace

TEST(Config, SerializationRoundTripsExactly) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    RunConfig c;
    c.command = command_names[static_cast<std::size_t>(trial) % command_names.size()].first;
    c.total_sites = 10 + trial;
    c.side_sites = trial % 4;
    c.attach = {1, 2 + trial % 5};
    c.boundary = trial % 2 ? Boundary::open : Boundary::periodic;
    c.hopping = 1.0 + std::abs(u(rng));
    c.kind = trial % 3 ? Interaction::bcs : Interaction::hubbard;
    c.g = {u(rng), 1.0 / 3.0, u(rng) * 1e-7};
    if (trial % 2) c.g_grid = Grid{u(rng), u(rng), trial};
    c.n_pairs = {1, trial};
    c.output_dir = "out dir/" + std::to_string(trial);
    c.format = trial % 2 ? Format::json : Format::csv;
    c.workers = trial % 3;
    c.tolerance = std::abs(u(rng)) * 1e-12;
    c.bin_width = 0.01 + std::abs(u(rng));
    std::istringstream in(serialize_config(c));
    EXPECT_EQ(parse_config(in), c) << serialize_config(c);
  }
}

TEST(Config, ShortestExactFormatting) {
  EXPECT_EQ(format_exact(0.1), "0.1");
  EXPECT_EQ(format_exact(0.005), "0.005");
  EXPECT_EQ(format_exact(40.0), "40");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng);
    EXPECT_EQ(std::strtod(format_exact(v).c_str(), nullptr), v);
  }
}

TEST(Config, ParsesCommentsListsAndShortKeys) {
  std::istringstream in(
      "# side-site chain family\n"
      "command = gap-sweep\n"
      "N = 40   # total sites\n"
      "m = 1\n"
      "np = 1, 4, 7\n"
      "g_grid = 0.005:0.01:3\n"
      "\n");
  const auto c = parse_config(in);
  EXPECT_EQ(c.command, Command::gap_sweep);
  EXPECT_EQ(c.side_sites, 1);
  EXPECT_EQ(c.n_pairs, (std::vector<int>{1, 4, 7}));
  EXPECT_EQ(c.couplings(), (std::vector<double>{0.005, 0.0075, 0.01}));
}

TEST(Config, ReportsEveryMalformedLine) {
  std::istringstream in("command = nope\nN = forty\nno equals sign\nbogus = 1\ng = 0.1,x\n");
  try {
    parse_config(in);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    ASSERT_EQ(e.problems().size(), 5u);
    EXPECT_TRUE(contains(e.problems(), "line 1: command: unknown command"));
    EXPECT_TRUE(contains(e.problems(), "line 2: N: expected an integer"));
    EXPECT_TRUE(contains(e.problems(), "line 3: expected key = value"));
    EXPECT_TRUE(contains(e.problems(), "line 4: unknown key 'bogus'"));
    EXPECT_TRUE(contains(e.problems(), "line 5: g:"));
  }
}

TEST(Config, DefaultOutputDirectoryFromEnvironment) {
  ::setenv("QGPAIR_OUTPUT_DIR", "/tmp/from-env", 1);
  EXPECT_EQ(RunConfig{}.output_dir, "/tmp/from-env");
  ::unsetenv("QGPAIR_OUTPUT_DIR");
  EXPECT_EQ(RunConfig{}.output_dir, "qgpair-out");
}

TEST(Validate, AttachPositionOutOfRange) {
  const auto dir = scratch("validate-attach");
  spit(dir / "c.cfg", "command = spectrum\nN = 40\nm = 1\nn = 40\n");
  const auto problems = validate(dir / "c.cfg");
  EXPECT_TRUE(contains(problems, "attach_pos out of range 1..39"));
  const auto r = qgpair({"validate", (dir / "c.cfg").string()});
  EXPECT_EQ(r.code, exit_config);
  EXPECT_NE(r.err.find("attach_pos out of range 1..39"), std::string::npos);
}

TEST(Validate, PeriodicWithSideSites) {
  const auto dir = scratch("validate-periodic");
  spit(dir / "c.cfg", "command = twobody\nN = 40\nm = 1\nboundary = periodic\ng = 0.01\n");
  EXPECT_TRUE(contains(validate(dir / "c.cfg"), "periodic boundary requires m=0"));
}

TEST(Validate, WellFormedGapSweepConfigIsOk) {
  const auto dir = scratch("validate-ok");
  auto c = gap_sweep_config();
  c.output_dir = (dir / "out").string();
  spit(dir / "c.cfg", serialize_config(c));
  EXPECT_TRUE(validate(dir / "c.cfg").empty());
  const auto r = qgpair({"validate", (dir / "c.cfg").string()});
  EXPECT_EQ(r.code, exit_ok);
  EXPECT_EQ(r.out, "ok\n");
  EXPECT_FALSE(fs::exists(dir / "out"));  // validation computes nothing
}

TEST(Validate, ListsEveryViolation) {
  RunConfig c = gap_sweep_config();
  c.n_pairs = {0, 40};
  c.g.clear();
  c.kind = Interaction::hubbard;
  c.tolerance = 1.0;
  c.workers = -1;
  c.boundary = Boundary::periodic;
  const auto p = config_violations(c);
  EXPECT_TRUE(contains(p, "n_p out of range 1..39 (got 0)"));
  EXPECT_TRUE(contains(p, "n_p out of range 1..39 (got 40)"));
  EXPECT_TRUE(contains(p, "command needs at least one g value"));
  EXPECT_TRUE(contains(p, "BCS interaction only"));
  EXPECT_TRUE(contains(p, "tolerance"));
  EXPECT_TRUE(contains(p, "workers"));
  EXPECT_TRUE(contains(p, "periodic boundary requires m=0"));
}

TEST(Validate, UnreadableFile) {
  const auto p = validate("/nonexistent/qgpair.cfg");
  ASSERT_EQ(p.size(), 1u);
  EXPECT_NE(p[0].find("cannot read"), std::string::npos);
}

TEST(Validate, PairBasisLimit) {
  RunConfig c;
  c.command = Command::occupations;
  c.total_sites = 40;
  c.n_pairs = {20};
  c.g = {0.1};
  EXPECT_TRUE(contains(config_violations(c), "exact-diagonalisation limit"));
}

TEST(Table, CsvAndJsonRenderings) {
  Table t({"n", "g_K", "status"});
  t.add(1, 0.25, "ok");
  t.add(2, std::numeric_limits<double>::quiet_NaN(), "failed");
  EXPECT_EQ(to_csv(t), "n,g_K,status\n1,0.25,ok\n2,nan,failed\n");
  const auto j = nlohmann::json::parse(to_json(t));
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["n"], 1);
  EXPECT_DOUBLE_EQ(j[0]["g_K"].get<double>(), 0.25);
  EXPECT_TRUE(j[1]["g_K"].is_null());
  EXPECT_EQ(j[1]["status"], "failed");
}

TEST(Run, WritesOutputsAndChecksummedManifest) {
  const auto dir = scratch("run-manifest");
  const auto r = qgpair({"twobody", "--chain", "N=12", "--g", "0.05", "--output-dir", dir.string()});
  ASSERT_EQ(r.code, exit_ok) << r.err;
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["tool"], "qgpair");
  EXPECT_EQ(m["version"], tool_version);
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["config"]["N"], "12");
  EXPECT_EQ(m["config"]["g"], "0.05");
  EXPECT_GE(m["wall_clock_seconds"].get<double>(), 0.0);
  ASSERT_EQ(m["outputs"].size(), 3u);
  for (const auto& o : m["outputs"]) {
    const auto data = slurp(dir / o["file"].get<std::string>());
    EXPECT_EQ(o["bytes"].get<std::size_t>(), data.size());
    char crc[9];
    std::snprintf(crc, sizeof crc, "%08lx",
                  ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
    EXPECT_EQ(o["crc32"], crc);
    EXPECT_EQ(data.find('\r'), std::string::npos);
    EXPECT_EQ(data.back(), '\n');
  }
  for (const auto& entry : fs::directory_iterator(dir)) EXPECT_NE(entry.path().extension(), ".tmp");
}

TEST(Run, TablesCarryUnitsAndAgreeWithLibrary) {
  const auto dir = scratch("run-values");
  ASSERT_EQ(qgpair({"twobody", "--chain", "40", "--g", "0.05", "--output-dir", dir.string()}).code, exit_ok);
  const auto summary = slurp(dir / "twobody_summary.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "g_K,ground_K,depairing_K,xi_C_sites");
  const auto spectrum = slurp(dir / "twobody_spectrum.csv");
  EXPECT_NE(spectrum.find("symmetric,1,-4.4435307938"), std::string::npos);
}

TEST(Run, IdenticalConfigsGiveByteIdenticalOutputs) {
  const auto a = scratch("run-det-a"), b = scratch("run-det-b");
  const std::vector<std::string> common{"gap-sweep", "--chain", "N=10,m=1", "--np", "1,2,3", "--g", "0.01,0.05"};
  auto args_a = common, args_b = common;
  args_a.insert(args_a.end(), {"--workers", "1", "--output-dir", a.string()});
  args_b.insert(args_b.end(), {"--workers", "4", "--output-dir", b.string()});
  ASSERT_EQ(qgpair(args_a).code, exit_ok);
  ASSERT_EQ(qgpair(args_b).code, exit_ok);
  EXPECT_EQ(slurp(a / "gap_sweep.csv"), slurp(b / "gap_sweep.csv"));
  const auto ma = nlohmann::json::parse(slurp(a / "manifest.json"));
  const auto mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  EXPECT_EQ(ma["outputs"], mb["outputs"]);
}

TEST(Run, JsonFormat) {
  const auto dir = scratch("run-json");
  ASSERT_EQ(qgpair({"spectrum", "--chain", "5", "--format", "json", "--output-dir", dir.string()}).code, exit_ok);
  const auto j = nlohmann::json::parse(slurp(dir / "spectrum.json"));
  ASSERT_EQ(j.size(), 5u);
  EXPECT_EQ(j[0]["index"], 1);
  EXPECT_NEAR(j[0]["energy_K"].get<double>(), -std::sqrt(3.0), 1e-12);
}

TEST(Run, FlagsOverrideConfigFile) {
  const auto dir = scratch("run-override");
  spit(dir / "c.cfg", "command = spectrum\nN = 30\nformat = json\noutput_dir = " + (dir / "file").string() + "\n");
  const auto r = qgpair({"spectrum", "--config", (dir / "c.cfg").string(), "--chain", "N=6", "--format", "csv",
                         "--output-dir", (dir / "flag").string()});
  ASSERT_EQ(r.code, exit_ok) << r.err;
  EXPECT_FALSE(fs::exists(dir / "file"));
  const auto csv = slurp(dir / "flag" / "spectrum.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Run, DepairingSweepSummarisesEnhancement) {
  const auto dir = scratch("run-depairing");
  ASSERT_EQ(qgpair({"sweep-depairing", "--chain", "N=12,m=1", "--g", "0.01,0.02", "--output-dir", dir.string()}).code,
            exit_ok);
  const auto sweep = slurp(dir / "depairing_sweep.csv");
  EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 1 + 11 * 2);
  const auto summary = slurp(dir / "depairing_eta.csv");
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "g_K,max_depairing_K,argmax_n,chain_depairing_K,eta");
  EXPECT_EQ(std::count(summary.begin(), summary.end(), '\n'), 3);
}

TEST(Run, BcsFitWritesCubic) {
  const auto dir = scratch("run-bcs");
  ASSERT_EQ(qgpair({"bcs-fit", "--chain", "N=8", "--np", "4", "--g-grid", "0.01:0.2:6", "--output-dir", dir.string()})
                .code,
            exit_ok);
  const auto cubic = slurp(dir / "bcs_cubic.csv");
  EXPECT_EQ(cubic.substr(0, cubic.find('\n')), "a1,a2,a3,rms,points");
}

TEST(Run, OccupationsSumToPairNumber) {
  const auto dir = scratch("run-occ");
  ASSERT_EQ(qgpair({"occupations", "--chain", "N=8", "--np", "3", "--g", "0.2", "--format", "json", "--output-dir",
                    dir.string()})
                .code,
            exit_ok);
  const auto rows = nlohmann::json::parse(slurp(dir / "occupations.json"));
  double sum = 0.0;
  for (const auto& r : rows) sum += r["nu"].get<double>();
  EXPECT_NEAR(sum, 3.0, 1e-10);
}

TEST(Run, RemainingCommandsSucceed) {
  const auto dir = scratch("run-misc");
  EXPECT_EQ(qgpair({"dos", "--chain", "10", "--g", "0.1", "--output-dir", (dir / "dos").string()}).code, exit_ok);
  EXPECT_EQ(qgpair({"pdist", "--chain", "10", "--g", "0.1", "--output-dir", (dir / "p").string()}).code, exit_ok);
  EXPECT_EQ(qgpair({"coherence", "--chain", "10", "--g", "0,0.1", "--output-dir", (dir / "c").string()}).code,
            exit_ok);
  EXPECT_EQ(qgpair({"richardson-gap", "--chain", "10", "--np", "2,5", "--g", "0.1", "--output-dir",
                    (dir / "r").string()})
                .code,
            exit_ok);
  const auto pd = slurp(dir / "p" / "pdist.csv");
  EXPECT_EQ(pd.substr(0, pd.find('\n')), "r,P_ground,P_first_excited,cumulative_ground,cumulative_first_excited");
}

TEST(Run, EdgeListGraph) {
  const auto dir = scratch("run-edges");
  const auto edges = star_edges(dir, 4);
  ASSERT_EQ(qgpair({"spectrum", "--edges", edges.string(), "--output-dir", dir.string()}).code, exit_ok);
  const auto csv = slurp(dir / "spectrum.csv");
  EXPECT_NE(csv.find("1,-2\n"), std::string::npos);  // star with 4 leaves: -sqrt(4)
}

TEST(ExitCodes, ConfigErrorsAreTwo) {
  EXPECT_EQ(qgpair({}).code, exit_config);
  const auto unknown = qgpair({"frobnicate"});
  EXPECT_EQ(unknown.code, exit_config);
  EXPECT_NE(unknown.err.find("unknown command 'frobnicate'"), std::string::npos);
  EXPECT_EQ(qgpair({"spectrum", "--chain", "N=40,m=1,n=40"}).code, exit_config);
  EXPECT_EQ(qgpair({"spectrum", "--no-such-flag"}).code, exit_config);
  EXPECT_EQ(qgpair({"gap-sweep", "--chain", "N=10,m=1"}).code, exit_config);  // no n_p, no g
}

TEST(ExitCodes, HelpIsZero) {
  const auto r = qgpair({"--help"});
  EXPECT_EQ(r.code, exit_ok);
  EXPECT_NE(r.out.find("gap-sweep"), std::string::npos);
}

// Repulsive coupling on a multiply degenerate level lies outside the
// continuation's reach, which makes it a deterministic failing point.
TEST(ExitCodes, FailedSweepPointsAreRecordedAndGiveThree) {
  const auto dir = scratch("run-fail");
  const auto edges = star_edges(dir, 6);
  const auto r = qgpair({"richardson-gap", "--edges", edges.string(), "--np", "2", "--g=0.1,-1", "--output-dir",
                         (dir / "out").string()});
  EXPECT_EQ(r.code, exit_solver);
  EXPECT_NE(r.err.find("failed at n_p=2 g=-1"), std::string::npos);
  const auto m = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(m["status"], "partial");
  ASSERT_EQ(m["failures"].size(), 1u);
  EXPECT_EQ(m["failures"][0]["point"], "n_p=2 g=-1");
  const auto csv = slurp(dir / "out" / "richardson_gap.csv");
  EXPECT_NE(csv.find("2,0.1,"), std::string::npos);
  EXPECT_NE(csv.find(",failed\n"), std::string::npos);
}
