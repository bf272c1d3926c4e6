#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>

#include "kamreduce/run_config.hpp"

using namespace kamreduce;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("kamreduce_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const char* kReduceTrivial = R"json({
  "command": "reduce",
  "omega": [1, "golden"],
  "system": {
    "A": [[0, -0.8], [0.8, 0]],
    "F": {"dim": 2, "target": "sl(2,R)"}
  },
  "driver": {"jmax": 4, "rho_T": 500.0},
  "seed": 7,
  "emit": "both"
})json";

}  // namespace

TEST_CASE("run_config: trivial reduce reports reducible with exit 0") {
  auto dir = temp_dir("reduce0");
  RunConfig cfg;
  cfg.root = Json::parse(kReduceTrivial);
  cfg.command = "reduce";
  cfg.out_dir = dir;
  cfg.emit = "both";
  cfg.seed = 7;
  CHECK(run_config(cfg) == 0);
  Json rep = Json::parse(read_text(dir / "report.json"));
  CHECK(rep["reduction"]["verdict"] == "reducible");
  CHECK(rep["seed"] == 7);
  // the resolved config is embedded verbatim
  CHECK(rep["config"]["omega"][1] == "golden");
  CHECK(fs::exists(dir / "convergence.csv"));
}

TEST_CASE("run_config: rotnum row for the free lambda = 4 cocycle") {
  auto dir = temp_dir("rotnum");
  RunConfig cfg;
  cfg.root = Json::parse(R"json({
    "omega": [1, "golden"],
    "schrodinger": {"V": {"dim": 2, "target": "gl(1,R)"}, "lambda": 4.0},
    "rotnum": {"T": 2000.0, "h": 2e-3, "trace_stride": 200}
  })json");
  cfg.command = "rotnum";
  cfg.out_dir = dir;
  cfg.emit = "both";
  CHECK(run_config(cfg) == 0);
  Json rep = Json::parse(read_text(dir / "report.json"));
  CHECK(std::abs(rep["rotnum"]["rho"].get<double>() - 2.0) < 1e-5);
  std::string csv = read_text(dir / "rotnum.csv");
  CHECK(csv.find("T,h,rho") == 0);
  CHECK(fs::exists(dir / "trace.csv"));
}

TEST_CASE("run_config: determinism, byte-identical outputs for fixed config") {
  auto dir_a = temp_dir("det_a");
  auto dir_b = temp_dir("det_b");
  for (auto* dir : {&dir_a, &dir_b}) {
    RunConfig cfg;
    cfg.root = Json::parse(kReduceTrivial);
    cfg.root["system"]["F"]["cos_modes"] = Json::array();
    cfg.root["system"]["F"]["cos_modes"].push_back(
        {{"m", {1, 0}}, {"coeff", {{0.0, 1e-6}, {1e-6, 0.0}}}});
    cfg.command = "reduce";
    cfg.out_dir = *dir;
    cfg.emit = "both";
    cfg.seed = 7;
    REQUIRE(run_config(cfg) == 0);
  }
  CHECK(read_text(dir_a / "report.json") == read_text(dir_b / "report.json"));
  CHECK(read_text(dir_a / "convergence.csv") == read_text(dir_b / "convergence.csv"));
}

TEST_CASE("run_config: smooth-test and lemma-check emit their tables") {
  auto dir = temp_dir("smooth");
  RunConfig cfg;
  cfg.root = Json::parse(R"json({
    "system": {"F": {"dim": 1, "target": "sl(2,R)",
      "cos_modes": [{"m": [1], "coeff": [[0, 1], [1, 0]]},
                     {"m": [9], "coeff": [[0, 1e-9], [1e-9, 0]]}]}},
    "smooth": {"k": 6, "J": 8}
  })json");
  cfg.command = "smooth-test";
  cfg.out_dir = dir;
  cfg.emit = "both";
  CHECK(run_config(cfg) == 0);
  std::string csv = read_text(dir / "suite.csv");
  CHECK(csv.find("j,ck_dist") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);  // j = 2..8 plus header

  auto dir2 = temp_dir("lemma");
  RunConfig cfg2;
  cfg2.root = Json::parse(R"json({"lemma": {"C": 0.5, "D": 10, "k": 4, "jmax": 100}})json");
  cfg2.command = "lemma-check";
  cfg2.out_dir = dir2;
  cfg2.emit = "json";
  CHECK(run_config(cfg2) == 0);
  Json rep = Json::parse(read_text(dir2 / "report.json"));
  CHECK(rep["lemma"]["holds"] == false);
  CHECK(rep["lemma"]["first_violation"] == 2);
}

TEST_CASE("run_config: step-probe reports the step diagnostics") {
  auto dir = temp_dir("probe");
  RunConfig cfg;
  cfg.root = Json::parse(R"json({
    "omega": [1, "golden"],
    "system": {
      "A": [[0, -0.8], [0.8, 0]],
      "F": {"dim": 2, "target": "sl(2,R)",
            "cos_modes": [{"m": [1,0], "coeff": [[0.3, 1.0], [0.7, -0.3]]}],
            "scale_analytic": {"r": 0.5, "to": 1e-5}}
    },
    "step": {"r": 0.5, "r_out": 0.3333333333333333, "gate": "practical"}
  })json");
  cfg.command = "step-probe";
  cfg.out_dir = dir;
  cfg.emit = "json";
  CHECK(run_config(cfg) == 0);
  Json rep = Json::parse(read_text(dir / "report.json"));
  CHECK(rep["step"]["eps_in"].get<double>() == Catch::Approx(1e-5));
  CHECK(rep["step"]["conjugacy_residual"].get<double>() < 1e-9);
  CHECK(rep["step"]["resonance"] == "none");
  CHECK(rep["step"]["contraction_exponent"].get<double>() > 1.8);
}

TEST_CASE("run_config: unknown command and bad files raise config errors") {
  RunConfig cfg;
  cfg.root = Json::object();
  cfg.command = "noop";
  cfg.out_dir = temp_dir("bad");
  CHECK_THROWS_AS(run_config(cfg), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/path.json"), ConfigError);
}

TEST_CASE("cli binary: end-to-end subprocess run") {
  auto dir = temp_dir("subproc");
  write_text(dir / "cfg.json", kReduceTrivial);
  std::string cmd = std::string(KAMREDUCE_CLI_PATH) + " reduce --config " +
                    (dir / "cfg.json").string() + " --out " + (dir / "out").string() +
                    " --emit json > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  CHECK(rc == 0);
  CHECK(fs::exists(dir / "out" / "report.json"));
  // almost_reducible style verdicts keep exit 0; config errors do not
  std::string bad = std::string(KAMREDUCE_CLI_PATH) +
                    " reduce --config /nonexistent.json > /dev/null 2>&1";
  CHECK(std::system(bad.c_str()) != 0);
}
