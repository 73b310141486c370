#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "quadrec/cli.hpp"

using namespace quadrec;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("quadrec_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_config(const std::string& name, const std::string& text) const {
    write_text(path(name), text);
    return path(name);
  }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "quadrec");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  json read_json(const std::string& p) const { return json::parse(read_text(p)); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

std::size_t data_rows(const std::string& csv) { return parse_csv(csv, "csv").rows.size(); }

const char* kSmallSparse = R"({
  "problem": {"n": 20, "k": 2, "m": 80, "seed": 3},
  "algorithm": {"name": "twf", "sparse": {"iterations": 2000}}
})";

const char* kSubspace = R"({
  "problem": {"n": 60, "k": 4, "m": 220, "seed": 5},
  "prior": {"kind": "subspace", "seed": 2, "radius": 2.0, "normalize": true},
  "algorithm": {"name": "pgd", "w0_correlation": 0.5, "pgd": {"mu": 0.9, "iterations": 10}}
})";

}  // namespace

TEST_F(CliTest, SimulateWritesRequestedRows) {
  const auto cfg = write_config("c.json", R"({"problem": {"n": 4, "k": 2, "m": 2, "seed": 1}})");
  ASSERT_EQ(run({"--config", cfg, "--out", path("sim"), "simulate"}), 0) << err_.str();
  EXPECT_EQ(data_rows(read_text(path("sim/y.csv"))), 2u);
  EXPECT_EQ(data_rows(read_text(path("sim/truth.csv"))), 4u);
  const json header = read_json(path("sim/ensemble.json"));
  EXPECT_EQ(header["n"], 4);
  EXPECT_EQ(header["m"], 2);
}

TEST_F(CliTest, SimulateIsByteIdentical) {
  const auto cfg = write_config("c.json", kSmallSparse);
  ASSERT_EQ(run({"--config", cfg, "--out", path("a"), "simulate"}), 0);
  ASSERT_EQ(run({"--config", cfg, "--out", path("b"), "simulate"}), 0);
  for (const char* f : {"truth.csv", "y.csv", "ensemble.json"})
    EXPECT_EQ(read_text(path(std::string("a/") + f)), read_text(path(std::string("b/") + f))) << f;
}

TEST_F(CliTest, SimulateZeroSparsityGivesZeros) {
  const auto cfg = write_config("c.json", R"({"problem": {"n": 5, "k": 0, "m": 3}})");
  ASSERT_EQ(run({"--config", cfg, "--out", path("z"), "simulate"}), 0);
  EXPECT_EQ(read_vector_csv(path("z/truth.csv"), "x"), Vector::Zero(5));
  EXPECT_EQ(read_vector_csv(path("z/y.csv"), "y"), Vector::Zero(3));
}

TEST_F(CliTest, SolveWithoutIterationsReturnsInitializer) {
  const auto cfg = write_config("c.json", R"({
    "problem": {"n": 20, "k": 2, "m": 80, "seed": 3},
    "algorithm": {"name": "twf", "sparse": {"iterations": 0}}
  })");
  ASSERT_EQ(run({"--config", cfg, "--out", path("d"), "simulate"}), 0);
  ASSERT_EQ(run({"solve", "--input", path("d")}), 0) << err_.str();
  const Vector est = read_vector_csv(path("d/estimate.csv"), "x");
  const auto ensemble = MeasurementEnsemble::sample(20, 80, read_json(path("d/ensemble.json"))["seed"]);
  const MeasurementSet set(ensemble, read_vector_csv(path("d/y.csv"), "y"));
  EXPECT_EQ(est, spectral_init(set, 0.5).x0);
  EXPECT_EQ(read_json(path("d/result.json"))["iterations"], 0);
}

TEST_F(CliTest, SolveRecoversSparseSignal) {
  const auto cfg = write_config("c.json", R"({"problem": {"n": 100, "k": 10, "m": 200, "seed": 1}})");
  ASSERT_EQ(run({"--config", cfg, "--out", path("d"), "simulate"}), 0);
  ASSERT_EQ(run({"solve", "--input", path("d")}), 0) << err_.str();
  const json r = read_json(path("d/result.json"));
  EXPECT_EQ(r["status"], "completed");
  EXPECT_LT(r["rel_dist"].get<double>(), 1e-3);
  EXPECT_EQ(r["config"]["problem"]["n"], 100);
  for (const char* key : {"status", "rel_dist", "cosine", "iterations", "wall_time_ms", "config"})
    EXPECT_TRUE(r.contains(key)) << key;
  EXPECT_EQ(data_rows(read_text(path("d/trace.csv"))), 4001u);
}

TEST_F(CliTest, PowerInitializationBeatsFlatStart) {
  const auto cfg = write_config("c.json", kSubspace);
  ASSERT_EQ(run({"--config", cfg, "--out", path("d"), "simulate"}), 0);
  ASSERT_EQ(run({"--config", cfg, "--out", path("flat"), "solve", "--input", path("d"), "--init", "flat"}), 0);
  ASSERT_EQ(run({"--config", cfg, "--out", path("pp"), "solve", "--input", path("d"), "--init", "ppower"}), 0);
  const double flat = read_json(path("flat/result.json"))["rel_dist"];
  const double pp = read_json(path("pp/result.json"))["rel_dist"];
  EXPECT_LE(pp, flat);
  EXPECT_LT(pp, 1e-3);
}

TEST_F(CliTest, SolveWithoutTruthLeavesMetricsEmpty) {
  const auto cfg = write_config("c.json", kSmallSparse);
  ASSERT_EQ(run({"--config", cfg, "--out", path("d"), "simulate"}), 0);
  fs::remove(path("d/truth.csv"));
  ASSERT_EQ(run({"solve", "--input", path("d")}), 0);
  EXPECT_TRUE(read_json(path("d/result.json"))["rel_dist"].is_null());
}

TEST_F(CliTest, SolveDivergenceExitsOne) {
  const auto cfg = write_config("c.json", R"({
    "problem": {"n": 20, "k": 2, "m": 80, "seed": 3},
    "algorithm": {"name": "wf", "sparse": {"mu": 1e6, "iterations": 200}}
  })");
  ASSERT_EQ(run({"--config", cfg, "--out", path("d"), "simulate"}), 0);
  EXPECT_EQ(run({"solve", "--input", path("d")}), 1);
  EXPECT_EQ(read_json(path("d/result.json"))["status"], "diverged");
}

TEST_F(CliTest, SolveMissingInputIsUsageError) {
  EXPECT_EQ(run({"solve", "--input", path("nothing")}), 2);
  EXPECT_NE(err_.str().find("missing input"), std::string::npos);
}

TEST_F(CliTest, GridSingleCell) {
  const auto cfg = write_config("c.json", R"({
    "problem": {"n": 20, "seed": 1},
    "algorithm": {"sparse": {"iterations": 200}},
    "experiment": {"k_values": [2], "m_values": [60], "trials": 1},
    "output": {"formats": ["csv"]}
  })");
  ASSERT_EQ(run({"--config", cfg, "--out", path("g"), "grid"}), 0) << err_.str();
  const CsvTable t = parse_csv(read_text(path("g/grid.csv")), "grid.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"k", "m", "success_rate", "trials"}));
  EXPECT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(data_rows(read_text(path("g/trials.csv"))), 1u);
  EXPECT_FALSE(fs::exists(path("g/grid.json")));
}

TEST_F(CliTest, GridPaperShape) {
  const auto cfg = write_config("c.json", R"({
    "problem": {"n": 100, "seed": 0},
    "algorithm": {"sparse": {"iterations": 1}},
    "experiment": {"k_values": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
                   "m_values": [25, 50, 75, 100, 125, 150, 175, 200], "trials": 1}
  })");
  ASSERT_EQ(run({"--config", cfg, "--out", path("g"), "grid"}), 0) << err_.str();
  EXPECT_EQ(data_rows(read_text(path("g/grid.csv"))), 80u);
  EXPECT_EQ(read_json(path("g/grid.json"))["cells"].size(), 80u);
}

TEST_F(CliTest, GridResumeMatchesUninterruptedRun) {
  const auto cfg = write_config("c.json", R"({
    "problem": {"n": 20, "seed": 4},
    "algorithm": {"sparse": {"iterations": 300}},
    "experiment": {"k_values": [1, 3], "m_values": [30, 60], "trials": 3}
  })");
  ASSERT_EQ(run({"--config", cfg, "--out", path("full"), "grid"}), 0);
  ASSERT_EQ(run({"--config", cfg, "--out", path("part"), "grid", "--stop-after-cells", "2"}), 0);
  EXPECT_FALSE(fs::exists(path("part/grid.csv")));
  EXPECT_EQ(run({"--config", cfg, "--out", path("part"), "grid"}), 2);
  ASSERT_EQ(run({"--config", cfg, "--out", path("part"), "grid", "--resume"}), 0);
  EXPECT_EQ(read_text(path("full/grid.csv")), read_text(path("part/grid.csv")));
}

TEST_F(CliTest, GridRequiresAxes) {
  const auto cfg = write_config("c.json", R"({"experiment": {"k_values": [10]}})");
  EXPECT_EQ(run({"--config", cfg, "--out", path("g"), "grid"}), 2);
  EXPECT_NE(err_.str().find("m_values"), std::string::npos);
}

TEST_F(CliTest, SweepWritesQuantiles) {
  const auto cfg = write_config("c.json", R"({
    "problem": {"n": 30, "k": 3, "seed": 2},
    "experiment": {"m_values": [20, 40], "trials": 2}
  })");
  ASSERT_EQ(run({"--config", cfg, "--out", path("s"), "sweep"}), 0);
  const CsvTable t = parse_csv(read_text(path("s/sweep.csv")), "sweep.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"m", "algo", "q25", "median", "q75"}));
  EXPECT_EQ(t.rows.size(), 4u);
}

TEST_F(CliTest, VerifyDefaultSeedPasses) {
  ASSERT_EQ(run({"--out", path("v"), "verify"}), 0) << out_.str();
  const json arr = json::parse(out_.str());
  ASSERT_TRUE(arr.is_array());
  EXPECT_EQ(arr.size(), 4u);
  for (const auto& r : arr) EXPECT_TRUE(r["pass"].get<bool>()) << r.dump();
  EXPECT_EQ(json::parse(read_text(path("v/verify.json"))), arr);
}

TEST_F(CliTest, VerifyCorruptedBoundFails) {
  const auto bounds = write_config("b.json", R"({
    "phi_half_width": 1e-9, "phi_seeds": 2, "support_seeds": 1,
    "expectation_seeds": 1, "expectation_required": 1
  })");
  EXPECT_EQ(run({"verify", "--bounds", bounds}), 1);
  const json arr = json::parse(out_.str());
  EXPECT_FALSE(arr[1]["pass"].get<bool>());
}

TEST_F(CliTest, UnknownKeyReportsLine) {
  const auto cfg = write_config("c.json", "{\n  \"problem\": {\n    \"n\": 4,\n    \"size\": 3\n  }\n}\n");
  EXPECT_EQ(run({"--config", cfg, "simulate"}), 2);
  EXPECT_NE(err_.str().find("c.json:4"), std::string::npos) << err_.str();
  EXPECT_NE(err_.str().find("problem.size"), std::string::npos) << err_.str();
}

TEST_F(CliTest, DuplicateKeyRejected) {
  const auto cfg = write_config("c.json", "{\"problem\": {\"n\": 4, \"n\": 5}}");
  EXPECT_EQ(run({"--config", cfg, "simulate"}), 2);
  EXPECT_NE(err_.str().find("duplicate"), std::string::npos) << err_.str();
}

TEST_F(CliTest, SyntaxErrorReportsLine) {
  const auto cfg = write_config("c.json", "{\n\"problem\": {\"n\": 4,}\n}");
  EXPECT_EQ(run({"--config", cfg, "simulate"}), 2);
  EXPECT_NE(err_.str().find("c.json:2"), std::string::npos) << err_.str();
}

TEST_F(CliTest, AlgorithmPriorMismatchRejected) {
  const auto cfg = write_config("c.json", R"({"algorithm": {"name": "pgd"}})");
  EXPECT_EQ(run({"--config", cfg, "simulate"}), 2);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"bogus"}), 2);
  EXPECT_EQ(run({"--workers", "0", "verify"}), 2);
  EXPECT_EQ(run({"--config", path("absent.json"), "simulate"}), 2);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(CliTest, BinaryExitCodes) {
  const std::string bin = QUADREC_CLI_PATH;
  const auto code = [](const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  EXPECT_EQ(code(bin + " --help"), 0);
  EXPECT_EQ(code(bin + " frobnicate"), 2);
  const auto cfg = write_config("c.json", R"({"problem": {"n": 4, "k": 1, "m": 3}})");
  EXPECT_EQ(code(bin + " --config " + cfg + " --out " + path("b") + " simulate"), 0);
  EXPECT_TRUE(fs::exists(path("b/y.csv")));
}
