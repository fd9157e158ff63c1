#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "mlelab/runner.hpp"

using namespace mlelab;
using Catch::Matchers::ContainsSubstring;

namespace fs = std::filesystem;

namespace {

const char* kSmokeConfig =
    "family = logistic\n"
    "theta0 = 0\n"
    "K.lo = -10\n"
    "K.hi = 10\n"
    "n_grid = 10 100\n"
    "replicates = 200\n"
    "epsilon = 0.1\n"
    "seed = 7\n"
    "out = smoke-out\n";

struct CmdResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out.good());
  out << content;
}

// Runs the built binary through the shell, capturing exit code and streams.
CmdResult run_cli(const std::string& scratch, const std::string& args,
                  const std::string& env_prefix = "") {
  const std::string so = scratch + "/cmd_stdout.txt";
  const std::string se = scratch + "/cmd_stderr.txt";
  const std::string cmd =
      env_prefix + (env_prefix.empty() ? "" : " ") + MLELAB_BIN_PATH + " " + args + " >" + so +
      " 2>" + se;
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(so);
  r.err = slurp(se);
  return r;
}

std::string fresh_scratch(const std::string& name) {
  const std::string dir = "cli_scratch/" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("finite-difference audit accepts every family's scores") {
  CHECK(score_fd_audit(Model(Family::gaussian_location, {1.0, 1.0, 0.0}, 0.0, {-10.0, 10.0})) <=
        1e-6);
  CHECK(score_fd_audit(Model(Family::logistic_location, {1.0, 1.0, 0.0}, 0.0, {-10.0, 10.0})) <=
        1e-6);
  CHECK(score_fd_audit(Model(Family::pearson_iv_location, {1.0, 1.0, 0.0}, 0.0, {-10.0, 10.0})) <=
        1e-6);
  CHECK(score_fd_audit(Model(Family::pearson_iv_location, {1.5, 2.0, -0.7}, 0.5, {-4.0, 4.0})) <=
        1e-6);
  CHECK(score_fd_audit(Model(Family::cauchy_scale, {1.0, 1.0, 0.0}, 1.0, {0.5, 4.0})) <= 1e-6);
}

TEST_CASE("manifest round-trips through json") {
  const std::string dir = fresh_scratch("manifest");
  RunManifest m;
  m.tool_version = kToolVersion;
  m.config_digest = "0123456789abcdef";
  m.cache_digest = "fedcba9876543210";
  m.t_simulate = 1.5;
  m.t_estimate = 0.25;
  m.t_write = 0.125;
  write_manifest(dir + "/manifest.json", m);
  const RunManifest back = read_manifest(dir + "/manifest.json");
  CHECK(back.tool_version == m.tool_version);
  CHECK(back.config_digest == m.config_digest);
  CHECK(back.cache_digest == m.cache_digest);
  CHECK(back.t_simulate == m.t_simulate);
  CHECK(back.t_estimate == m.t_estimate);
  CHECK(back.t_write == m.t_write);

  spit(dir + "/manifest.json", "{not json");
  CHECK_THROWS_WITH(read_manifest(dir + "/manifest.json"), ContainsSubstring("malformed"));
  CHECK_THROWS(read_manifest(dir + "/absent.json"));
}

TEST_CASE("run and verify agree bit for bit on every recomputed estimate") {
  const std::string dir = fresh_scratch("rerun_agree");
  ExperimentConfig cfg = parse_config(kSmokeConfig);
  cfg.epsilon_sweep = {0.999};
  cfg.out = dir + "/out";
  std::ostringstream sink;

  ConvergenceReport from_run;
  REQUIRE(run_experiment(cfg, 1, sink, &from_run) == 0);
  ConvergenceReport from_verify;
  REQUIRE(verify_experiment(cfg, sink, &from_verify) == 0);

  REQUIRE(from_run.rows.size() == 2);
  REQUIRE(from_verify.rows.size() == 2);
  CHECK(from_run.config_digest == config_digest(cfg));
  CHECK(from_run.config_digest == from_verify.config_digest);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(from_run.rows[i].kl_smoothed_knn.value == from_verify.rows[i].kl_smoothed_knn.value);
    CHECK(from_run.rows[i].kl_smoothed_kde.value == from_verify.rows[i].kl_smoothed_kde.value);
    CHECK(from_run.rows[i].var_raw == from_verify.rows[i].var_raw);
  }
  REQUIRE(from_run.debruijn.size() == from_verify.debruijn.size());
  for (std::size_t i = 0; i < from_run.debruijn.size(); ++i) {
    CHECK(from_run.debruijn[i].slack == from_verify.debruijn[i].slack);
  }
  CHECK(from_run.score_fd_max_rel == from_verify.score_fd_max_rel);

  // near-total smoothing pushes the divergence to its bias floor
  REQUIRE(from_run.sweep.size() == 1);
  CHECK(from_run.sweep[0].epsilon == 0.999);
  REQUIRE(from_run.sweep[0].rows.size() == 2);
  for (const SweepKl& s : from_run.sweep[0].rows) {
    CHECK(s.usable == 200);
    CHECK(std::abs(s.kl.value) < 0.15);
    CHECK(s.kl.value == from_verify.sweep[0].rows[s.n == 10 ? 0 : 1].kl.value);
  }
  CHECK(from_run.verdicts.size() == 9);
}

TEST_CASE("cli smoke run writes all four artifacts and reports verdicts") {
  const std::string dir = fresh_scratch("smoke");
  spit(dir + "/smoke.cfg", kSmokeConfig);
  const CmdResult r = run_cli(dir, "run --config " + dir + "/smoke.cfg --out " + dir + "/out");
  CHECK(r.code == 0);
  CHECK(fs::exists(dir + "/out/zn.znmx"));
  CHECK(fs::exists(dir + "/out/report.csv"));
  CHECK(fs::exists(dir + "/out/report.json"));
  CHECK(fs::exists(dir + "/out/manifest.json"));
  CHECK_THAT(r.out, ContainsSubstring("kl_smoothed"));
  CHECK_THAT(r.out, ContainsSubstring("[PASS] assumption-audit"));

  SECTION("csv schema is frozen") {
    const std::string csv = slurp(dir + "/out/report.csv");
    const std::string header = csv.substr(0, csv.find('\n'));
    CHECK(header ==
          "n,replicates,boundary_rate,m1,m2,m3,m4,m5,m6,m7,m8,"
          "m_stderr1,m_stderr2,m_stderr3,m_stderr4,m_stderr5,m_stderr6,m_stderr7,m_stderr8,"
          "C_hat,kl_smoothed,kl_smoothed_stderr,kl_raw,fisher_I,fisher_J,bobkov_total,"
          "debruijn_slack");
    // header plus one row per sample size; small runs mark moment columns skipped
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK_THAT(csv, ContainsSubstring("skip"));
  }

  SECTION("verify passes on intact artifacts and fails on tampering") {
    CmdResult v = run_cli(dir, "verify --config " + dir + "/smoke.cfg --out " + dir + "/out");
    CHECK(v.code == 0);
    CHECK_THAT(v.out, ContainsSubstring("[PASS]"));

    // flip one byte deep inside the replicate payload
    std::string cache = slurp(dir + "/out/zn.znmx");
    cache[cache.size() / 2] ^= 0x40;
    spit(dir + "/out/zn.znmx", cache);
    v = run_cli(dir, "verify --config " + dir + "/smoke.cfg --out " + dir + "/out");
    CHECK(v.code == 4);
    CHECK_THAT(v.out, ContainsSubstring("digest mismatch"));

    cache[cache.size() / 2] ^= 0x40;
    spit(dir + "/out/zn.znmx", cache);
    v = run_cli(dir, "verify --config " + dir + "/smoke.cfg --out " + dir + "/out");
    CHECK(v.code == 0);

    // editing the config after the run is also a digest mismatch
    spit(dir + "/smoke.cfg", std::string(kSmokeConfig) + "epsilon_sweep = 0.5\n");
    v = run_cli(dir, "verify --config " + dir + "/smoke.cfg --out " + dir + "/out");
    CHECK(v.code == 4);
  }

  SECTION("deleting the output directory and rerunning reproduces artifacts bit-exactly") {
    const std::string csv1 = slurp(dir + "/out/report.csv");
    const std::string cache1 = slurp(dir + "/out/zn.znmx");
    const std::string json1 = slurp(dir + "/out/report.json");
    fs::remove_all(dir + "/out");
    const CmdResult again =
        run_cli(dir, "run --config " + dir + "/smoke.cfg --out " + dir + "/out --workers 8");
    REQUIRE(again.code == 0);
    CHECK(slurp(dir + "/out/report.csv") == csv1);
    CHECK(slurp(dir + "/out/zn.znmx") == cache1);
    CHECK(slurp(dir + "/out/report.json") == json1);
  }
}

TEST_CASE("cli rejects invalid configuration with exit 2 and a field name") {
  const std::string dir = fresh_scratch("badcfg");

  spit(dir + "/boundary.cfg",
       "family = logistic\ntheta0 = 10\nK.lo = -10\nK.hi = 10\n"
       "n_grid = 10 100\nreplicates = 200\nseed = 7\nout = x\n");
  CmdResult r = run_cli(dir, "run --config " + dir + "/boundary.cfg");
  CHECK(r.code == 2);
  CHECK_THAT(r.err, ContainsSubstring("theta0"));

  spit(dir + "/unknown.cfg", std::string(kSmokeConfig) + "solver.newton_tole = 1\n");
  r = run_cli(dir, "run --config " + dir + "/unknown.cfg");
  CHECK(r.code == 2);
  CHECK_THAT(r.err, ContainsSubstring("solver.newton_tole"));

  r = run_cli(dir, "run --preset no-such-preset");
  CHECK(r.code == 2);
  CHECK_THAT(r.err, ContainsSubstring("no-such-preset"));

  r = run_cli(dir, "run");
  CHECK(r.code == 2);
  r = run_cli(dir, "run --config " + dir + "/unknown.cfg --preset logistic");
  CHECK(r.code == 2);
  r = run_cli(dir, "run --config " + dir + "/absent.cfg");
  CHECK(r.code == 2);

  r = run_cli(dir, "--help");
  CHECK(r.code == 0);
  CHECK_THAT(r.out, ContainsSubstring("run"));
}

TEST_CASE("cli maps runtime failures to exit 3") {
  const std::string dir = fresh_scratch("runtime");
  spit(dir + "/smoke.cfg", kSmokeConfig);

  // verify with no completed run present
  CmdResult r = run_cli(dir, "verify --config " + dir + "/smoke.cfg --out " + dir + "/nothing");
  CHECK(r.code == 3);
  CHECK_THAT(r.err, ContainsSubstring("no completed run"));

}

TEST_CASE("an uncreatable output directory is a config violation naming out") {
  const std::string dir = fresh_scratch("unwritable");
  spit(dir + "/smoke.cfg", kSmokeConfig);
  const CmdResult r = run_cli(dir, "run --config " + dir + "/smoke.cfg --out /proc/mlelab-denied/out");
  CHECK(r.code == 2);
  CHECK_THAT(r.err, ContainsSubstring("out"));
}

TEST_CASE("output directory precedence is flag over environment over config") {
  const std::string dir = fresh_scratch("outprec");
  spit(dir + "/smoke.cfg", kSmokeConfig);

  CmdResult r = run_cli(dir, "run --config " + dir + "/smoke.cfg",
                        "MLELAB_OUT=" + dir + "/env-out");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir + "/env-out/report.csv"));
  CHECK(!fs::exists("smoke-out"));

  r = run_cli(dir, "run --config " + dir + "/smoke.cfg --out " + dir + "/flag-out",
              "MLELAB_OUT=" + dir + "/env-ignored");
  REQUIRE(r.code == 0);
  CHECK(fs::exists(dir + "/flag-out/report.csv"));
  CHECK(!fs::exists(dir + "/env-ignored"));
}
