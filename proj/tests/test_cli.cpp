// End-to-end checks of the command-line tool: config parsing, output
// formats, exit-status contract, and cross-worker determinism.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "tsdde/config.hpp"
#include "tsdde/presets.hpp"

using namespace tsdde;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

struct RunResult {
  int status;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  std::string out_path = "/tmp/tsdde_test_stdout.txt";
  std::string err_path = "/tmp/tsdde_test_stderr.txt";
  std::string cmd =
      std::string(TSDDE_CLI_PATH) + " " + args + " > " + out_path + " 2> " + err_path;
  int rc = std::system(cmd.c_str());
  RunResult r;
  r.status = WEXITSTATUS(rc);
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  return r;
}

}  // namespace

TEST_CASE("config parsing") {
  RunConfig cfg = parse_run_config_text(
      "# a comment\n"
      "[run]\n"
      "scale = interval -1 20\n"
      "A = 0.5\n"
      "alpha = t - 1\n"
      "t0 = 0\n"
      "horizon = 20\n"
      "h_max = 0.01\n"
      "s_samples = 12\n"
      "x0 = 0.25\n"
      "phi = 1 + t\n"
      "parallel = 3\n"
      "margin = 0.05\n"
      "out = /tmp/xyz.csv\n");
  CHECK(cfg.scale_text == "interval -1 20");
  CHECK(cfg.a_src == "0.5");
  CHECK(cfg.alpha_src == "t - 1");
  CHECK(cfg.t0 == 0.0);
  CHECK(cfg.h_max == 0.01);
  CHECK(cfg.s_samples == 12);
  CHECK(cfg.x0 == 0.25);
  CHECK(cfg.phi_src == "1 + t");
  CHECK(cfg.parallel == 3);
  CHECK(cfg.margin == 0.05);
  CHECK(cfg.out_path == "/tmp/xyz.csv");

  CHECK_THROWS_AS(parse_run_config_text("scale = interval 0 1\nwhatever = yes\n"), Error);
  CHECK_THROWS_AS(parse_run_config_text("just a line without equals\n"), Error);

  // preset expansion with parameter overrides
  RunConfig preset = parse_run_config_text("preset = example_5_1\na = 0.75\nh_max = 0.02\n");
  CHECK(preset.preset == "example_5_1");
  CHECK(preset.h_max == 0.02);
  CHECK(preset.a_src.find("0.75") != std::string::npos);

  CHECK_THROWS_AS(parse_run_config_text("preset = not_a_thing\n"), Error);
}

TEST_CASE("17-digit float formatting round-trips") {
  for (double v : {1.0 / 3.0, 0.1, 123456.789, 1e-300, -2.5e17}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("simulate: constant column when the coefficient vanishes") {
  spit("/tmp/tsdde_a0.cfg",
       "scale = interval -1 5\nA = 0\nalpha = t - 1\nt0 = 0\nh_max = 0.5\nx0 = 0.75\n");
  RunResult r = run_cli("simulate --config /tmp/tsdde_a0.cfg");
  CHECK(r.status == 0);
  std::istringstream rows(r.out);
  std::string line;
  std::getline(rows, line);
  CHECK(line == "t,x");
  int count = 0;
  while (std::getline(rows, line)) {
    auto comma = line.find(',');
    CHECK(line.substr(comma + 1) == "0.75");
    ++count;
  }
  CHECK(count >= 10);
}

TEST_CASE("simulate honors the preset row the examples fix") {
  spit("/tmp/tsdde_ex21.cfg", "preset = example_2_1\n");
  RunResult r = run_cli("simulate --config /tmp/tsdde_ex21.cfg");
  CHECK(r.status == 0);
  double x60 = -1.0;
  std::istringstream rows(r.out);
  std::string line;
  while (std::getline(rows, line))
    if (line.rfind("60,", 0) == 0) x60 = std::stod(line.substr(3));
  double e = std::exp(1.0);
  CHECK(x60 == doctest::Approx(e / (e - 1.0)).epsilon(1e-9));
}

TEST_CASE("exit-status contract") {
  // 2: config errors, with a single-line machine-readable diagnostic
  spit("/tmp/tsdde_bad.cfg", "scale = interval 0 5\nA = 0.5 +\nalpha = t\nt0 = 0\n");
  RunResult bad = run_cli("simulate --config /tmp/tsdde_bad.cfg");
  CHECK(bad.status == 2);
  CHECK(bad.err.rfind("ERROR ", 0) == 0);
  CHECK(bad.err.find("column") != std::string::npos);
  CHECK(bad.err.find('\n') == bad.err.size() - 1);  // one line

  RunResult missing = run_cli("simulate");
  CHECK(missing.status == 2);

  RunResult unknown = run_cli("verify-example bogus");
  CHECK(unknown.status == 2);
  CHECK(unknown.err.find("UnknownExample") != std::string::npos);

  // 3: numeric failures (delay ahead of t)
  spit("/tmp/tsdde_ahead.cfg",
       "scale = generator integers from -1 upto 10\nA = 0.5\nalpha = t + 1\nt0 = 0\nh_max = 1\n");
  RunResult ahead = run_cli("simulate --config /tmp/tsdde_ahead.cfg");
  CHECK(ahead.status == 3);
  CHECK(ahead.err.find("DelayAheadError") != std::string::npos);

  // 0 for any verdict, including Inconclusive
  spit("/tmp/tsdde_incl.cfg", "preset = example_2_1\nh_max = 0.05\nhorizon = 31\n");
  RunResult incon = run_cli("classify --config /tmp/tsdde_incl.cfg");
  CHECK(incon.status == 0);
  CHECK(incon.out.find("verdict = Inconclusive") != std::string::npos);
}

TEST_CASE("list and verify subcommands") {
  RunResult names = run_cli("list-examples");
  CHECK(names.status == 0);
  CHECK(names.out.find("example_2_1") != std::string::npos);
  CHECK(names.out.find("pantograph") != std::string::npos);

  RunResult verify = run_cli("verify-example eigen_sharpness");
  CHECK(verify.status == 0);
  CHECK(verify.out.find("PASS eigen_sharpness.modulus_triple") != std::string::npos);
}

TEST_CASE("fundamental output shape and determinism across workers") {
  spit("/tmp/tsdde_fund.cfg",
       "scale = interval -2 12\nA = 0.3\nalpha = t - 2\nt0 = 0\nh_max = 0.05\ns_samples = 8\n");
  RunResult one = run_cli(
      "fundamental --config /tmp/tsdde_fund.cfg --parallel 1 --out /tmp/tsdde_f1.csv");
  RunResult four = run_cli(
      "fundamental --config /tmp/tsdde_fund.cfg --parallel 4 --out /tmp/tsdde_f4.csv");
  CHECK(one.status == 0);
  CHECK(four.status == 0);
  CHECK(slurp("/tmp/tsdde_f1.csv") == slurp("/tmp/tsdde_f4.csv"));
  CHECK(slurp("/tmp/tsdde_f1_summary.csv") == slurp("/tmp/tsdde_f4_summary.csv"));

  std::string longf = slurp("/tmp/tsdde_f1.csv");
  CHECK(longf.rfind("s,t,X\n", 0) == 0);
  std::string summary = slurp("/tmp/tsdde_f1_summary.csv");
  CHECK(summary.rfind("s,max_abs_X,decay_fit_lambda\n", 0) == 0);

  // every diagonal row carries X = 1
  std::istringstream rows(longf);
  std::string line;
  std::getline(rows, line);
  bool saw_diag = false;
  while (std::getline(rows, line)) {
    auto c1 = line.find(','), c2 = line.find(',', c1 + 1);
    if (line.substr(0, c1) == line.substr(c1 + 1, c2 - c1 - 1)) {
      CHECK(line.substr(c2 + 1) == "1");
      saw_diag = true;
    }
  }
  CHECK(saw_diag);
}

TEST_CASE("classify determinism across workers") {
  spit("/tmp/tsdde_cls.cfg", "preset = example_5_3\n");
  RunResult one = run_cli("classify --config /tmp/tsdde_cls.cfg --parallel 1");
  RunResult four = run_cli("classify --config /tmp/tsdde_cls.cfg --parallel 4");
  CHECK(one.status == 0);
  CHECK(one.out == four.out);
  CHECK(one.out.find("verdict = UniformlyExponentiallyStable") != std::string::npos);
}

TEST_CASE("flag overrides land in the run") {
  spit("/tmp/tsdde_flags.cfg",
       "scale = interval -2 $T\nA = 0.3\nalpha = t - 1\nt0 = 0\nhorizon = 10\nh_max = 0.5\n");
  RunResult r = run_cli("simulate --config /tmp/tsdde_flags.cfg --horizon 6 --step 0.25");
  CHECK(r.status == 0);
  // last row ends at the overridden horizon
  std::istringstream rows(r.out);
  std::string line, last;
  while (std::getline(rows, line))
    if (!line.empty()) last = line;
  CHECK(last.rfind("6,", 0) == 0);
}
