// Command-line front end: simulate the delay equation, sample its
// fundamental solution, classify stability, and re-verify the bundled
// examples. See README.md for the config format.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "tsdde/presets.hpp"
#include "tsdde/stability.hpp"

namespace {

using namespace tsdde;

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::BadConfig:
    case ErrorCode::SyntaxError:
    case ErrorCode::UnknownIdentifier:
    case ErrorCode::UnknownExample:
    case ErrorCode::BadTheta:
      return 2;
    default:
      return 3;  // numeric failure
  }
}

[[noreturn]] void fail(const Error& e) {
  std::cerr << "ERROR " << error_code_name(e.code()) << ": " << e.what() << std::endl;
  std::exit(exit_code_for(e));
}

struct CommonFlags {
  std::string config_path;
  std::optional<double> horizon;
  std::optional<double> step;
  std::optional<std::size_t> s_samples;
  std::optional<std::string> out;
  std::optional<int> parallel;
  std::optional<double> margin;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "run configuration file");
  cmd->add_option("--horizon", [&flags](const CLI::results_t& r) {
    flags.horizon = std::stod(r[0]);
    return true;
  }, "working horizon override");
  cmd->add_option("--step", [&flags](const CLI::results_t& r) {
    flags.step = std::stod(r[0]);
    return true;
  }, "max dense-grid step override");
  cmd->add_option("--s-samples", [&flags](const CLI::results_t& r) {
    flags.s_samples = static_cast<std::size_t>(std::stoul(r[0]));
    return true;
  }, "cap on dense start-point columns");
  cmd->add_option("--out", [&flags](const CLI::results_t& r) {
    flags.out = r[0];
    return true;
  }, "output path");
  cmd->add_option("--parallel", [&flags](const CLI::results_t& r) {
    flags.parallel = std::stoi(r[0]);
    return true;
  }, "worker count");
  cmd->add_option("--margin", [&flags](const CLI::results_t& r) {
    flags.margin = std::stod(r[0]);
    return true;
  }, "strictness margin for the < 1 window tests");
}

RunConfig load_config(const CommonFlags& flags) {
  if (flags.config_path.empty())
    throw Error(ErrorCode::BadConfig, "this subcommand needs --config <path>");
  RunConfig cfg = parse_run_config_file(flags.config_path);
  if (flags.horizon) cfg.horizon = *flags.horizon;
  if (flags.step) cfg.h_max = *flags.step;
  if (flags.s_samples) cfg.s_samples = *flags.s_samples;
  if (flags.out) cfg.out_path = *flags.out;
  if (flags.parallel) cfg.parallel = std::max(1, *flags.parallel);
  if (flags.margin) cfg.margin = *flags.margin;
  return cfg;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::BadConfig, "cannot write '" + path + "'");
  out << content;
}

int run_simulate(const CommonFlags& flags) {
  RunConfig cfg = load_config(flags);
  DelayEquation eq = equation_from_config(cfg);
  History h = history_from_config(eq, cfg);
  Solution sol = solve_ivp(eq, eq.t0, h);
  std::ostringstream csv;
  write_solution_csv(csv, sol);
  if (cfg.out_path.empty())
    std::cout << csv.str();
  else
    write_file(cfg.out_path, csv.str());
  return 0;
}

std::string summary_path_for(const std::string& base) {
  auto dot = base.rfind('.');
  if (dot == std::string::npos) return base + "_summary";
  return base.substr(0, dot) + "_summary" + base.substr(dot);
}

int run_fundamental(const CommonFlags& flags) {
  RunConfig cfg = load_config(flags);
  DelayEquation eq = equation_from_config(cfg);
  FundamentalField field =
      fundamental_solution(eq, default_s_samples(eq, cfg.s_samples), cfg.parallel);
  std::ostringstream long_csv, summary_csv;
  write_field_csv(long_csv, summary_csv, field);
  if (cfg.out_path.empty()) {
    std::cout << long_csv.str() << summary_csv.str();
  } else {
    write_file(cfg.out_path, long_csv.str());
    write_file(summary_path_for(cfg.out_path), summary_csv.str());
  }
  return 0;
}

int run_classify(const CommonFlags& flags) {
  RunConfig cfg = load_config(flags);
  DelayEquation eq = equation_from_config(cfg);
  ClassifyOptions opts;
  opts.margin = cfg.margin;
  opts.workers = cfg.parallel;
  opts.max_dense_columns = cfg.s_samples;
  StabilityCertificate cert = classify(eq, opts);
  std::string doc = serialize_certificate(cert);
  if (cfg.out_path.empty())
    std::cout << doc;
  else
    write_file(cfg.out_path, doc);
  return 0;  // any verdict is a successful run
}

int run_verify(const std::string& name) {
  ExampleReport report = verify_example(name);
  for (const auto& c : report.checks)
    std::cout << (c.pass ? "PASS" : "FAIL") << " " << report.example << "." << c.name << ": "
              << c.detail << " (" << format_double(c.elapsed_seconds) << " s)\n";
  return report.all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"time-scale delay dynamic equation toolkit"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string example_name;

  CLI::App* simulate = app.add_subcommand("simulate", "integrate the equation from t0");
  add_common(simulate, flags);
  CLI::App* fundamental =
      app.add_subcommand("fundamental", "sample the fundamental solution over the triangle");
  add_common(fundamental, flags);
  CLI::App* classify_cmd =
      app.add_subcommand("classify", "evaluate the stability conditions and emit a certificate");
  add_common(classify_cmd, flags);
  CLI::App* verify = app.add_subcommand("verify-example", "recheck a bundled example");
  verify->add_option("name", example_name, "example name")->required();
  CLI::App* list = app.add_subcommand("list-examples", "list bundled examples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "ERROR BadConfig: " << e.what() << std::endl;
    return 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(flags);
    if (fundamental->parsed()) return run_fundamental(flags);
    if (classify_cmd->parsed()) return run_classify(flags);
    if (verify->parsed()) return run_verify(example_name);
    if (list->parsed()) {
      for (const auto& name : list_examples()) std::cout << name << "\n";
      return 0;
    }
  } catch (const Error& e) {
    fail(e);
  } catch (const std::exception& e) {
    std::cerr << "ERROR Internal: " << e.what() << std::endl;
    return 3;
  }
  return 0;
}
