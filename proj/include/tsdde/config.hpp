#ifndef TSDDE_CONFIG_HPP
#define TSDDE_CONFIG_HPP

#include <iosfwd>
#include <map>
#include <string>

#include "tsdde/delay_equation.hpp"

namespace tsdde {

/// A run description, either written by hand (flat `key = value` text,
/// optional [section] headers, '#' comments) or produced by a preset.
/// The literal `$T` inside the scale description is replaced by `horizon`.
struct RunConfig {
  std::string preset;      // name of the generating preset, if any
  std::string scale_text;  // time-scale description (see parse_time_scale)
  std::string a_src;       // coefficient DSL
  std::string alpha_src;   // delay DSL
  std::string phi_src = "0";  // history DSL
  double x0 = 1.0;
  double t0 = 0.0;
  double horizon = 0.0;
  double h_max = 1e-2;
  std::size_t s_samples = 64;
  double membership_tol = 1e-9;
  double margin = 0.0;
  int parallel = 1;
  std::string out_path;
  std::map<std::string, double> params;  // preset parameters
};

RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config_file(const std::string& path);

DelayEquation equation_from_config(const RunConfig& cfg);
History history_from_config(const DelayEquation& eq, const RunConfig& cfg);

/// 17 significant digits: doubles round-trip exactly.
std::string format_double(double v);

void write_solution_csv(std::ostream& os, const Solution& sol);

/// Long format `s,t,X` plus a per-column summary `s,max_abs_X,decay_fit_lambda`.
void write_field_csv(std::ostream& long_os, std::ostream& summary_os,
                     const FundamentalField& field);

/// Least-squares slope of ln|X| against (t - s) over a column (0 when the
/// column has too few usable points).
double decay_fit_lambda(const Solution& col);

}  // namespace tsdde

#endif  // TSDDE_CONFIG_HPP
