#include "tsdde/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "tsdde/presets.hpp"

namespace tsdde {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t used = 0;
    out = std::stod(s, &used);
    return used == s.size();
  } catch (...) {
    return false;
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

RunConfig parse_run_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') continue;  // cosmetic section
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::BadConfig,
                  "config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw Error(ErrorCode::BadConfig, "config line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }

  // Start from the preset's config when one is named; explicit keys override.
  RunConfig cfg;
  std::map<std::string, double> params;
  auto preset_it = kv.find("preset");
  if (preset_it != kv.end()) {
    std::string preset_name = preset_it->second;
    kv.erase(preset_it);
    // Numeric keys that are not run settings are preset parameters.
    static const char* kSettings[] = {"scale", "scale_file", "A",   "alpha",    "phi",
                                      "out",   "x0",         "t0",  "horizon",  "h_max",
                                      "step",  "s_samples",  "membership_tol", "margin",
                                      "parallel"};
    for (auto it = kv.begin(); it != kv.end();) {
      bool setting = false;
      for (const char* s : kSettings)
        if (it->first == s) setting = true;
      if (!setting) {
        double d = 0.0;
        if (!parse_double(it->second, d))
          throw Error(ErrorCode::BadConfig,
                      "preset parameter '" + it->first + "' needs a numeric value");
        params[it->first] = d;
        it = kv.erase(it);
      } else {
        ++it;
      }
    }
    cfg = preset_config(preset_name, params);
  }

  auto take_string = [&](const char* key, std::string& dst) {
    auto it = kv.find(key);
    if (it == kv.end()) return false;
    dst = it->second;
    kv.erase(it);
    return true;
  };
  auto take_double = [&](const char* key, double& dst) {
    auto it = kv.find(key);
    if (it == kv.end()) return false;
    if (!parse_double(it->second, dst))
      throw Error(ErrorCode::BadConfig, std::string("config key '") + key +
                                            "' needs a number, got '" + it->second + "'");
    kv.erase(it);
    return true;
  };

  take_string("scale", cfg.scale_text);
  std::string scale_file;
  if (take_string("scale_file", scale_file)) {
    std::ifstream in(scale_file);
    if (!in) throw Error(ErrorCode::BadConfig, "cannot open scale file '" + scale_file + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    cfg.scale_text = buf.str();
  }
  take_string("A", cfg.a_src);
  take_string("alpha", cfg.alpha_src);
  take_string("phi", cfg.phi_src);
  take_string("out", cfg.out_path);
  take_double("x0", cfg.x0);
  take_double("t0", cfg.t0);
  take_double("horizon", cfg.horizon);
  take_double("h_max", cfg.h_max);
  take_double("step", cfg.h_max);
  double samples = 0.0;
  if (take_double("s_samples", samples)) cfg.s_samples = static_cast<std::size_t>(samples);
  take_double("membership_tol", cfg.membership_tol);
  take_double("margin", cfg.margin);
  double par = 0.0;
  if (take_double("parallel", par)) cfg.parallel = std::max(1, static_cast<int>(par));

  if (!kv.empty())
    throw Error(ErrorCode::BadConfig, "unknown config key '" + kv.begin()->first + "'");
  return cfg;
}

RunConfig parse_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::BadConfig, "cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

namespace {

std::string substitute_horizon(const std::string& scale_text, double horizon) {
  std::string out = scale_text;
  std::string needle = "$T";
  std::size_t pos;
  while ((pos = out.find(needle)) != std::string::npos)
    out.replace(pos, needle.size(), format_double(horizon));
  return out;
}

}  // namespace

DelayEquation equation_from_config(const RunConfig& cfg) {
  if (cfg.scale_text.empty())
    throw Error(ErrorCode::BadConfig, "config is missing the time scale");
  if (cfg.a_src.empty()) throw Error(ErrorCode::BadConfig, "config is missing A");
  if (cfg.alpha_src.empty()) throw Error(ErrorCode::BadConfig, "config is missing alpha");
  TimeScalePtr ts =
      parse_time_scale(substitute_horizon(cfg.scale_text, cfg.horizon), cfg.membership_tol);
  ExprPtr a = parse_expr(cfg.a_src);
  ExprPtr alpha = parse_expr(cfg.alpha_src);
  return make_delay_equation(ts, a, alpha, cfg.t0, cfg.h_max);
}

History history_from_config(const DelayEquation& eq, const RunConfig& cfg) {
  ExprPtr phi = parse_expr(cfg.phi_src);
  const TimeScale* ts = eq.ts.get();
  return make_history(eq, eq.t0, cfg.x0,
                      [phi, ts](double t) { return eval_expr(*phi, t, ts); });
}

void write_solution_csv(std::ostream& os, const Solution& sol) {
  const Grid& g = *sol.x.grid();
  os << "t,x\n";
  for (std::size_t i = sol.start_index; i < g.size(); ++i)
    os << format_double(g.t(i)) << "," << format_double(sol.x.values()[i]) << "\n";
}

double decay_fit_lambda(const Solution& col) {
  const Grid& g = *col.x.grid();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, n = 0.0;
  for (std::size_t i = col.start_index; i < g.size(); ++i) {
    double ax = std::abs(col.x.values()[i]);
    double x = g.t(i) - col.s;
    if (ax <= 0.0 || x <= 0.0) continue;
    double y = std::log(ax);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1.0;
  }
  if (n < 2.0) return 0.0;
  double denom = n * sxx - sx * sx;
  if (denom == 0.0) return 0.0;
  return -(n * sxy - sx * sy) / denom;
}

void write_field_csv(std::ostream& long_os, std::ostream& summary_os,
                     const FundamentalField& field) {
  long_os << "s,t,X\n";
  summary_os << "s,max_abs_X,decay_fit_lambda\n";
  for (std::size_t j = 0; j < field.columns(); ++j) {
    const Solution& col = field.column(j);
    const Grid& g = *col.x.grid();
    double max_abs = 0.0;
    for (std::size_t i = col.start_index; i < g.size(); ++i) {
      double v = col.x.values()[i];
      max_abs = std::max(max_abs, std::abs(v));
      long_os << format_double(col.s) << "," << format_double(g.t(i)) << ","
              << format_double(v) << "\n";
    }
    summary_os << format_double(col.s) << "," << format_double(max_abs) << ","
               << format_double(decay_fit_lambda(col)) << "\n";
  }
}

}  // namespace tsdde
