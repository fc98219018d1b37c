#ifndef TSDDE_PRESETS_HPP
#define TSDDE_PRESETS_HPP

#include <map>
#include <string>
#include <vector>

#include "tsdde/config.hpp"

namespace tsdde {

/// Code-registered example library. Each preset expands to a full RunConfig;
/// verify_example reruns the example's published numbers and checks them.
std::vector<std::string> list_examples();

bool is_example(const std::string& name);

/// Throws UnknownExample. `overrides` replaces the preset's default
/// parameters (e.g. {"a", 0.5}).
RunConfig preset_config(const std::string& name,
                        const std::map<std::string, double>& overrides = {});

struct ExampleCheck {
  std::string name;
  bool pass = false;
  std::string detail;
  double elapsed_seconds = 0.0;
};

struct ExampleReport {
  std::string example;
  std::vector<ExampleCheck> checks;
  bool all_pass = true;
};

ExampleReport verify_example(const std::string& name);

}  // namespace tsdde

#endif  // TSDDE_PRESETS_HPP
