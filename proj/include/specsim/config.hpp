// Flat `section.key = value` scenario files and `--set` overrides.
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "specsim/attacks.hpp"

namespace specsim {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every settable key, in file order.
const std::vector<ConfigKey>& config_keys();

/// Applies one `key = value`. `scenario.preset` replaces the whole config
/// with that preset. Throws ConfigError on an unknown key or bad value.
void apply_setting(ScenarioConfig& config, std::string_view key, std::string_view value);

/// Applies `key=value` (the `--set` form).
void apply_override(ScenarioConfig& config, std::string_view assignment);

/// Parses scenario text on top of `config`. Blank lines, `#` and `;`
/// comments and `[section]` headers are allowed; a header prefixes the
/// keys that follow it.
void parse_scenario(ScenarioConfig& config, std::string_view text);

/// Reads and parses a scenario file on top of `config`.
void load_scenario_file(ScenarioConfig& config, const std::string& path);

/// The current value of `key`, formatted so apply_setting accepts it back.
std::string get_setting(const ScenarioConfig& config, std::string_view key);

/// All keys and values as scenario text.
std::string dump_scenario(const ScenarioConfig& config);

}  // namespace specsim
