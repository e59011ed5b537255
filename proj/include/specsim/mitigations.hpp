// Countermeasure toggles and the fence-insertion program transform.
#pragma once

#include <string>
#include <vector>

#include "specsim/isa.hpp"

namespace specsim {

struct MitigationOptions {
  bool fence_after_branches = false;
  bool flush_on_switch = false;
  bool no_spec_fill = false;
  friend bool operator==(const MitigationOptions&, const MitigationOptions&) = default;
};

/// Puts a FENCE right after every conditional branch and in front of every
/// conditional-branch target, then relocates code, labels and direct
/// targets. Addresses materialized as data or immediates are not rewritten.
/// Throws std::runtime_error("address-space overflow") when a grown run of
/// code would run into the next one.
Program insert_fences(const Program& program);

struct ScenarioConfig;

struct OverheadRow {
  MitigationOptions options;
  double accuracy = 0;
  std::uint64_t cycles = 0;
  double slowdown = 1.0;
};

/// Runs the scenario once with all mitigations off and once per grid entry.
std::vector<OverheadRow> overhead_report(const ScenarioConfig& scenario, const std::vector<MitigationOptions>& grid);

/// CSV `fence,flush,nofill,accuracy,cycles,slowdown`.
std::string overhead_csv(const std::vector<OverheadRow>& rows);

}  // namespace specsim
