// End-to-end bounds-check-bypass and branch-target-injection scenarios.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "specsim/branchpred.hpp"
#include "specsim/channels.hpp"
#include "specsim/memsys.hpp"
#include "specsim/mitigations.hpp"
#include "specsim/pipeline.hpp"

namespace specsim {

enum class Variant : std::uint8_t { V1_flush, V1_evict, V2_btb };
const char* to_string(Variant v);
std::optional<Variant> variant_from_string(const std::string& text);

struct ScenarioConfig {
  Variant variant = Variant::V1_flush;
  std::vector<std::uint8_t> secret;
  std::size_t training_passes = 5;
  std::size_t attempts_per_byte = 3;
  ProbeConfig probe;
  CacheConfig cache;
  PredictorConfig predictor;
  /// Window, latencies, watchdog and event recording; contexts are filled
  /// in by the scenario builders.
  SimConfig sim;
  MitigationOptions mitigations;
  std::uint64_t seed = 1;
  /// Filler instructions between the bounds check and the leaking loads.
  std::size_t pad = 0;
  /// Also run the Evict+Time experiment (bounds-check variants only).
  bool evict_time = false;
  /// Branch-target variant: evict the victim's jump-target word before
  /// switching to the victim.
  bool evict_jump_target = true;
  /// Per attempt, compare the attack run against a never-mispredicted
  /// replay of the same run.
  bool check_residue = false;

  void validate() const;
};

/// Named addresses of a built scenario.
using Layout = std::map<std::string, Addr>;

struct Scenario {
  ScenarioConfig config;
  /// Contexts with their programs and page tables. For bounds-check
  /// scenarios a single context with `train_start` / `attack_start` entries.
  SimConfig sim;
  Layout layout;
  std::vector<Addr> secret_addresses;  // victim virtual addresses
  std::size_t attacker_ctx = 0;
  std::size_t victim_ctx = 0;
  EvictionArena arena;
};

struct ByteResult {
  Addr address = 0;
  std::uint8_t value = 0;
  bool correct = false;
  std::size_t attempts = 0;
  std::vector<std::size_t> hot;  // hot set of the final attempt
  std::vector<std::vector<std::size_t>> attempt_hot;  // hot set of every attempt, in order
};

struct ResidueCheck {
  std::size_t byte = 0;
  std::size_t attempt = 0;
  HitLevel selected_line = HitLevel::DRAM;  // probe line of the true secret value, after the run
  bool registers_match = false;             // against the never-mispredicted replay
  HitLevel replay_selected_line = HitLevel::DRAM;
};

struct EvictTimeByte {
  std::size_t byte = 0;
  std::int64_t matching_delta = 0;
  std::int64_t max_other_delta = 0;
  std::int64_t min_other_delta = 0;
  std::optional<std::uint8_t> recovered;  // unique line with a positive delta
};

struct AttackReport {
  Variant variant = Variant::V1_flush;
  std::vector<std::uint8_t> recovered;
  std::vector<ByteResult> per_byte;
  double accuracy = 0;
  std::uint64_t simulated_cycles = 0;
  double bandwidth = 0;  // correct bytes per million simulated cycles
  MitigationOptions mitigations;

  std::vector<ResidueCheck> residue;
  std::vector<EvictTimeByte> evict_time;
  ProbeResult first_probe;  // final attempt of the first byte
  std::vector<Event> events;
  std::string btb_csv;
  std::uint64_t mispredictions = 0;
  std::size_t max_speculative_inflight = 0;
};

/// Deterministic JSON: `{variant, accuracy, bytes, simulated_cycles,
/// bandwidth, mitigations}` plus an `evict_time` section when present.
std::string report_json(const AttackReport& report);

Scenario build_v1(const ScenarioConfig& config);
AttackReport run_v1(const Scenario& scenario);

/// Registers and placement of the two-load gadget in the victim.
struct GadgetSpec {
  std::uint8_t r1 = 1;
  std::uint8_t r2 = 2;
  Addr address = 0x70000000;
  std::int64_t displacement = 0x13BE13BD;
};

Scenario build_v2(const ScenarioConfig& config, const GadgetSpec& gadget = {});
AttackReport run_v2(const Scenario& scenario);

/// Builds and runs the variant named in the config.
AttackReport run_scenario(const ScenarioConfig& config);

struct SweepRow {
  std::size_t window = 0;
  std::size_t pad = 0;
  double accuracy = 0;
  std::uint64_t cycles = 0;
};

/// Instructions needed in the window beyond the pad and the leak chain:
/// the bounds check itself.
inline constexpr std::size_t kWindowSlack = 1;
/// Loads and the scaling shift between the bounds check and the leak.
inline constexpr std::size_t kLeakChainLength = 3;

std::vector<SweepRow> sweep_speculation_window(const ScenarioConfig& config, const std::vector<std::size_t>& windows);
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Built-in presets: v1, v1-evict, v2, v1-evicttime.
std::optional<ScenarioConfig> preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace specsim
