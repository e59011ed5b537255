#include "specsim/attacks.hpp"

#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace specsim {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::V1_flush: return "V1_flush";
    case Variant::V1_evict: return "V1_evict";
    case Variant::V2_btb: return "V2_btb";
  }
  return "?";
}

std::optional<Variant> variant_from_string(const std::string& text) {
  for (Variant v : {Variant::V1_flush, Variant::V1_evict, Variant::V2_btb}) {
    if (text == to_string(v)) return v;
  }
  return std::nullopt;
}

void ScenarioConfig::validate() const {
  if (secret.empty()) throw std::invalid_argument("secret must not be empty");
  if (training_passes < 1) throw std::invalid_argument("training_passes must be at least 1");
  if (attempts_per_byte < 1) throw std::invalid_argument("attempts_per_byte must be at least 1");
  if (sim.rob_size < 1) throw std::invalid_argument("rob_size must be at least 1");
  if (secret.size() > 1024) throw std::invalid_argument("secret is limited to 1024 bytes");
  if (probe.entries != 256) throw std::invalid_argument("probe entries must be 256 (one per byte value)");
  cache.validate();
  predictor.validate();
  probe.validate(cache);
  if (evict_time && variant == Variant::V2_btb) {
    throw std::invalid_argument("evict_time applies to the bounds-check variants only");
  }
}

std::string report_json(const AttackReport& report) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(report.variant);
  j["accuracy"] = report.accuracy;
  auto bytes = nlohmann::ordered_json::array();
  for (const auto& b : report.per_byte) {
    nlohmann::ordered_json e;
    e["address"] = b.address;
    e["value"] = b.value;
    e["correct"] = b.correct;
    e["attempts"] = b.attempts;
    bytes.push_back(e);
  }
  j["bytes"] = bytes;
  j["recovered"] = std::string(report.recovered.begin(), report.recovered.end());
  j["simulated_cycles"] = report.simulated_cycles;
  j["bandwidth"] = report.bandwidth;
  nlohmann::ordered_json m;
  m["fence_after_branches"] = report.mitigations.fence_after_branches;
  m["flush_on_switch"] = report.mitigations.flush_on_switch;
  m["no_spec_fill"] = report.mitigations.no_spec_fill;
  j["mitigations"] = m;
  if (!report.evict_time.empty()) {
    auto et = nlohmann::ordered_json::array();
    for (const auto& b : report.evict_time) {
      nlohmann::ordered_json e;
      e["byte"] = b.byte;
      e["matching_delta"] = b.matching_delta;
      e["max_other_delta"] = b.max_other_delta;
      e["min_other_delta"] = b.min_other_delta;
      if (b.recovered) {
        e["recovered"] = *b.recovered;
      } else {
        e["recovered"] = nullptr;
      }
      et.push_back(e);
    }
    j["evict_time"] = et;
  }
  return j.dump(2) + "\n";
}

AttackReport run_scenario(const ScenarioConfig& config) {
  config.validate();
  if (config.variant == Variant::V2_btb) return run_v2(build_v2(config));
  return run_v1(build_v1(config));
}

std::vector<SweepRow> sweep_speculation_window(const ScenarioConfig& config, const std::vector<std::size_t>& windows) {
  std::vector<SweepRow> rows;
  for (std::size_t w : windows) {
    ScenarioConfig c = config;
    c.sim.rob_size = w;
    AttackReport r = run_scenario(c);
    rows.push_back(SweepRow{w, c.pad, r.accuracy, r.simulated_cycles});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "window,pad,accuracy,cycles\n";
  for (const auto& r : rows) os << r.window << "," << r.pad << "," << r.accuracy << "," << r.cycles << "\n";
  return os.str();
}

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

std::vector<std::string> preset_names() { return {"v1", "v1-evict", "v2", "v1-evicttime"}; }

std::optional<ScenarioConfig> preset(const std::string& name) {
  ScenarioConfig c;
  if (name == "v1") {
    c.variant = Variant::V1_flush;
    c.secret = bytes_of("The Magic Words are Squeamish Ossifrage.");
  } else if (name == "v1-evict") {
    c.variant = Variant::V1_evict;
    c.secret = bytes_of("The Magic Words are Squeamish Ossifrage.");
  } else if (name == "v2") {
    c.variant = Variant::V2_btb;
    c.secret = bytes_of("shared-lib leak!");
  } else if (name == "v1-evicttime") {
    c.variant = Variant::V1_flush;
    c.secret = bytes_of("Time");
    c.evict_time = true;
  } else {
    return std::nullopt;
  }
  return c;
}

}  // namespace specsim
