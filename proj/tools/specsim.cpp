// Command-line runner: `specsim run` executes one scenario, `specsim sweep`
// runs a grid of speculation windows and filler lengths, `specsim keys` lists
// the configuration keys.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "specsim/config.hpp"

namespace fs = std::filesystem;
using namespace specsim;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kSimError = 2;

struct RunSpec {
  std::string preset;
  std::string scenario;
  std::vector<std::string> overrides;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> max_cycles;
  std::vector<std::string> emit{"report"};
  std::vector<std::size_t> windows;
  std::vector<std::size_t> pads;
};

void add_common(CLI::App* cmd, RunSpec& spec) {
  cmd->add_option("--preset", spec.preset, "built-in scenario: v1, v1-evict, v2, v1-evicttime");
  cmd->add_option("--scenario", spec.scenario, "scenario file (section.key = value lines)");
  cmd->add_option("--set", spec.overrides, "override one key, key=value (repeatable)")->take_all();
  cmd->add_option("--out", spec.out, "output directory");
  cmd->add_option("--seed", spec.seed, "random seed");
  cmd->add_option("--max-cycles", spec.max_cycles, "watchdog limit per simulation run");
}

ScenarioConfig resolve(const RunSpec& spec) {
  if (spec.preset.empty() && spec.scenario.empty()) throw ConfigError("need --preset or --scenario");
  ScenarioConfig cfg;
  if (!spec.preset.empty()) {
    auto p = preset(spec.preset);
    if (!p) throw ConfigError("unknown preset '" + spec.preset + "'");
    cfg = *p;
  }
  if (!spec.scenario.empty()) load_scenario_file(cfg, spec.scenario);
  for (const auto& o : spec.overrides) apply_override(cfg, o);
  if (spec.seed) cfg.seed = *spec.seed;
  if (spec.max_cycles) cfg.sim.max_cycles = *spec.max_cycles;
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory '" + dir + "'");
  return fs::path(dir);
}

int do_run(const RunSpec& spec) {
  static const std::set<std::string> known{"report", "histogram", "trace", "btb"};
  std::set<std::string> emit;
  for (const auto& e : spec.emit) {
    if (!known.count(e)) throw ConfigError("unknown --emit artifact '" + e + "'");
    emit.insert(e);
  }
  ScenarioConfig cfg = resolve(spec);
  if (emit.count("trace")) cfg.sim.record_events = true;
  const fs::path out = prepare_out(spec.out);

  AttackReport rep = run_scenario(cfg);
  if (emit.count("report")) write_file(out / "report.json", report_json(rep));
  if (emit.count("histogram")) write_file(out / "histogram.csv", probe_csv(rep.first_probe));
  if (emit.count("trace")) write_file(out / "trace.jsonl", events_jsonl(rep.events));
  if (emit.count("btb")) write_file(out / "btb.csv", rep.btb_csv);
  std::printf("variant=%s accuracy=%.2f cycles=%llu\n", to_string(rep.variant), rep.accuracy,
              static_cast<unsigned long long>(rep.simulated_cycles));
  return kOk;
}

int do_sweep(const RunSpec& spec) {
  if (spec.windows.empty() && spec.pads.empty()) throw ConfigError("sweep needs --windows or --pads");
  ScenarioConfig cfg = resolve(spec);
  const fs::path out = prepare_out(spec.out);
  const std::vector<std::size_t> windows = spec.windows.empty() ? std::vector{cfg.sim.rob_size} : spec.windows;
  const std::vector<std::size_t> pads = spec.pads.empty() ? std::vector{cfg.pad} : spec.pads;

  std::vector<SweepRow> rows;
  for (std::size_t pad : pads) {
    ScenarioConfig c = cfg;
    c.pad = pad;
    c.validate();
    for (const SweepRow& r : sweep_speculation_window(c, windows)) {
      rows.push_back(r);
      std::printf("variant=%s window=%zu pad=%zu accuracy=%.2f cycles=%llu\n", to_string(c.variant), r.window,
                  r.pad, r.accuracy, static_cast<unsigned long long>(r.cycles));
    }
  }
  write_file(out / "sweep.csv", sweep_csv(rows));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speculative out-of-order simulator and transient-execution attack runner"};
  app.require_subcommand(1);
  RunSpec spec;

  CLI::App* run_cmd = app.add_subcommand("run", "run one scenario and write its artifacts");
  add_common(run_cmd, spec);
  run_cmd->add_option("--emit", spec.emit, "artifacts: report,histogram,trace,btb")->delimiter(',');

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "sweep speculation windows and filler lengths");
  add_common(sweep_cmd, spec);
  sweep_cmd->add_option("--windows", spec.windows, "reorder buffer sizes, comma separated")->delimiter(',');
  sweep_cmd->add_option("--pads", spec.pads, "filler instruction counts, comma separated")->delimiter(',');

  CLI::App* keys_cmd = app.add_subcommand("keys", "list configuration keys with their v1 defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  if (keys_cmd->parsed()) {
    const ScenarioConfig defaults = *preset("v1");
    for (const ConfigKey& k : config_keys()) {
      const std::string value = k.name == "scenario.preset" ? "v1" : get_setting(defaults, k.name);
      std::printf("%-32s %-20s %s\n", k.name.c_str(), value.c_str(), k.help.c_str());
    }
    return kOk;
  }

  try {
    return run_cmd->parsed() ? do_run(spec) : do_sweep(spec);
  } catch (const ConfigError& e) {
    std::cerr << "specsim: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "specsim: invalid configuration: " << e.what() << "\n";
    return kConfigError;
  } catch (const SimTimeout& e) {
    std::cerr << "specsim: timeout: " << e.what() << "\n";
    return kSimError;
  } catch (const SimulationFault& e) {
    std::cerr << "specsim: fault: " << e.what() << "\n";
    return kSimError;
  } catch (const std::exception& e) {
    std::cerr << "specsim: " << e.what() << "\n";
    return kSimError;
  }
}
