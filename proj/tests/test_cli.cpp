#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "specsim/config.hpp"

using namespace specsim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / ("specsim_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int invoke(const std::string& args) {
  const std::string cmd = std::string(SPECSIM_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, EveryKeyRoundTrips) {
  for (const std::string& name : preset_names()) {
    const ScenarioConfig base = *preset(name);
    for (const ConfigKey& k : config_keys()) {
      if (k.name == "scenario.preset") continue;
      ScenarioConfig c = base;
      const std::string v = get_setting(c, k.name);
      apply_setting(c, k.name, v);
      ASSERT_EQ(get_setting(c, k.name), v) << k.name;
      ASSERT_EQ(dump_scenario(c), dump_scenario(base)) << k.name;
    }
  }
}

TEST(Config, DumpParsesBackToSameConfig) {
  for (const std::string& name : preset_names()) {
    ScenarioConfig c = *preset("v1");
    parse_scenario(c, dump_scenario(*preset(name)));
    EXPECT_EQ(dump_scenario(c), dump_scenario(*preset(name))) << name;
  }
}

TEST(Config, SectionsCommentsAndHex) {
  ScenarioConfig c = *preset("v1");
  parse_scenario(c,
                 "# comment\n"
                 "; another\n"
                 "\n"
                 "[scenario]\n"
                 "secret = hex:414243\n"
                 "pad = 7\n"
                 "[sim]\n"
                 "rob_size = 0x40\n"
                 "perfect_prediction = yes\n"
                 "[]\n"
                 "probe.threshold = auto\n");
  EXPECT_EQ(c.secret, (std::vector<std::uint8_t>{'A', 'B', 'C'}));
  EXPECT_EQ(c.pad, 7u);
  EXPECT_EQ(c.sim.rob_size, 64u);
  EXPECT_TRUE(c.sim.perfect_prediction);
  EXPECT_FALSE(c.probe.threshold);
}

TEST(Config, PresetKeyResetsEverything) {
  ScenarioConfig c = *preset("v1");
  apply_override(c, "sim.rob_size=7");
  apply_override(c, "scenario.preset=v2");
  EXPECT_EQ(dump_scenario(c), dump_scenario(*preset("v2")));
}

TEST(Config, Errors) {
  ScenarioConfig c = *preset("v1");
  EXPECT_THROW(apply_setting(c, "sim.nope", "1"), ConfigError);
  EXPECT_THROW(apply_setting(c, "sim.rob_size", "many"), ConfigError);
  EXPECT_THROW(apply_setting(c, "sim.rob_size", "-3"), ConfigError);
  EXPECT_THROW(apply_setting(c, "sim.record_events", "maybe"), ConfigError);
  EXPECT_THROW(apply_setting(c, "scenario.secret", "hex:4"), ConfigError);
  EXPECT_THROW(apply_setting(c, "scenario.secret", "hex:zz"), ConfigError);
  EXPECT_THROW(apply_setting(c, "scenario.variant", "V3"), ConfigError);
  EXPECT_THROW(apply_setting(c, "scenario.preset", "nope"), ConfigError);
  EXPECT_THROW(apply_override(c, "no_equals"), ConfigError);
  EXPECT_THROW(parse_scenario(c, "sim.rob_size 4\n"), ConfigError);
  EXPECT_THROW(load_scenario_file(c, "/nonexistent/scenario.cfg"), ConfigError);
}

TEST(Config, ReadmeListsEveryKey) {
  const std::string readme = slurp(fs::path(SPECSIM_SOURCE_DIR) / "README.md");
  for (const ConfigKey& k : config_keys()) EXPECT_NE(readme.find("`" + k.name + "`"), std::string::npos) << k.name;
}

TEST(Cli, RunWritesArtifacts) {
  const fs::path d = scratch("artifacts");
  ASSERT_EQ(invoke("run --preset v1 --set scenario.secret=hi --emit report,histogram,trace,btb --out " + d.string()), 0);
  for (const char* f : {"report.json", "histogram.csv", "trace.jsonl", "btb.csv"}) EXPECT_TRUE(fs::exists(d / f)) << f;
  auto report = nlohmann::json::parse(slurp(d / "report.json"));
  EXPECT_DOUBLE_EQ(report.at("accuracy").get<double>(), 1.0);
  EXPECT_EQ(slurp(d / "histogram.csv").substr(0, 18), "index,latency,hot\n");
  fs::remove_all(d);
}

TEST(Cli, ReportIsByteIdenticalAcrossRuns) {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  ASSERT_EQ(invoke("run --preset v2 --seed 9 --out " + a.string()), 0);
  ASSERT_EQ(invoke("run --preset v2 --seed 9 --out " + b.string()), 0);
  const std::string ra = slurp(a / "report.json");
  EXPECT_FALSE(ra.empty());
  EXPECT_EQ(ra, slurp(b / "report.json"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, ScenarioFileAndSweep) {
  const fs::path d = scratch("sweep");
  std::ofstream(d / "s.cfg") << "[scenario]\npreset = v1\nsecret = x\n";
  ASSERT_EQ(invoke("sweep --scenario " + (d / "s.cfg").string() + " --windows 3,4 --pads 0 --out " + d.string()), 0);
  const std::string csv = slurp(d / "sweep.csv");
  std::istringstream lines(csv);
  std::string line;
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 3);
  fs::remove_all(d);
}

TEST(Cli, ExitCodes) {
  const fs::path d = scratch("codes");
  EXPECT_EQ(invoke("--help"), 0);
  EXPECT_EQ(invoke("keys"), 0);
  EXPECT_EQ(invoke("run --bogus"), 1);
  EXPECT_EQ(invoke("run --preset nope --out " + d.string()), 1);
  EXPECT_EQ(invoke("run --preset v1 --set sim.rob_size=abc --out " + d.string()), 1);
  EXPECT_EQ(invoke("run --preset v1 --set sim.rob_size=0 --out " + d.string()), 1);
  EXPECT_EQ(invoke("run --preset v1 --scenario /nonexistent.cfg --out " + d.string()), 1);
  EXPECT_EQ(invoke("run --preset v1 --max-cycles 10 --out " + d.string()), 2);
  fs::remove_all(d);
}
