#include <gtest/gtest.h>

#include <map>

#include "json.hpp"

#include "specsim/attacks.hpp"
#include "specsim/config.hpp"

using namespace specsim;

namespace {

ScenarioConfig short_v1(const std::string& secret = "Spectre!") {
  ScenarioConfig c = *preset("v1");
  c.secret.assign(secret.begin(), secret.end());
  return c;
}

// Physical address a memory-access event touched, parsed from its detail.
std::optional<Addr> event_pa(const Event& e) {
  const auto at = e.detail.find("pa=0x");
  if (!e.memory_access || at == std::string::npos) return std::nullopt;
  return std::stoull(e.detail.substr(at + 5), nullptr, 16);
}

std::vector<std::uint8_t> bytes(const std::string& s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(BoundsCheck, RecoversFortyByteSecret) {
  ScenarioConfig cfg = *preset("v1");
  ASSERT_EQ(cfg.secret.size(), 40u);
  AttackReport r = run_scenario(cfg);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.recovered, cfg.secret);
  for (const auto& b : r.per_byte) {
    EXPECT_TRUE(b.correct);
    EXPECT_EQ(b.hot.size(), 1u);
  }
  EXPECT_GT(r.bandwidth, 0.0);
}

TEST(BoundsCheck, MaliciousIndexReachesSecret) {
  ScenarioConfig cfg = short_v1("A");
  Scenario sc = build_v1(cfg);
  EXPECT_EQ(sc.secret_addresses.at(0), sc.layout.at("secret"));
  // x = secret - array1, so array1 + x lands on the secret byte.
  const Addr x = sc.secret_addresses[0] - sc.layout.at("array1");
  EXPECT_EQ(sc.layout.at("array1") + x, sc.layout.at("secret"));
  EXPECT_GE(x, 16u);
}

TEST(BoundsCheck, DeterministicReports) {
  const ScenarioConfig cfg = short_v1();
  const std::string first = report_json(run_scenario(cfg));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(report_json(run_scenario(cfg)), first);
}

TEST(BoundsCheck, EvictionVariantMatchesFlushHotSets) {
  ScenarioConfig evict = *preset("v1-evict");
  ScenarioConfig flush = evict;
  flush.variant = Variant::V1_flush;
  AttackReport a = run_scenario(evict);
  AttackReport b = run_scenario(flush);
  EXPECT_DOUBLE_EQ(a.accuracy, 1.0);
  ASSERT_EQ(a.per_byte.size(), b.per_byte.size());
  for (std::size_t i = 0; i < a.per_byte.size(); ++i) EXPECT_EQ(a.per_byte[i].hot, b.per_byte[i].hot) << i;
}

TEST(BoundsCheck, FenceEmptiesEveryHotSet) {
  ScenarioConfig cfg = short_v1();
  cfg.mitigations.fence_after_branches = true;
  cfg.sim.record_events = true;
  AttackReport r = run_scenario(cfg);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.0);
  for (const auto& b : r.per_byte) {
    EXPECT_TRUE(b.hot.empty());
    EXPECT_EQ(b.attempts, cfg.attempts_per_byte);
  }
  for (const Event& e : r.events) {
    ASSERT_FALSE(e.kind == EventKind::issue && e.memory_access && e.under_conditional);
  }
}

TEST(BoundsCheck, ResidueMatchesNeverMispredictedRun) {
  ScenarioConfig cfg = short_v1();
  cfg.check_residue = true;
  AttackReport r = run_scenario(cfg);
  ASSERT_EQ(r.residue.size(), cfg.secret.size());
  for (const auto& c : r.residue) {
    EXPECT_EQ(c.selected_line, HitLevel::L1);
    EXPECT_TRUE(c.registers_match);
    EXPECT_NE(c.replay_selected_line, HitLevel::L1);
  }
}

TEST(BoundsCheck, LeakIsPurelyTransient) {
  ScenarioConfig cfg = short_v1("xy");
  cfg.sim.record_events = true;
  Scenario sc = build_v1(cfg);
  AttackReport r = run_v1(sc);
  ASSERT_DOUBLE_EQ(r.accuracy, 1.0);
  const Addr secret_line = sc.layout.at("secret") / 64;
  const Program& prog = sc.sim.contexts[0].program;
  const Addr own_lo = prog.label("victim_use_secret");
  const Addr own_hi = prog.label("victim");
  std::map<std::pair<std::size_t, std::uint64_t>, Addr> secret_loads;  // (ctx, seq) -> pc
  std::size_t transient = 0;
  for (const Event& e : r.events) {
    const auto key = std::make_pair(e.ctx, e.seq);
    if (e.kind == EventKind::issue) {
      if (auto pa = event_pa(e); pa && *pa / 64 == secret_line) secret_loads[key] = e.pc;
    } else if (e.kind == EventKind::squash) {
      transient += secret_loads.erase(key);
    } else if (e.kind == EventKind::retire) {
      auto it = secret_loads.find(key);
      if (it == secret_loads.end()) continue;
      EXPECT_TRUE(it->second >= own_lo && it->second < own_hi) << std::hex << it->second;
      secret_loads.erase(it);
    }
  }
  EXPECT_GT(transient, 0u);
}

TEST(BoundsCheck, WindowTooShortForChain) {
  ScenarioConfig cfg = short_v1();
  cfg.sim.rob_size = 3;
  EXPECT_DOUBLE_EQ(run_scenario(cfg).accuracy, 0.0);
  cfg.sim.rob_size = 3 + kWindowSlack;
  EXPECT_DOUBLE_EQ(run_scenario(cfg).accuracy, 1.0);
}

TEST(BoundsCheck, UnresolvedByteIsZeroAndIncorrect) {
  ScenarioConfig cfg = short_v1("ab");
  cfg.sim.rob_size = 1;
  AttackReport r = run_scenario(cfg);
  for (const auto& b : r.per_byte) {
    EXPECT_EQ(b.value, 0);
    EXPECT_FALSE(b.correct);
  }
}

TEST(Sweep, TransitionAtPadPlusChainPlusSlack) {
  for (std::size_t pad : {0u, 5u, 20u}) {
    ScenarioConfig cfg = short_v1("ok");
    cfg.pad = pad;
    const std::size_t edge = pad + kLeakChainLength + kWindowSlack;
    auto rows = sweep_speculation_window(cfg, {1, edge - 1, edge, edge + 1, 192});
    EXPECT_DOUBLE_EQ(rows[0].accuracy, 0.0) << pad;
    EXPECT_DOUBLE_EQ(rows[1].accuracy, 0.0) << pad;
    EXPECT_DOUBLE_EQ(rows[2].accuracy, 1.0) << pad;
    EXPECT_DOUBLE_EQ(rows[3].accuracy, 1.0) << pad;
    EXPECT_DOUBLE_EQ(rows[4].accuracy, 1.0) << pad;
    for (const auto& row : rows) EXPECT_EQ(row.pad, pad);
  }
}

TEST(Sweep, PadOneEightyEight) {
  ScenarioConfig cfg = short_v1();
  cfg.pad = 188;
  auto rows = sweep_speculation_window(cfg, {1, 8, 64, 192, 256});
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LE(rows[i - 1].accuracy, rows[i].accuracy);
  EXPECT_DOUBLE_EQ(rows[2].accuracy, 0.0);
  EXPECT_DOUBLE_EQ(rows[3].accuracy, 1.0);
  EXPECT_EQ(sweep_csv(rows).substr(0, 26), "window,pad,accuracy,cycles");
}

TEST(BranchTarget, RecoversSixteenByteSecret) {
  ScenarioConfig cfg = *preset("v2");
  ASSERT_EQ(cfg.secret.size(), 16u);
  AttackReport r = run_scenario(cfg);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.recovered, cfg.secret);
}

TEST(BranchTarget, TrainerAliasesOnlyInLowBits) {
  Scenario sc = build_v2(*preset("v2"));
  const Addr trainer = sc.layout.at("trainer");
  const Addr jump = sc.layout.at("victim_jump");
  EXPECT_NE(trainer, jump);
  EXPECT_EQ((trainer ^ jump) & 0xfffff, 0u);
  EXPECT_EQ(trainer, jump + (Addr{1} << 20));
  // The attacker cannot execute the gadget page it trains toward.
  EXPECT_FALSE(sc.sim.contexts[sc.attacker_ctx].space.translate(sc.layout.at("gadget"), kExec));
  EXPECT_TRUE(sc.sim.contexts[sc.victim_ctx].space.translate(sc.layout.at("gadget"), kExec));
}

TEST(BranchTarget, GadgetOperandsSelectSecretAndProbe) {
  ScenarioConfig cfg = *preset("v2");
  Scenario sc = build_v2(cfg);
  const Addr m = sc.secret_addresses[0];
  const Addr r1 = m - sc.layout.at("displacement") - 3;
  EXPECT_EQ(r1 + 3 + sc.layout.at("displacement"), m);
  // The victim's probe view and the attacker's share physical pages.
  const auto& victim = sc.sim.contexts[sc.victim_ctx].space;
  const auto& attacker = sc.sim.contexts[sc.attacker_ctx].space;
  EXPECT_EQ(victim.translate(sc.layout.at("victim_probe") + 0x41 * cfg.probe.stride, kRead),
            attacker.translate(cfg.probe.probe_base + 0x41 * cfg.probe.stride, kRead));
}

TEST(BranchTarget, FlushOnSwitchDefeatsAttack) {
  ScenarioConfig cfg = *preset("v2");
  cfg.mitigations.flush_on_switch = true;
  AttackReport r = run_scenario(cfg);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.0);
  for (const auto& b : r.per_byte) EXPECT_TRUE(b.hot.empty());
}

TEST(BranchTarget, CachedJumpTargetResolvesTooEarly) {
  ScenarioConfig cfg = *preset("v2");
  cfg.evict_jump_target = false;
  EXPECT_DOUBLE_EQ(run_scenario(cfg).accuracy, 0.0);
}

TEST(BranchTarget, AttackerNeverTouchesSecret) {
  ScenarioConfig cfg = *preset("v2");
  cfg.secret = bytes("ab");
  cfg.sim.record_events = true;
  Scenario sc = build_v2(cfg);
  AttackReport r = run_v2(sc);
  ASSERT_DOUBLE_EQ(r.accuracy, 1.0);
  const Addr secret_pa = *sc.sim.contexts[sc.victim_ctx].space.translate(sc.layout.at("secret"), 0);
  for (const Event& e : r.events) {
    if (e.ctx != sc.attacker_ctx) continue;
    auto pa = event_pa(e);
    ASSERT_FALSE(pa && *pa / 64 == secret_pa / 64) << e.detail << " pc=" << std::hex << e.pc << " kind=" << int(e.kind);
  }
}

TEST(BranchTarget, RejectsBadGadgets) {
  ScenarioConfig cfg = *preset("v2");
  GadgetSpec g;
  g.r1 = g.r2 = 2;
  EXPECT_THROW(build_v2(cfg, g), std::invalid_argument);
  g = {};
  g.address = 0x70000010;
  EXPECT_THROW(build_v2(cfg, g), std::invalid_argument);
  EXPECT_THROW(build_v1(cfg), std::invalid_argument);
}

TEST(Mitigations, NeverIncreaseAccuracy) {
  for (const std::string& name : preset_names()) {
    ScenarioConfig base = *preset(name);
    base.evict_time = false;
    if (base.secret.size() > 8) base.secret.resize(8);
    const double baseline = run_scenario(base).accuracy;
    for (int m = 0; m < 3; ++m) {
      ScenarioConfig c = base;
      c.mitigations.fence_after_branches = m == 0;
      c.mitigations.flush_on_switch = m == 1;
      c.mitigations.no_spec_fill = m == 2;
      EXPECT_LE(run_scenario(c).accuracy, baseline) << name << " mitigation " << m;
    }
  }
}

TEST(Report, JsonShape) {
  AttackReport r = run_scenario(short_v1("hi"));
  auto j = nlohmann::json::parse(report_json(r));
  EXPECT_EQ(j["variant"], "V1_flush");
  EXPECT_EQ(j["accuracy"], 1.0);
  EXPECT_EQ(j["recovered"], "hi");
  ASSERT_EQ(j["bytes"].size(), 2u);
  EXPECT_EQ(j["bytes"][0]["value"], 'h');
  EXPECT_EQ(j["bytes"][0]["correct"], true);
  EXPECT_EQ(j["mitigations"]["fence_after_branches"], false);
  EXPECT_FALSE(j.contains("evict_time"));
}

TEST(Presets, AllNamedPresetsExist) {
  for (const auto& n : preset_names()) EXPECT_TRUE(preset(n)) << n;
  EXPECT_FALSE(preset("v3"));
  EXPECT_TRUE(preset("v1-evicttime")->evict_time);
}
