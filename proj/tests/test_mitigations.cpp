#include <gtest/gtest.h>

#include <algorithm>

#include "specsim/attacks.hpp"
#include "specsim/mitigations.hpp"
#include "support.hpp"

using namespace specsim;
using specsim::testing::single_context;
using specsim::testing::text_program;

namespace {

std::size_t count_fences(const Program& p) {
  return static_cast<std::size_t>(std::count_if(p.text.begin(), p.text.end(),
                                                [](const TextEntry& e) { return e.inst.op == Opcode::FENCE; }));
}

// Registers other than the link and fault-pc registers, which hold code
// addresses and so move with relocation.
bool same_data_registers(const ArchState& a, const ArchState& b) {
  for (int r = 0; r < kNumRegisters; ++r) {
    if (r == kLinkRegister || r == kFaultPcRegister) continue;
    if (a.regs[r] != b.regs[r]) return false;
  }
  return a.halted == b.halted && a.faulted.has_value() == b.faulted.has_value();
}

InOrderResult interpret(const SimConfig& cfg) {
  MemoryImage mem;
  load_program_data(cfg, mem);
  return interpret_in_order(cfg, mem);
}

}  // namespace

TEST(InsertFences, BranchFreeProgramUnchanged) {
  Program p = text_program("MOVI r1, 5\nADD r2, r1, 3\nLOAD r3, [r0 + 0x10000]\nCALL f\nHALT\nf: RET\n");
  EXPECT_EQ(insert_fences(p), p);
}

TEST(InsertFences, OneBranchGetsTwoFences) {
  Program p = text_program("_start: BLT r1, r2, far\nMOVI r3, 1\nHALT\nfar: MOVI r3, 2\nHALT\n");
  Program f = insert_fences(p);
  EXPECT_EQ(count_fences(f), 2u);
  ASSERT_EQ(f.text.size(), p.text.size() + 2);
  EXPECT_EQ(f.text[0].inst.op, Opcode::BLT);
  EXPECT_EQ(f.text[1].inst.op, Opcode::FENCE);
  // The branch now lands on the fence that guards its target.
  const Addr target = static_cast<Addr>(f.text[0].inst.imm(2).value);
  EXPECT_EQ(target, f.label("far"));
  ASSERT_NE(f.find(target), nullptr);
  EXPECT_EQ(f.find(target)->op, Opcode::FENCE);
  EXPECT_EQ(f.find(target + kInstructionWidth)->op, Opcode::MOVI);
  EXPECT_EQ(f.entry, p.entry);
}

TEST(InsertFences, SharedTargetFencedOnce) {
  Program p = text_program("BEQ r1, r2, L\nBEQ r1, r3, L\nHALT\nL: HALT\n");
  // After each branch, plus one at L.
  EXPECT_EQ(count_fences(insert_fences(p)), 3u);
}

TEST(InsertFences, DataFollowingCodeOverflows) {
  Program p = assemble(".org 0x400000\nBEQ r1, r2, L\nL: HALT\n.org 0x400008\n.byte 1\n");
  try {
    insert_fences(p);
    FAIL() << "expected overflow";
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "address-space overflow");
  }
}

TEST(InsertFences, PreservesSemanticsOnRandomPrograms) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Program p = assemble(specsim::testing::ProgramGenerator(seed, false).generate());
    Program f = insert_fences(p);
    const InOrderResult before = interpret(single_context(p));
    const InOrderResult after = interpret(single_context(f));
    ASSERT_TRUE(same_data_registers(before.contexts[0], after.contexts[0])) << "seed " << seed;
    ASSERT_EQ(before.memory, after.memory) << "seed " << seed;
  }
}

TEST(InsertFences, FencedProgramsNeverLoadUnderConditional) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Program f = insert_fences(assemble(specsim::testing::ProgramGenerator(seed, false).generate()));
    SimConfig cfg = single_context(f);
    cfg.record_events = true;
    MemorySystem mem;
    load_program_data(cfg, mem.memory);
    PredictorState bp;
    Trace t = run(cfg, mem, bp);
    const InOrderResult ref = interpret(cfg);
    ASSERT_TRUE(same_architecture(t.contexts[0], ref.contexts[0])) << "seed " << seed;
    for (const Event& e : t.events) {
      ASSERT_FALSE(e.kind == EventKind::issue && e.memory_access && e.under_conditional) << "seed " << seed;
    }
  }
}

TEST(InsertFences, BoundsCheckVictimKeepsSemanticsAndStopsLeaking) {
  ScenarioConfig cfg = *preset("v1");
  cfg.secret = {'o', 'k'};
  Scenario plain = build_v1(cfg);
  cfg.mitigations.fence_after_branches = true;
  Scenario fenced = build_v1(cfg);
  EXPECT_GT(count_fences(fenced.sim.contexts[0].program), 0u);

  for (const char* entry : {"train_start", "attack_start"}) {
    SimConfig a = plain.sim;
    SimConfig b = fenced.sim;
    a.contexts[0].entry = plain.layout.at(entry);
    b.contexts[0].entry = fenced.layout.at(entry);
    a.contexts[0].seeds[21] = b.contexts[0].seeds[21] = 5;
    a.contexts[0].seeds[22] = b.contexts[0].seeds[22] = 0xc0;
    EXPECT_TRUE(same_data_registers(interpret(a).contexts[0], interpret(b).contexts[0])) << entry;
  }
  EXPECT_EQ(run_scenario(cfg).accuracy, 0.0);
}

TEST(Overhead, BaselineAndFenceRows) {
  ScenarioConfig cfg = *preset("v1");
  cfg.secret = {'a', 'b', 'c', 'd'};
  MitigationOptions fence;
  fence.fence_after_branches = true;
  auto rows = overhead_report(cfg, {MitigationOptions{}, fence});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_DOUBLE_EQ(rows[0].slowdown, 1.0);
  EXPECT_DOUBLE_EQ(rows[0].accuracy, 1.0);
  EXPECT_GT(rows[1].slowdown, 1.0);
  EXPECT_DOUBLE_EQ(rows[1].accuracy, 0.0);
  const std::string csv = overhead_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "fence,flush,nofill,accuracy,cycles,slowdown");
}

TEST(Overhead, NoSpecFillStopsFlushReloadButNotEvictTime) {
  ScenarioConfig cfg = *preset("v1-evicttime");
  cfg.mitigations.no_spec_fill = true;
  AttackReport r = run_scenario(cfg);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.0);
  ASSERT_EQ(r.evict_time.size(), cfg.secret.size());
  for (const auto& b : r.evict_time) {
    EXPECT_GE(b.matching_delta, 196);
    EXPECT_EQ(b.max_other_delta, 0);
    EXPECT_EQ(b.min_other_delta, 0);
    EXPECT_EQ(b.recovered, cfg.secret[b.byte]);
  }
}
