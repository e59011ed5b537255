#include <gtest/gtest.h>

#include "specsim/mitigations.hpp"
#include "specsim/pipeline.hpp"
#include "support.hpp"

using namespace specsim;
using specsim::testing::single_context;
using specsim::testing::text_program;

namespace {

struct Outcome {
  Trace trace;
  MemorySystem mem;
};

PredictorState flat_predictor();

Outcome run_program(const SimConfig& cfg, const MitigationOptions& opt = {}, PredictorState* bp = nullptr) {
  Outcome out{Trace{}, MemorySystem{}};
  load_program_data(cfg, out.mem.memory);
  PredictorState local = flat_predictor();
  out.trace = run(cfg, out.mem, bp ? *bp : local, opt);
  return out;
}

}  // namespace

TEST(Pipeline, StraightLineMatchesInterpreterWithoutSquashes) {
  Program p = text_program(R"(
    MOVI r1, 6
    MOVI r2, 7
    MUL r3, r1, r2
    SUB r4, r3, 2
    SHL r5, r4, 3
    XOR r6, r5, r1
    HALT
  )");
  SimConfig cfg = single_context(p);
  Outcome o = run_program(cfg);
  InOrderResult ref = interpret_in_order(cfg, MemoryImage{});
  EXPECT_EQ(o.trace.squashed, 0u);
  EXPECT_TRUE(same_architecture(o.trace.contexts[0], ref.contexts[0]));
  EXPECT_EQ(o.trace.contexts[0].regs[3], 42u);
  EXPECT_EQ(o.trace.contexts[0].regs[6], ((42u - 2) << 3) ^ 6u);
  EXPECT_EQ(squash_depth_report(o.trace), 0u);
}

TEST(Pipeline, LoopSumsOneToTen) {
  Program p = text_program(R"(
      MOVI r1, 0
      MOVI r2, 1
    top:
      ADD r1, r1, r2
      ADD r2, r2, 1
      BLT r2, r3, top
      HALT
  )");
  SimConfig cfg = single_context(p);
  cfg.contexts[0].seeds[3] = 11;
  Outcome o = run_program(cfg);
  InOrderResult ref = interpret_in_order(cfg, MemoryImage{});
  EXPECT_EQ(ref.contexts[0].regs[1], 55u);
  EXPECT_EQ(o.trace.contexts[0].regs[1], 55u);
  EXPECT_TRUE(o.trace.contexts[0].halted);
}

TEST(Pipeline, StoreForwardingAndMemoryMatchInterpreter) {
  Program p = text_program(R"(
      MOVI r1, 0x41
      STORE r1, [r0 + 0x10010]
      LOAD r2, [r0 + 0x10010]
      ADD r3, r2, 1
      STORE r3, [r0 + 0x10011]
      LOAD r4, [r0 + 0x10011]
      HALT
  )");
  SimConfig cfg = single_context(p);
  Outcome o = run_program(cfg);
  InOrderResult ref = interpret_in_order(cfg, MemoryImage{});
  EXPECT_EQ(o.trace.contexts[0].regs[4], 0x42u);
  EXPECT_TRUE(same_architecture(o.trace.contexts[0], ref.contexts[0]));
  EXPECT_EQ(o.mem.memory, ref.memory);
}

TEST(Pipeline, RandomProgramsMatchInterpreter) {
  specsim::testing::ProgramGenerator gen(7);
  for (int i = 0; i < 300; ++i) {
    std::string src = gen.generate();
    Program p = assemble(src);
    for (std::size_t rob : {std::size_t{192}, std::size_t{5}}) {
      SimConfig cfg = single_context(p, rob);
      MemoryImage initial;
      load_program_data(cfg, initial);
      InOrderResult ref = interpret_in_order(cfg, initial);
      Outcome o = run_program(cfg);
      ASSERT_FALSE(ref.fault.has_value()) << src;
      ASSERT_FALSE(o.trace.fault.has_value()) << o.trace.fault->reason << "\n" << src;
      ASSERT_TRUE(same_architecture(o.trace.contexts[0], ref.contexts[0])) << "rob " << rob << "\n" << src;
      ASSERT_EQ(o.mem.memory, ref.memory) << src;
    }
  }
}

TEST(Pipeline, WrongPathFaultIsSuppressedAndFillsNothing) {
  Program p = text_program(R"(
      MOVI r1, 1
      BEQ r1, r1, skip
      LOAD r2, [r0 + 0xdead0000]
      LOAD r3, [r0 + 0x10000]
    skip:
      HALT
  )");
  SimConfig cfg = single_context(p);
  cfg.contexts[0].space.map_range(0x20000, 0x20000, kPageSize, 0);  // mapped, no permissions
  cfg.record_events = true;
  Outcome o = run_program(cfg);
  EXPECT_FALSE(o.trace.fault.has_value());
  EXPECT_GT(o.trace.squashed, 0u);
  EXPECT_EQ(o.trace.contexts[0].regs[2], 0u);
  // The unmapped load never reached the hierarchy.
  for (const auto& e : o.trace.events) {
    if (e.kind == EventKind::issue && e.memory_access) EXPECT_EQ(e.detail.find("0xdead"), std::string::npos);
  }
}

TEST(Pipeline, RetiredFaultEndsRunWithRecord) {
  Program p = text_program(R"(
      MOVI r1, 5
      LOAD r2, [r0 + 0xdead0000]
      MOVI r1, 9
      HALT
  )");
  SimConfig cfg = single_context(p);
  Outcome o = run_program(cfg);
  ASSERT_TRUE(o.trace.fault.has_value());
  EXPECT_EQ(o.trace.fault->pc, 0x400004u);
  EXPECT_EQ(o.trace.contexts[0].regs[1], 5u);
  InOrderResult ref = interpret_in_order(cfg, MemoryImage{});
  ASSERT_TRUE(ref.fault.has_value());
  EXPECT_EQ(ref.fault->pc, 0x400004u);
}

TEST(Pipeline, FaultHandlerReceivesFaultingPc) {
  Program p = text_program(R"(
    _start:
      LOAD r2, [r0 + 0xdead0000]
      HALT
    handler:
      ADD r1, r1, 1
      HALT
  )");
  SimConfig cfg = single_context(p);
  cfg.contexts[0].fault_handler = p.label("handler");
  Outcome o = run_program(cfg);
  EXPECT_FALSE(o.trace.fault.has_value());
  EXPECT_EQ(o.trace.handled_faults, 1u);
  EXPECT_EQ(o.trace.contexts[0].regs[kFaultPcRegister], 0x400000u);
  EXPECT_EQ(o.trace.contexts[0].regs[1], 1u);
}

TEST(Pipeline, FetchFromNonExecutablePageFaults) {
  Program p = text_program("MOVI r1, 0x10000\nJMPR r1\n");
  SimConfig cfg = single_context(p);
  Outcome o = run_program(cfg);
  ASSERT_TRUE(o.trace.fault.has_value());
  EXPECT_EQ(o.trace.fault->pc, 0x10000u);
}

TEST(Pipeline, WatchdogThrows) {
  Program p = text_program("top: JMP top\n");
  SimConfig cfg = single_context(p);
  cfg.max_cycles = 1000;
  MemorySystem mem;
  PredictorState bp;
  EXPECT_THROW(run(cfg, mem, bp), SimTimeout);
  EXPECT_THROW(interpret_in_order(cfg, MemoryImage{}), SimTimeout);
}

TEST(Pipeline, RdcycleReadsExecuteCycle) {
  Program p = text_program("RDCYCLE r1\nLOAD r2, [r0 + 0x10000]\nADD r3, r2, 0\nRDCYCLE r4\nSUB r5, r4, r1\nHALT\n");
  SimConfig cfg = single_context(p);
  Outcome o = run_program(cfg);
  // The second RDCYCLE does not depend on the load, so it runs early.
  EXPECT_LT(o.trace.contexts[0].regs[5], 10u);
  EXPECT_EQ(interpret_in_order(cfg, MemoryImage{}).contexts[0].regs[1], 0u);
}

namespace {

// Trained-taken bounds check against a flushed bound; the out-of-bounds call
// leaks array1[x] through a probe line.
const char* kBoundsCheck = R"(
    _start:
      LOAD r6, [r0 + 0x10041]
      MOVI r20, 0
    train:
      MOVI r1, 1
      CALL victim
      ADD r20, r20, 1
      BLT r20, r21, train
      CLFLUSH [r0 + 0x10000]
      CLFLUSH [r0 + 0x12000]
      CLFLUSH [r0 + 0x12200]
      FENCE
      MOVI r1, 0x40
      CALL victim
      HALT
    victim:
      BLT r1, [r0 + 0x10000], body
      RET
    body:
      LOAD r4, [r1 + 0x10001]
      SHL r4, r4, 9
      LOAD r5, [r4 + 0x12000]
      RET
    .org 0x10000
      .byte 16, 0
    .org 0x10041
      .byte 1
)";

// No global history, so the final call sees the same counter as training.
PredictorState flat_predictor() {
  PredictorConfig pc;
  pc.history_bits = 0;
  return PredictorState(pc);
}

SimConfig bounds_config(std::size_t rob = 192) {
  Program p = text_program(kBoundsCheck);
  SimConfig cfg = single_context(p, rob);
  cfg.contexts[0].space.map_range(0x11000, 0x11000, 2 * kPageSize, kRead | kWrite);
  cfg.contexts[0].seeds[21] = 5;
  return cfg;
}

}  // namespace

TEST(Pipeline, SquashedLoadLeavesProbeLineCached) {
  SimConfig cfg = bounds_config();
  Outcome o = run_program(cfg);
  InOrderResult ref = interpret_in_order(cfg, o.mem.memory);
  EXPECT_TRUE(same_architecture(o.trace.contexts[0], ref.contexts[0]));
  EXPECT_GT(o.trace.mispredictions, 0u);
  EXPECT_EQ(o.mem.caches.lookup(0x12200), HitLevel::L1);
  EXPECT_EQ(o.mem.caches.lookup(0x12000), HitLevel::DRAM);
  EXPECT_GE(squash_depth_report(o.trace), 3u);
}

TEST(Pipeline, PerfectPredictionLeavesNoResidue) {
  SimConfig cfg = bounds_config();
  cfg.perfect_prediction = true;
  Outcome o = run_program(cfg);
  EXPECT_EQ(o.trace.mispredictions, 0u);
  EXPECT_EQ(o.trace.squashed, 0u);
  EXPECT_EQ(o.mem.caches.lookup(0x12200), HitLevel::DRAM);
}

TEST(Pipeline, FenceAfterBranchesBlocksLeak) {
  SimConfig cfg = bounds_config();
  cfg.contexts[0].program = insert_fences(cfg.contexts[0].program);
  cfg.record_events = true;
  Outcome o = run_program(cfg);
  EXPECT_EQ(o.mem.caches.lookup(0x12200), HitLevel::DRAM);
  for (const auto& e : o.trace.events) {
    if (e.kind == EventKind::issue && e.memory_access) EXPECT_FALSE(e.under_conditional) << e.detail;
  }
}

TEST(Pipeline, NoSpecFillKeepsProbeUncached) {
  SimConfig cfg = bounds_config();
  MitigationOptions opt;
  opt.no_spec_fill = true;
  Outcome o = run_program(cfg, opt);
  EXPECT_EQ(o.mem.caches.lookup(0x12200), HitLevel::DRAM);
}

TEST(Pipeline, SmallWindowCannotReachLeak) {
  SimConfig cfg = bounds_config(3);
  Outcome o = run_program(cfg);
  EXPECT_EQ(o.mem.caches.lookup(0x12200), HitLevel::DRAM);
  EXPECT_LE(squash_depth_report(o.trace), 3u);
}

TEST(Pipeline, WindowNeverExceedsRobSize) {
  SimConfig cfg = bounds_config(8);
  cfg.record_events = true;
  Outcome o = run_program(cfg);
  std::map<std::uint64_t, bool> live;
  std::size_t inflight = 0;
  for (const auto& e : o.trace.events) {
    if (e.kind == EventKind::fetch) ++inflight;
    if (e.kind == EventKind::retire || e.kind == EventKind::squash) --inflight;
    EXPECT_LE(inflight, 8u);
  }
}

TEST(Pipeline, YieldSwitchesBetweenContexts) {
  Program a = text_program("MOVI r1, 1\nYIELD\nMOVI r1, 3\nHALT\n");
  Program b = text_program("MOVI r1, 2\nYIELD\nMOVI r1, 4\nHALT\n");
  SimConfig cfg = single_context(a);
  ContextDescriptor second = cfg.contexts[0];
  second.id = 1;
  second.program = b;
  cfg.contexts.push_back(second);
  cfg.record_events = true;
  Outcome o = run_program(cfg);
  EXPECT_EQ(o.trace.contexts[0].regs[1], 3u);
  EXPECT_EQ(o.trace.contexts[1].regs[1], 4u);
  int switches = 0;
  for (const auto& e : o.trace.events) switches += e.kind == EventKind::switch_ctx;
  EXPECT_EQ(switches, 3);
}

TEST(Pipeline, FlushOnSwitchClearsPredictor) {
  Program a = text_program("MOVI r5, 0x400100\nJMPR r5\n.org 0x400100\nYIELD\nHALT\n");
  SimConfig cfg = single_context(a);
  PredictorState bp;
  MitigationOptions opt;
  opt.flush_on_switch = true;
  run_program(cfg, opt, &bp);
  EXPECT_FALSE(bp.btb_entry(bp.btb_index(0x400004)).valid);
  PredictorState kept;
  run_program(cfg, {}, &kept);
  EXPECT_TRUE(kept.btb_entry(kept.btb_index(0x400004)).valid);
}

TEST(Pipeline, EventLogSerializesAsJsonLines) {
  Program p = text_program("MOVI r1, 1\nHALT\n");
  SimConfig cfg = single_context(p);
  cfg.record_events = true;
  Outcome o = run_program(cfg);
  std::string text = events_jsonl(o.trace.events);
  EXPECT_NE(text.find(R"("event":"fetch")"), std::string::npos);
  EXPECT_NE(text.find(R"("event":"retire")"), std::string::npos);
  EXPECT_EQ(text.substr(0, 9), R"({"cycle":)");
}
