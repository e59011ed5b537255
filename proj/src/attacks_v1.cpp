// Bounds-check bypass: a victim routine guarded by `x < array1_size` is
// trained in-bounds, then called once with an out-of-bounds x while the
// bound is uncached.
#include <limits>
#include <random>
#include <stdexcept>

#include "attack_util.hpp"
#include "specsim/attacks.hpp"

namespace specsim {

namespace {

constexpr Addr kText = 0x400000;
constexpr Addr kTextSize = 0x40000;
constexpr Addr kData = 0x600000;
constexpr Addr kArray1Size = 0x600000;
constexpr Addr kArray1 = 0x600040;
constexpr Addr kSecret = 0x600100;
constexpr std::size_t kArray1Len = 16;
constexpr Addr kTrainTable = 0x700000;
constexpr Addr kTimedTable = 0xA00000;
constexpr Addr kTimedLines = 0xC00000;
constexpr Addr kArena = 0x10000000;
constexpr Addr kArenaSize = 0x800000;

// Registers with fixed roles in the generated code.
constexpr int kPassesReg = 21;
constexpr int kMaliciousXReg = 22;
constexpr int kByteIndexReg = 23;
constexpr int kBenignOffsetReg = 24;
constexpr int kIterationsReg = 26;

Addr page_round(Addr n) { return (n + kPageSize - 1) / kPageSize * kPageSize; }

// One block of fresh lines per Evict+Time iteration.
Addr timed_block(const ScenarioConfig& cfg) { return page_round((cfg.training_passes + 1) * 64); }

std::string v1_source(const ScenarioConfig& cfg) {
  using detail::hex;
  const std::size_t stride = cfg.probe.stride;
  const Addr probe = cfg.probe.probe_base;
  std::ostringstream s;
  s << ".org " << hex(kText) << "\n";
  // Training run: the victim touches its own secret, then in-bounds calls.
  s << "train_start:\n"
    << "  CALL victim_use_secret\n"
    << "  MOVI r20, 0\n"
    << "train_loop:\n"
    << "  CALL scrub\n"
    << "  LOAD r1, [r20 + " << hex(kTrainTable) << "]\n"
    << "  CALL victim\n"
    << "  ADD r20, r20, 1\n"
    << "  BLT r20, r" << kPassesReg << ", train_loop\n"
    << "  HALT\n";
  // Attack run: one out-of-bounds call.
  s << "attack_start:\n"
    << "  CALL scrub\n"
    << "  ADD r1, r" << kMaliciousXReg << ", 0\n"
    << "  CALL victim\n"
    << "  HALT\n";
  // A countdown loop that leaves the global history in the same state
  // before every victim call.
  s << "scrub:\n"
    << "  MOVI r25, " << std::max(2u, cfg.predictor.history_bits + 1) << "\n"
    << "scrub_loop:\n"
    << "  SUB r25, r25, 1\n"
    << "  BLT r0, r25, scrub_loop\n"
    << "  RET\n";
  s << "victim_use_secret:\n";
  for (Addr line = kSecret & ~Addr{63}; line < kSecret + cfg.secret.size(); line += 64) {
    s << "  LOAD r6, [r0 + " << hex(std::max(line, kSecret)) << "]\n";
  }
  s << "  RET\n";
  // if (x < array1_size) y = array2[array1[x] * stride];
  s << "victim:\n"
    << "  BLT r1, [r0 + " << hex(kArray1Size) << "], victim_body\n"
    << "  RET\n"
    << "victim_body:\n";
  for (std::size_t i = 0; i < cfg.pad; ++i) s << "  ADD r9, r9, 1\n";
  s << "  LOAD r4, [r1 + " << hex(kArray1) << "]\n"
    << detail::scale_by_stride("r4", "r4", stride)
    << "  LOAD r5, [r4 + " << hex(probe) << "]\n"
    << "  RET\n";

  // Evict+Time victim: the last of passes+1 iterations mispredicts into a
  // read of timed_table[secret * stride], then reads a fresh line. The body
  // shifts that fresh line into a separate block, so the line the correct
  // path reads is never warmed by the wrong path.
  s << "et_start:\n"
    << "  LOAD r8, [r" << kByteIndexReg << " + " << hex(kSecret) << "]\n"
    << detail::scale_by_stride("r8", "r8", stride)
    << "  MOVI r20, 0\n"
    << "et_loop:\n"
    << "  CALL scrub\n"
    // r7 = (r20 == passes) ? r8 : benign offset, without a branch
    << "  XOR r10, r20, r" << kPassesReg << "\n"
    << "  SUB r10, r10, 1\n"
    << "  SHR r10, r10, 63\n"
    << "  SUB r10, r0, r10\n"
    << "  XOR r11, r8, r" << kBenignOffsetReg << "\n"
    << "  AND r11, r11, r10\n"
    << "  XOR r7, r" << kBenignOffsetReg << ", r11\n"
    << "  SHL r13, r20, 6\n"
    // The loop bound comes out of a slow multiply chain.
    << "  MUL r12, r" << kPassesReg << ", 1\n";
  for (int i = 0; i < 11; ++i) s << "  MUL r12, r12, 1\n";
  s << "  BLT r20, r12, et_body\n"
    << "  JMP et_join\n"
    << "et_body:\n"
    << "  LOAD r14, [r7 + " << hex(kTimedTable) << "]\n"
    << "  ADD r13, r13, " << hex(timed_block(cfg)) << "\n"
    << "et_join:\n"
    << "  LOAD r15, [r13 + " << hex(kTimedLines) << "]\n"
    << "  ADD r20, r20, 1\n"
    << "  BLT r20, r" << kIterationsReg << ", et_loop\n"
    << "  HALT\n";

  std::vector<std::uint8_t> size_byte{static_cast<std::uint8_t>(kArray1Len)};
  std::vector<std::uint8_t> array1;
  for (std::size_t i = 0; i < kArray1Len; ++i) array1.push_back(static_cast<std::uint8_t>(i + 1));
  s << detail::byte_directives(kArray1Size, size_byte);
  s << detail::byte_directives(kArray1, array1);
  s << detail::byte_directives(kSecret, cfg.secret);
  return s.str();
}

}  // namespace

Scenario build_v1(const ScenarioConfig& config) {
  config.validate();
  if (config.variant == Variant::V2_btb) throw std::invalid_argument("build_v1 needs a bounds-check variant");
  if (config.probe.probe_base % kPageSize) throw std::invalid_argument("probe base must be page-aligned");
  if (config.training_passes > kPageSize) throw std::invalid_argument("training_passes is limited to 4096");

  Scenario sc;
  sc.config = config;
  sc.sim = config.sim;
  sc.sim.contexts.clear();

  Program prog = assemble(v1_source(config));
  if (config.mitigations.fence_after_branches) prog = insert_fences(prog);
  if (prog.text.back().address >= kText + kTextSize) throw std::invalid_argument("victim code does not fit its text pages");

  ContextDescriptor ctx;
  ctx.id = 0;
  ctx.program = prog;
  AddressSpace& sp = ctx.space;
  const std::size_t stride = config.probe.stride;
  sp.map_range(kText, kText, kTextSize, kRead | kExec);
  sp.map_range(kData, kData, kPageSize, kRead | kWrite);
  sp.map_range(kTrainTable, kTrainTable, kPageSize, kRead | kWrite);
  const Addr probe_bytes = page_round(config.probe.entries * stride);
  if (config.probe.probe_base < kTrainTable + kPageSize && config.probe.probe_base + probe_bytes > kData) {
    throw std::invalid_argument("probe array overlaps scenario data");
  }
  sp.map_range(config.probe.probe_base, config.probe.probe_base, probe_bytes, kRead | kWrite);
  sp.map_range(kTimedTable, kTimedTable, page_round((config.probe.entries + 1) * stride), kRead | kWrite);
  sp.map_range(kTimedLines, kTimedLines, 2 * timed_block(config), kRead | kWrite);
  sp.map_range(kArena, kArena, kArenaSize, kRead | kWrite);
  sc.sim.contexts.push_back(std::move(ctx));

  sc.arena = EvictionArena{kArena, kArenaSize};
  sc.layout = {{"text", kText},
               {"array1_size", kArray1Size},
               {"array1", kArray1},
               {"secret", kSecret},
               {"train_table", kTrainTable},
               {"probe", config.probe.probe_base},
               {"timed_table", kTimedTable},
               {"timed_lines", kTimedLines},
               {"arena", kArena},
               {"victim_branch", prog.label("victim")},
               {"train_start", prog.label("train_start")},
               {"attack_start", prog.label("attack_start")},
               {"et_start", prog.label("et_start")}};
  for (std::size_t i = 0; i < config.secret.size(); ++i) sc.secret_addresses.push_back(kSecret + i);
  return sc;
}

namespace {

// Runs the Evict+Time experiment for every secret byte over all probe lines.
void evict_time_experiment(const Scenario& sc, const MemorySystem& mem, const PredictorState& bp, AttackReport& rep) {
  const ScenarioConfig& cfg = sc.config;
  const AddressSpace& space = sc.sim.contexts[0].space;
  for (std::size_t j = 0; j < cfg.secret.size(); ++j) {
    SimConfig e = sc.sim;
    e.record_events = false;
    ContextDescriptor& c = e.contexts[0];
    c.entry = sc.layout.at("et_start");
    c.seeds[kPassesReg] = cfg.training_passes;
    c.seeds[kByteIndexReg] = j;
    c.seeds[kBenignOffsetReg] = cfg.probe.entries * cfg.probe.stride;
    c.seeds[kIterationsReg] = cfg.training_passes + 1;
    VictimRunner victim = [&](MemorySystem& m) {
      PredictorState p = bp;
      return run(e, m, p, cfg.mitigations).cycles;
    };
    EvictTimeByte out;
    out.byte = j;
    out.min_other_delta = std::numeric_limits<std::int64_t>::max();
    out.max_other_delta = std::numeric_limits<std::int64_t>::min();
    std::vector<std::size_t> positive;
    for (std::size_t v = 0; v < cfg.probe.entries; ++v) {
      EvictTimeResult r = evict_time(victim, sc.layout.at("timed_table") + v * cfg.probe.stride, space, mem);
      if (r.delta() > 0) positive.push_back(v);
      if (v == cfg.secret[j]) {
        out.matching_delta = r.delta();
      } else {
        out.max_other_delta = std::max(out.max_other_delta, r.delta());
        out.min_other_delta = std::min(out.min_other_delta, r.delta());
      }
    }
    if (positive.size() == 1) out.recovered = static_cast<std::uint8_t>(positive.front());
    rep.evict_time.push_back(out);
  }
}

}  // namespace

AttackReport run_v1(const Scenario& sc) {
  const ScenarioConfig& cfg = sc.config;
  const MitigationOptions& opt = cfg.mitigations;
  AttackReport rep;
  rep.variant = cfg.variant;
  rep.mitigations = opt;

  MemorySystem mem(cfg.cache);
  load_program_data(sc.sim, mem.memory);
  PredictorState bp(cfg.predictor);
  std::mt19937_64 rng(cfg.seed);
  const AddressSpace& space = sc.sim.contexts[0].space;
  auto pa = [&](Addr va) { return *space.translate(va, 0); };
  const bool keep = cfg.sim.record_events;

  SimConfig train = sc.sim;
  train.contexts[0].entry = sc.layout.at("train_start");
  train.contexts[0].seeds[kPassesReg] = cfg.training_passes;
  SimConfig attack = sc.sim;
  attack.contexts[0].entry = sc.layout.at("attack_start");

  for (std::size_t j = 0; j < cfg.secret.size(); ++j) {
    ByteResult br;
    br.address = sc.secret_addresses[j];
    attack.contexts[0].seeds[kMaliciousXReg] = br.address - sc.layout.at("array1");
    ProbeResult pr;
    for (std::size_t attempt = 1; attempt <= cfg.attempts_per_byte; ++attempt) {
      br.attempts = attempt;
      for (std::size_t p = 0; p < cfg.training_passes; ++p) {
        mem.memory.write_byte(pa(sc.layout.at("train_table") + p), static_cast<std::uint8_t>(rng() % kArray1Len));
      }
      detail::accumulate(rep, run(train, mem, bp, opt), keep);

      if (cfg.variant == Variant::V1_flush) {
        flush_probe_array(mem, space, cfg.probe);
        mem.flush_line(pa(sc.layout.at("array1_size")));
      } else {
        evict_probe_array(mem, space, cfg.probe, sc.arena);
        evict_line(mem, space, sc.layout.at("array1_size"), sc.arena);
      }

      std::optional<Trace> replay;
      MemorySystem replay_mem(cfg.cache);
      if (cfg.check_residue) {
        replay_mem = mem;
        PredictorState replay_bp = bp;
        SimConfig perfect = attack;
        perfect.perfect_prediction = true;
        perfect.record_events = false;
        replay = run(perfect, replay_mem, replay_bp, opt);
      }
      Trace tb = run(attack, mem, bp, opt);
      detail::accumulate(rep, tb, keep);
      if (replay) {
        const Addr selected = pa(cfg.probe.probe_base + cfg.secret[j] * cfg.probe.stride);
        ResidueCheck rc;
        rc.byte = j;
        rc.attempt = attempt;
        rc.selected_line = mem.caches.lookup(selected);
        rc.replay_selected_line = replay_mem.caches.lookup(selected);
        rc.registers_match = same_architecture(tb.contexts[0], replay->contexts[0]);
        rep.residue.push_back(rc);
      }

      pr = reload_and_classify(mem, space, cfg.probe);
      br.attempt_hot.push_back(pr.hot);
      if (pr.best) break;
    }
    br.hot = pr.hot;
    if (pr.best) br.value = static_cast<std::uint8_t>(*pr.best);
    br.correct = pr.best.has_value() && br.value == cfg.secret[j];
    if (j == 0) rep.first_probe = pr;
    rep.per_byte.push_back(br);
  }

  if (cfg.evict_time) evict_time_experiment(sc, mem, bp, rep);
  detail::finish(rep, cfg.secret, bp);
  return rep;
}

}  // namespace specsim
