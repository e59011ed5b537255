// Branch target injection: an attacker context trains the shared BTB at an
// address that aliases the victim's indirect jump, evicts the jump's target
// word and yields; the victim then speculatively runs a two-load gadget.
#include <stdexcept>

#include "attack_util.hpp"
#include "specsim/attacks.hpp"

namespace specsim {

namespace {

// Victim virtual layout.
constexpr Addr kVictimText = 0x400000;
constexpr Addr kVictimData = 0x600000;
constexpr Addr kJumpPtr = 0x600040;  // L1 set 1: no probe entry maps there
constexpr Addr kVictimSecret = 0x600080;
constexpr Addr kVictimProbe = 0x900000;
// Attacker virtual layout.
constexpr Addr kAttackerText = 0x500000;
constexpr Addr kAttackerMain = 0x501000;
constexpr Addr kArena = 0x10000000;
constexpr Addr kArenaSize = 0x800000;
// Shared.
constexpr Addr kInput = 0xA00000;

// Physical pages.
constexpr Addr kPhysVictimText = 0x1400000;
constexpr Addr kPhysAttackerText = 0x1500000;
constexpr Addr kPhysVictimData = 0x1600000;
constexpr Addr kPhysGadget = 0x1700000;
constexpr Addr kPhysProbe = 0x800000;
constexpr Addr kPhysInput = 0xA00000;

constexpr int kPassesReg = 21;
constexpr int kR1Value = 10;
constexpr int kR2Value = 11;

Addr page_round(Addr n) { return (n + kPageSize - 1) / kPageSize * kPageSize; }

std::string victim_source(const ScenarioConfig& cfg, const GadgetSpec& g, Addr legit) {
  using detail::hex;
  std::ostringstream s;
  const std::string r1 = "r" + std::to_string(g.r1);
  const std::string r2 = "r" + std::to_string(g.r2);
  s << ".org " << hex(kVictimText) << "\n_start:\n";
  for (Addr line = kVictimSecret & ~Addr{63}; line < kVictimSecret + cfg.secret.size(); line += 64) {
    s << "  LOAD r6, [r0 + " << hex(std::max(line, kVictimSecret)) << "]\n";
  }
  // Two 64-bit request words from the shared input page.
  for (auto [reg, off] : {std::pair{r1, 0}, std::pair{r2, 8}}) {
    s << "  LOAD " << reg << ", [r0 + " << hex(kInput + off + 7) << "]\n";
    for (int b = 6; b >= 0; --b) {
      s << "  SHL " << reg << ", " << reg << ", 8\n"
        << "  LOAD r7, [r0 + " << hex(kInput + off + b) << "]\n"
        << "  OR " << reg << ", " << reg << ", r7\n";
    }
  }
  s << "  MOVI r3, 3\n"
    << "jump_site:\n"
    << "  JMPM [r0 + " << hex(kJumpPtr) << "]\n"
    << "  HALT\n"
    << "legit:\n"
    << "  HALT\n";
  // Gadget in a shared-library page of the victim.
  s << ".org " << hex(g.address) << "\ngadget:\n"
    << "  LOAD r4, [" << r1 << " + r3*1 + " << hex(static_cast<Addr>(g.displacement)) << "]\n"
    << detail::scale_by_stride("r4", "r4", cfg.probe.stride)
    << "  LOAD r5, [" << r2 << " + r4*1]\n"
    << "  HALT\n";
  std::vector<std::uint8_t> ptr;
  for (int b = 0; b < 8; ++b) ptr.push_back(static_cast<std::uint8_t>(legit >> (8 * b)));
  s << detail::byte_directives(kJumpPtr, ptr);
  s << detail::byte_directives(kVictimSecret, cfg.secret);
  return s.str();
}

std::string attacker_source(const ScenarioConfig& cfg, Addr trainer_pc, Addr gadget,
                            const std::vector<Addr>& eviction) {
  using detail::hex;
  std::ostringstream s;
  s << ".org " << hex(kAttackerMain) << "\n_start:\n"
    << "  MOVI r20, 0\n"
    << "  MOVI r5, " << hex(gadget) << "\n"
    << "  JMP trainer\n"
    // Each training jump lands on a page this context cannot execute; the
    // fault comes back here.
    << "handler:\n"
    << "  ADD r20, r20, 1\n"
    << "  BLT r20, r" << kPassesReg << ", trainer\n";
  for (auto [reg, off] : {std::pair{kR1Value, 0}, std::pair{kR2Value, 8}}) {
    s << "  ADD r12, r" << reg << ", 0\n";
    for (int b = 0; b < 8; ++b) {
      s << "  STORE r12, [r0 + " << hex(kInput + off + b) << "]\n"
        << "  SHR r12, r12, 8\n";
    }
  }
  if (cfg.evict_jump_target) {
    for (Addr a : eviction) s << "  LOAD r9, [r0 + " << hex(a) << "]\n";
  }
  s << "  YIELD\n"
    << "  HALT\n";
  s << ".org " << hex(trainer_pc) << "\ntrainer:\n"
    << "  JMPR r5\n";
  return s.str();
}

}  // namespace

Scenario build_v2(const ScenarioConfig& config, const GadgetSpec& gadget) {
  config.validate();
  if (config.variant != Variant::V2_btb) throw std::invalid_argument("build_v2 needs the branch-target variant");
  if (config.secret.size() > kPageSize - (kVictimSecret - kVictimData)) {
    throw std::invalid_argument("secret does not fit the victim data page");
  }
  if (gadget.r1 == 0 || gadget.r2 == 0 || gadget.r1 == gadget.r2 || gadget.r1 > 8 || gadget.r2 > 8 ||
      gadget.r1 == 3 || gadget.r2 == 3 || gadget.r1 == 6 || gadget.r2 == 6) {
    throw std::invalid_argument("gadget registers must be distinct, in r1..r8, and not r3 or r6");
  }
  if (gadget.address % kPageSize) throw std::invalid_argument("gadget address must be page-aligned");

  Scenario sc;
  sc.config = config;
  sc.sim = config.sim;
  sc.sim.contexts.clear();

  // Assemble once to learn where `legit` and `jump_site` land.
  Program draft = assemble(victim_source(config, gadget, 0));
  const Addr legit = draft.label("legit");
  Program victim = assemble(victim_source(config, gadget, legit));
  const Addr jump_pc = victim.label("jump_site");

  const unsigned observe = config.predictor.observe_bits;
  const Addr trainer_pc = jump_pc + (Addr{1} << observe);
  if (trainer_pc < kAttackerText || trainer_pc >= kAttackerMain) {
    throw std::invalid_argument("no alias address available in the attacker text segment");
  }

  ContextDescriptor v;
  v.id = 1;
  v.space.map_range(kVictimText, kPhysVictimText, kPageSize, kRead | kExec);
  v.space.map_range(kVictimData, kPhysVictimData, kPageSize, kRead | kWrite);
  v.space.map_range(gadget.address, kPhysGadget, kPageSize, kRead | kExec);
  const Addr probe_bytes = page_round(config.probe.entries * config.probe.stride);
  v.space.map_range(kVictimProbe, kPhysProbe, probe_bytes, kRead);
  v.space.map_range(kInput, kPhysInput, kPageSize, kRead);
  if (!v.space.translate(gadget.address, kExec)) throw std::invalid_argument("gadget is not executable in the victim");

  ContextDescriptor a;
  a.id = 0;
  a.space.map_range(kAttackerText, kPhysAttackerText, 2 * kPageSize, kRead | kExec);
  a.space.map_range(config.probe.probe_base, kPhysProbe, probe_bytes, kRead);
  a.space.map_range(kInput, kPhysInput, kPageSize, kRead | kWrite);
  a.space.map_range(kArena, kArena, kArenaSize, kRead | kWrite);

  const CacheConfig& cc = config.cache;
  const std::size_t ways = std::max({cc.l1.ways, cc.l2.ways, cc.llc.ways});
  const Addr jump_ptr_pa = *v.space.translate(kJumpPtr, 0);
  const auto congruent = congruent_addresses(cc, jump_ptr_pa, ways + 4, a.space, EvictionArena{kArena, kArenaSize});
  Program attacker = assemble(attacker_source(config, trainer_pc, gadget.address, eviction_walk(congruent)));
  if (config.mitigations.fence_after_branches) {
    attacker = insert_fences(attacker);
    victim = insert_fences(victim);
  }
  a.program = attacker;
  a.fault_handler = attacker.label("handler");
  v.program = victim;

  sc.sim.contexts.push_back(std::move(a));
  sc.sim.contexts.push_back(std::move(v));
  sc.attacker_ctx = 0;
  sc.victim_ctx = 1;
  sc.arena = EvictionArena{kArena, kArenaSize};
  sc.layout = {{"victim_jump", jump_pc},
               {"trainer", attacker.label("trainer")},
               {"gadget", gadget.address},
               {"jump_ptr", kJumpPtr},
               {"jump_ptr_pa", jump_ptr_pa},
               {"secret", kVictimSecret},
               {"victim_probe", kVictimProbe},
               {"probe", config.probe.probe_base},
               {"input", kInput},
               {"legit", victim.label("legit")},
               {"displacement", static_cast<Addr>(gadget.displacement)}};
  for (std::size_t i = 0; i < config.secret.size(); ++i) sc.secret_addresses.push_back(kVictimSecret + i);
  return sc;
}

AttackReport run_v2(const Scenario& sc) {
  const ScenarioConfig& cfg = sc.config;
  const MitigationOptions& opt = cfg.mitigations;
  AttackReport rep;
  rep.variant = cfg.variant;
  rep.mitigations = opt;
  const bool keep = cfg.sim.record_events;

  MemorySystem mem(cfg.cache);
  load_program_data(sc.sim, mem.memory);
  PredictorState bp(cfg.predictor);
  const ContextDescriptor& attacker = sc.sim.contexts[sc.attacker_ctx];

  // The victim runs once on its own with an empty request.
  {
    SimConfig warm = sc.sim;
    warm.contexts = {sc.sim.contexts[sc.victim_ctx]};
    detail::accumulate(rep, run(warm, mem, bp, opt), keep);
  }

  SimConfig both = sc.sim;
  ContextDescriptor& a = both.contexts[sc.attacker_ctx];
  a.seeds[kPassesReg] = cfg.training_passes;
  a.seeds[kR2Value] = sc.layout.at("victim_probe");
  const Addr disp = sc.layout.at("displacement");

  for (std::size_t j = 0; j < cfg.secret.size(); ++j) {
    ByteResult br;
    br.address = sc.secret_addresses[j];
    // The gadget's first load reads R1 + 3 + displacement.
    a.seeds[kR1Value] = br.address - disp - 3;
    ProbeResult pr;
    for (std::size_t attempt = 1; attempt <= cfg.attempts_per_byte; ++attempt) {
      br.attempts = attempt;
      flush_probe_array(mem, attacker.space, cfg.probe);
      Trace t = run(both, mem, bp, opt);
      detail::accumulate(rep, t, keep);
      pr = reload_and_classify(mem, attacker.space, cfg.probe);
      br.attempt_hot.push_back(pr.hot);
      if (pr.best) break;
    }
    br.hot = pr.hot;
    if (pr.best) br.value = static_cast<std::uint8_t>(*pr.best);
    br.correct = pr.best.has_value() && br.value == cfg.secret[j];
    if (j == 0) rep.first_probe = pr;
    rep.per_byte.push_back(br);
  }
  detail::finish(rep, cfg.secret, bp);
  return rep;
}

}  // namespace specsim
