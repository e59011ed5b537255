#include "specsim/pipeline.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "semantics.hpp"

namespace specsim {

bool same_architecture(const ArchState& a, const ArchState& b) {
  return a.regs == b.regs && a.halted == b.halted && a.faulted.has_value() == b.faulted.has_value();
}

void SimConfig::validate() const {
  if (rob_size < 1) throw std::invalid_argument("rob_size must be at least 1");
  if (fetch_width < 1) throw std::invalid_argument("fetch_width must be at least 1");
  if (retire_width < 1) throw std::invalid_argument("retire_width must be at least 1");
  if (contexts.empty()) throw std::invalid_argument("at least one context is required");
  for (const auto& c : contexts) {
    for (const auto& t : c.program.text) {
      if (!c.space.translate(t.address, kExec)) {
        std::ostringstream os;
        os << "context " << c.id << ": text at 0x" << std::hex << t.address << " is not on an executable page";
        throw std::invalid_argument(os.str());
      }
    }
  }
}

const char* to_string(EventKind kind) {
  switch (kind) {
    case EventKind::fetch: return "fetch";
    case EventKind::issue: return "issue";
    case EventKind::complete: return "complete";
    case EventKind::squash: return "squash";
    case EventKind::retire: return "retire";
    case EventKind::switch_ctx: return "switch";
  }
  return "?";
}

std::string events_jsonl(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : events) {
    nlohmann::ordered_json j;
    j["cycle"] = e.cycle;
    j["ctx"] = e.ctx;
    j["seq"] = e.seq;
    j["event"] = to_string(e.kind);
    j["pc"] = e.pc;
    j["detail"] = e.detail;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void load_program_data(const SimConfig& config, MemoryImage& memory) {
  for (const auto& c : config.contexts) {
    for (const auto& seg : c.program.data) {
      for (std::size_t i = 0; i < seg.bytes.size(); ++i) {
        auto pa = c.space.translate(seg.address + i, 0);
        if (!pa) {
          std::ostringstream os;
          os << "context " << c.id << ": data byte at 0x" << std::hex << seg.address + i << " is unmapped";
          throw std::invalid_argument(os.str());
        }
        memory.write_byte(*pa, seg.bytes[i]);
      }
    }
  }
}

std::size_t squash_depth_report(const Trace& trace) { return trace.max_speculative_inflight; }

namespace {

std::string hex(Addr a) {
  std::ostringstream os;
  os << "0x" << std::hex << a;
  return os.str();
}

struct Entry {
  std::uint64_t seq = 0;
  Addr pc = 0;
  const Instruction* inst = nullptr;  // null: fetch fault
  ControlClass cls = ControlClass::none;
  std::vector<std::pair<std::uint8_t, std::uint64_t>> srcs;  // register, producer seq (0 = committed)
  int dest = -1;

  bool issued = false;
  bool completed = false;
  Cycles done_at = 0;
  Word value = 0;

  bool is_store = false;
  bool has_paddr = false;
  Addr paddr = 0;
  std::uint8_t store_data = 0;
  bool touch_at_retire = false;
  std::string fault;

  bool checkpointed = false;
  SpeculativeHistory hist_before;
  Addr predicted_next = 0;
  Addr actual_next = 0;
  std::size_t oracle_after = 0;
};

struct CtxState {
  const ContextDescriptor* desc = nullptr;
  ArchState arch;
  std::size_t oracle_pos = 0;
};

class Core {
 public:
  Core(const SimConfig& config, MemorySystem& mem, PredictorState& bp, const MitigationOptions& opt)
      : cfg_(config), mem_(mem), bp_(bp), opt_(opt) {}

  Trace run();

 private:
  bool retire();
  bool complete();
  bool issue();
  bool fetch();

  void execute(std::size_t idx, bool speculative);
  Word read_data(std::size_t idx, Addr va, std::size_t size, bool speculative, bool* ok);
  Word src(const Entry& e, std::uint8_t reg) const;
  bool src_ready(const Entry& e) const;
  const Entry* find(std::uint64_t seq) const;
  void squash_after(std::size_t idx);
  void rebuild_rename();
  bool switch_context();
  void log(EventKind kind, const Entry& e, std::string detail = {}, bool mem = false, bool under_cond = false,
           bool spec = false);

  CtxState& ctx() { return ctxs_[cur_]; }

  const SimConfig& cfg_;
  MemorySystem& mem_;
  PredictorState& bp_;
  MitigationOptions opt_;

  std::vector<CtxState> ctxs_;
  std::size_t cur_ = 0;
  bool done_ = false;
  std::deque<Entry> rob_;
  std::array<std::uint64_t, kNumRegisters> rename_{};
  std::uint64_t next_seq_ = 1;
  Cycles now_ = 0;
  Cycles dram_free_ = 0;
  Addr fetch_pc_ = 0;
  bool fetch_stalled_ = false;

  std::vector<std::vector<Addr>> oracle_;
  std::size_t oracle_pos_ = 0;

  Trace trace_;
  // Speculation status of the instruction being issued.
  bool under_cond_ = false;
};

void Core::log(EventKind kind, const Entry& e, std::string detail, bool mem, bool under_cond, bool spec) {
  if (!cfg_.record_events) return;
  trace_.events.push_back(Event{now_, cfg_.contexts[cur_].id, e.seq, kind, e.pc, std::move(detail), mem, under_cond, spec});
}

const Entry* Core::find(std::uint64_t seq) const {
  auto it = std::lower_bound(rob_.begin(), rob_.end(), seq, [](const Entry& e, std::uint64_t s) { return e.seq < s; });
  if (it == rob_.end() || it->seq != seq) return nullptr;
  return &*it;
}

Word Core::src(const Entry& e, std::uint8_t reg) const {
  if (reg == 0) return 0;
  for (const auto& [r, seq] : e.srcs) {
    if (r != reg) continue;
    if (seq != 0) {
      if (const Entry* p = find(seq)) return p->value;
    }
    break;
  }
  return ctxs_[cur_].arch.regs[reg];
}

bool Core::src_ready(const Entry& e) const {
  for (const auto& [r, seq] : e.srcs) {
    if (seq == 0) continue;
    const Entry* p = find(seq);
    if (p && !p->completed) return false;
  }
  return true;
}

void Core::rebuild_rename() {
  rename_.fill(0);
  for (const auto& e : rob_) {
    if (e.dest > 0) rename_[e.dest] = e.seq;
  }
}

void Core::squash_after(std::size_t idx) {
  // Restores the speculative history to its value just after rob_[idx] was fetched.
  for (std::size_t i = idx + 1; i < rob_.size(); ++i) {
    if (rob_[i].cls != ControlClass::none) {
      bp_.restore(rob_[i].hist_before);
      break;
    }
  }
  while (rob_.size() > idx + 1) {
    log(EventKind::squash, rob_.back());
    rob_.pop_back();
    ++trace_.squashed;
  }
  oracle_pos_ = rob_[idx].oracle_after;
  fetch_stalled_ = false;
  rebuild_rename();
}

bool Core::switch_context() {
  const std::size_t n = ctxs_.size();
  for (std::size_t k = 1; k <= n; ++k) {
    std::size_t i = (cur_ + k) % n;
    if (ctxs_[i].arch.halted) continue;
    if (opt_.flush_on_switch) bp_.flush();
    const std::size_t from = cur_;
    ctxs_[from].oracle_pos = oracle_pos_;
    cur_ = i;
    fetch_pc_ = ctxs_[i].arch.pc;
    fetch_stalled_ = false;
    oracle_pos_ = ctxs_[i].oracle_pos;
    rename_.fill(0);
    if (cfg_.record_events) {
      trace_.events.push_back(Event{now_, cfg_.contexts[i].id, 0, EventKind::switch_ctx, fetch_pc_,
                                    "from " + std::to_string(cfg_.contexts[from].id)});
    }
    return true;
  }
  done_ = true;
  return false;
}

// ---------------------------------------------------------------------------

bool Core::retire() {
  bool any = false;
  for (std::size_t n = 0; n < cfg_.retire_width && !rob_.empty(); ++n) {
    Entry& e = rob_.front();
    if (!e.completed) break;
    any = true;
    ArchState& arch = ctx().arch;

    if (!e.fault.empty()) {
      const ContextDescriptor& d = *ctx().desc;
      log(EventKind::retire, e, "fault: " + e.fault);
      if (d.fault_handler) {
        squash_after(0);
        ++trace_.handled_faults;
        arch.regs[kFaultPcRegister] = e.pc;
        fetch_pc_ = *d.fault_handler;
        rob_.pop_front();
        rebuild_rename();
        ++trace_.retired;
        return true;
      }
      squash_after(0);
      arch.faulted = FaultRecord{cfg_.contexts[cur_].id, e.pc, e.fault};
      arch.pc = e.pc;
      trace_.fault = arch.faulted;
      rob_.pop_front();
      done_ = true;
      return true;
    }

    if (e.dest > 0) {
      arch.regs[e.dest] = e.value;
      if (rename_[e.dest] == e.seq) rename_[e.dest] = 0;
    }
    const Opcode op = e.inst->op;
    std::string detail;
    if (e.is_store) {
      mem_.access(e.paddr, 1, AccessKind::write, true, e.store_data);
    } else if (op == Opcode::CLFLUSH) {
      mem_.flush_line(e.paddr);
    } else if (e.touch_at_retire) {
      mem_.caches.touch(e.paddr, true);
    }
    if (cfg_.record_events && e.has_paddr) detail = "pa=" + hex(e.paddr);
    log(EventKind::retire, e, std::move(detail));
    ++trace_.retired;
    const Addr pc = e.pc;
    const Addr next = e.actual_next;
    rob_.pop_front();

    if (op == Opcode::YIELD) {
      arch.pc = next;
      switch_context();
      return true;
    }
    if (op == Opcode::HALT) {
      arch.pc = pc;
      arch.halted = true;
      arch.cycle = now_;
      switch_context();
      return true;
    }
  }
  return any;
}

bool Core::complete() {
  bool any = false;
  for (std::size_t i = 0; i < rob_.size(); ++i) {
    Entry& e = rob_[i];
    if (!e.issued || e.completed || e.done_at > now_) continue;
    e.completed = true;
    any = true;
    log(EventKind::complete, e);
    if (e.cls == ControlClass::none || !e.fault.empty()) continue;
    const bool taken = e.actual_next != e.pc + kInstructionWidth;
    if (e.cls == ControlClass::conditional || e.cls == ControlClass::indirect) {
      bp_.train(e.pc, e.cls, taken, e.actual_next, e.hist_before.ghr);
    }
    if (e.predicted_next != e.actual_next) {
      ++trace_.mispredictions;
      squash_after(i);
      bp_.restore(e.hist_before);
      bp_.speculate(e.pc, e.cls, taken);
      fetch_pc_ = e.actual_next;
    }
  }
  return any;
}

Word Core::read_data(std::size_t idx, Addr va, std::size_t size, bool speculative, bool* ok) {
  Entry& e = rob_[idx];
  *ok = false;
  if (size > 1 && va % size) {
    e.fault = "misaligned memory operand";
    return 0;
  }
  auto pa = ctx().desc->space.translate(va, kRead);
  if (!pa) {
    e.fault = "load from unmapped or unreadable address";
    return 0;
  }
  *ok = true;
  e.has_paddr = true;
  e.paddr = *pa;

  std::array<std::optional<std::uint8_t>, 8> fwd{};
  std::size_t forwarded = 0;
  for (std::size_t b = 0; b < size; ++b) {
    for (std::size_t j = idx; j-- > 0;) {
      const Entry& s = rob_[j];
      if (s.is_store && s.fault.empty() && s.paddr == *pa + b) {
        fwd[b] = s.store_data;
        ++forwarded;
        break;
      }
    }
  }
  Word value = mem_.memory.read(*pa, size);
  for (std::size_t b = 0; b < size; ++b) {
    if (!fwd[b]) continue;
    value &= ~(Word{0xff} << (8 * b));
    value |= Word{*fwd[b]} << (8 * b);
  }
  if (forwarded == size) {
    e.done_at = now_ + cfg_.latencies.alu;
    return value;
  }
  const bool fill = !(opt_.no_spec_fill && speculative);
  const HitLevel level = mem_.caches.touch(*pa, fill);
  if (!fill) e.touch_at_retire = true;
  Cycles latency = mem_.caches.latency(level);
  if (level == HitLevel::DRAM) {
    const Cycles start = std::max(now_, dram_free_);
    dram_free_ = start + mem_.caches.config().dram_latency;
    latency = dram_free_ - now_;
  }
  e.done_at = now_ + latency;
  if (cfg_.record_events) {
    log(EventKind::issue, e, "read pa=" + hex(*pa) + " level=" + to_string(level) + (fill ? "" : " nofill"), true,
        false, speculative);
  }
  return value;
}

void Core::execute(std::size_t idx, bool speculative) {
  const Instruction& in = *rob_[idx].inst;
  const Opcode op = in.op;
  auto reg = [&](std::uint8_t r) { return src(rob_[idx], r); };
  auto ea_of = [&](const MemOperand& m) {
    return detail::effective_address(m, m.base ? reg(*m.base) : 0, m.index ? reg(*m.index) : 0);
  };
  {
    Entry& e = rob_[idx];
    e.issued = true;
    e.done_at = now_ + cfg_.latencies.alu;
    e.actual_next = e.pc + kInstructionWidth;
  }
  bool ok = false;
  if (detail::is_alu(op)) {
    const Operand& o2 = in.operands[2];
    Word b = std::holds_alternative<Reg>(o2) ? reg(std::get<Reg>(o2).id) : static_cast<Word>(std::get<Imm>(o2).value);
    Entry& e = rob_[idx];
    e.value = detail::alu(op, reg(in.reg(1).id), b);
    if (op == Opcode::MUL) e.done_at = now_ + cfg_.latencies.mul;
  } else {
    switch (op) {
      case Opcode::MOVI: rob_[idx].value = static_cast<Word>(in.imm(1).value); break;
      case Opcode::RDCYCLE: rob_[idx].value = now_; break;
      case Opcode::LOAD: {
        Word v = read_data(idx, ea_of(in.mem(1)), 1, speculative, &ok);
        rob_[idx].value = v;
        break;
      }
      case Opcode::STORE: {
        Entry& e = rob_[idx];
        auto pa = ctx().desc->space.translate(ea_of(in.mem(1)), kWrite);
        e.is_store = true;
        if (!pa) {
          e.fault = "store to unmapped or read-only address";
        } else {
          e.has_paddr = true;
          e.paddr = *pa;
          e.store_data = static_cast<std::uint8_t>(reg(in.reg(0).id));
        }
        break;
      }
      case Opcode::BEQ:
      case Opcode::BLT: {
        Word b = 0;
        const Operand& o1 = in.operands[1];
        ok = true;
        if (auto r = std::get_if<Reg>(&o1)) {
          b = reg(r->id);
        } else {
          b = read_data(idx, ea_of(std::get<MemOperand>(o1)), 1, speculative, &ok);
        }
        if (ok && detail::branch_taken(op, reg(in.reg(0).id), b)) rob_[idx].actual_next = static_cast<Addr>(in.imm(2).value);
        break;
      }
      case Opcode::JMP: rob_[idx].actual_next = static_cast<Addr>(in.imm(0).value); break;
      case Opcode::JMPR: rob_[idx].actual_next = reg(in.reg(0).id); break;
      case Opcode::JMPM: {
        Word v = read_data(idx, ea_of(in.mem(0)), 8, speculative, &ok);
        if (ok) rob_[idx].actual_next = v;
        break;
      }
      case Opcode::CALL:
        rob_[idx].value = rob_[idx].pc + kInstructionWidth;
        rob_[idx].actual_next = static_cast<Addr>(in.imm(0).value);
        break;
      case Opcode::RET: rob_[idx].actual_next = reg(kLinkRegister); break;
      case Opcode::CLFLUSH: {
        Entry& e = rob_[idx];
        auto pa = ctx().desc->space.translate(ea_of(in.mem(0)), kRead);
        if (!pa) {
          e.fault = "flush of unmapped address";
        } else {
          e.has_paddr = true;
          e.paddr = *pa;
        }
        break;
      }
      default: break;
    }
  }
  if (cfg_.record_events && !detail::reads_memory(in)) {
    log(EventKind::issue, rob_[idx], {}, false, under_cond_, speculative);
  }
}

bool Core::issue() {
  bool any = false;
  bool older_unresolved = false;
  bool older_unresolved_cond = false;
  bool older_store_pending = false;
  for (std::size_t i = 0; i < rob_.size(); ++i) {
    Entry& e = rob_[i];
    if (!e.issued && e.inst && src_ready(e) && !(older_store_pending && detail::reads_memory(*e.inst))) {
      under_cond_ = older_unresolved_cond;
      execute(i, older_unresolved);
      any = true;
    }
    const Entry& f = rob_[i];
    if (f.inst && f.inst->op == Opcode::FENCE) break;
    if (f.checkpointed && !f.completed) {
      older_unresolved = true;
      if (f.cls == ControlClass::conditional) older_unresolved_cond = true;
    }
    if (f.inst && f.inst->op == Opcode::STORE && !f.issued) older_store_pending = true;
  }
  return any;
}

bool Core::fetch() {
  bool any = false;
  for (std::size_t n = 0; n < cfg_.fetch_width; ++n) {
    if (done_ || fetch_stalled_ || rob_.size() >= cfg_.rob_size) break;
    const ContextDescriptor& d = *ctx().desc;
    Entry e;
    e.seq = next_seq_++;
    e.pc = fetch_pc_;
    if (d.space.translate(e.pc, kExec)) e.inst = d.program.find(e.pc);
    any = true;
    if (!e.inst) {
      e.fault = "fetch from non-executable address";
      e.issued = e.completed = true;
      e.done_at = now_;
      e.oracle_after = oracle_pos_;
      fetch_stalled_ = true;
      log(EventKind::fetch, e, "fetch fault");
      rob_.push_back(std::move(e));
      break;
    }
    const Instruction& in = *e.inst;
    for (std::uint8_t r : detail::source_registers(in)) {
      if (r != 0) e.srcs.emplace_back(r, rename_[r]);
    }
    e.dest = detail::dest_register(in);
    e.cls = control_class(in.op);
    Addr next = e.pc + kInstructionWidth;
    if (e.cls != ControlClass::none) {
      e.hist_before = bp_.history();
      e.checkpointed = e.cls == ControlClass::conditional || e.cls == ControlClass::indirect || e.cls == ControlClass::ret;
      Addr direct = 0;
      if (in.op == Opcode::JMP || in.op == Opcode::CALL) direct = static_cast<Addr>(in.imm(0).value);
      Prediction p = bp_.predict(e.pc, e.cls, direct);
      next = p.target;
      if (cfg_.perfect_prediction) {
        const auto& seq = oracle_[cur_];
        next = oracle_pos_ < seq.size() ? seq[oracle_pos_] : e.pc + kInstructionWidth;
        ++oracle_pos_;
      }
      bp_.speculate(e.pc, e.cls, next != e.pc + kInstructionWidth);
    }
    e.predicted_next = next;
    e.oracle_after = oracle_pos_;
    if (e.dest > 0) rename_[e.dest] = e.seq;
    if (in.op == Opcode::YIELD || in.op == Opcode::HALT) fetch_stalled_ = true;
    if (cfg_.record_events) log(EventKind::fetch, e, format_instruction(in));
    fetch_pc_ = next;
    rob_.push_back(std::move(e));
  }
  return any;
}

Trace Core::run() {
  cfg_.validate();
  for (const auto& d : cfg_.contexts) {
    CtxState c;
    c.desc = &d;
    c.arch.regs = d.seeds;
    c.arch.regs[0] = 0;
    c.arch.pc = d.start_pc();
    ctxs_.push_back(c);
  }
  if (cfg_.perfect_prediction) {
    InOrderResult ref = interpret_in_order(cfg_, mem_.memory);
    oracle_ = std::move(ref.control_targets);
  }
  fetch_pc_ = ctxs_[0].arch.pc;

  while (!done_) {
    if (now_ > cfg_.max_cycles) {
      throw SimTimeout("simulation exceeded " + std::to_string(cfg_.max_cycles) + " cycles");
    }
    bool active = retire();
    if (done_) break;
    active |= complete();
    active |= issue();
    active |= fetch();

    for (std::size_t i = 0; i < rob_.size(); ++i) {
      if (rob_[i].checkpointed && !rob_[i].completed) {
        trace_.max_speculative_inflight = std::max(trace_.max_speculative_inflight, rob_.size() - i - 1);
        break;
      }
    }

    Cycles next = now_ + 1;
    if (!active) {
      Cycles soonest = std::numeric_limits<Cycles>::max();
      for (const auto& e : rob_) {
        if (e.issued && !e.completed) soonest = std::min(soonest, e.done_at);
      }
      if (soonest != std::numeric_limits<Cycles>::max() && soonest > next) next = soonest;
    }
    now_ = next;
  }

  trace_.cycles = now_;
  for (auto& c : ctxs_) {
    if (!c.arch.halted && c.arch.cycle == 0) c.arch.cycle = now_;
    trace_.contexts.push_back(c.arch);
  }
  return std::move(trace_);
}

}  // namespace

Trace run(const SimConfig& config, MemorySystem& memory, PredictorState& predictors, const MitigationOptions& options) {
  Core core(config, memory, predictors, options);
  return core.run();
}

SimulationFault::SimulationFault(FaultRecord f)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << "context " << f.ctx << " faulted at 0x" << std::hex << f.pc << ": " << f.reason;
        return os.str();
      }()),
      fault(std::move(f)) {}

}  // namespace specsim
