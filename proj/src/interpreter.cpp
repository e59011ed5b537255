#include <sstream>

#include "semantics.hpp"
#include "specsim/pipeline.hpp"

namespace specsim {

namespace {

struct Ctx {
  const ContextDescriptor* desc = nullptr;
  ArchState state;
};

// Next context after `cur` that has not halted, or -1.
int next_runnable(const std::vector<Ctx>& ctxs, std::size_t cur) {
  for (std::size_t k = 1; k <= ctxs.size(); ++k) {
    std::size_t i = (cur + k) % ctxs.size();
    if (!ctxs[i].state.halted) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

InOrderResult interpret_in_order(const SimConfig& config, const MemoryImage& memory) {
  config.validate();
  InOrderResult out;
  out.memory = memory;
  out.control_targets.resize(config.contexts.size());

  std::vector<Ctx> ctxs;
  for (const auto& d : config.contexts) {
    Ctx c;
    c.desc = &d;
    c.state.regs = d.seeds;
    c.state.regs[0] = 0;
    c.state.pc = d.start_pc();
    ctxs.push_back(c);
  }

  std::size_t cur = 0;
  while (true) {
    Ctx& c = ctxs[cur];
    ArchState& s = c.state;
    const ContextDescriptor& d = *c.desc;
    if (++out.steps > config.max_cycles) {
      throw SimTimeout("in-order run exceeded " + std::to_string(config.max_cycles) + " steps");
    }

    auto reg = [&](std::uint8_t r) -> Word { return r == 0 ? 0 : s.regs[r]; };
    auto set = [&](int r, Word v) {
      if (r > 0) s.regs[r] = v;
    };

    const Addr pc = s.pc;
    std::string fault;
    const Instruction* inst = nullptr;
    if (d.space.translate(pc, kExec)) inst = d.program.find(pc);
    if (!inst) fault = "fetch from non-executable address";

    Addr next = pc + kInstructionWidth;
    bool yield = false;
    bool halt = false;
    if (inst) {
      auto ea_of = [&](const MemOperand& m) {
        return detail::effective_address(m, m.base ? reg(*m.base) : 0, m.index ? reg(*m.index) : 0);
      };
      auto read = [&](Addr va, std::size_t size, Word* value) {
        if (size > 1 && va % size) {
          fault = "misaligned memory operand";
          return;
        }
        auto pa = d.space.translate(va, kRead);
        if (!pa) {
          fault = "load from unmapped or unreadable address";
          return;
        }
        *value = out.memory.read(*pa, size);
      };
      const Opcode op = inst->op;
      if (detail::is_alu(op)) {
        const Operand& o2 = inst->operands[2];
        Word b = std::holds_alternative<Reg>(o2) ? reg(std::get<Reg>(o2).id) : static_cast<Word>(std::get<Imm>(o2).value);
        set(inst->reg(0).id, detail::alu(op, reg(inst->reg(1).id), b));
      } else {
        switch (op) {
          case Opcode::MOVI: set(inst->reg(0).id, static_cast<Word>(inst->imm(1).value)); break;
          case Opcode::LOAD: {
            Word v = 0;
            read(ea_of(inst->mem(1)), 1, &v);
            if (fault.empty()) set(inst->reg(0).id, v);
            break;
          }
          case Opcode::STORE: {
            auto pa = d.space.translate(ea_of(inst->mem(1)), kWrite);
            if (!pa) {
              fault = "store to unmapped or read-only address";
            } else {
              out.memory.write_byte(*pa, static_cast<std::uint8_t>(reg(inst->reg(0).id)));
            }
            break;
          }
          case Opcode::BEQ:
          case Opcode::BLT: {
            Word b = 0;
            const Operand& o1 = inst->operands[1];
            if (auto r = std::get_if<Reg>(&o1)) {
              b = reg(r->id);
            } else {
              read(ea_of(std::get<MemOperand>(o1)), 1, &b);
            }
            if (fault.empty() && detail::branch_taken(op, reg(inst->reg(0).id), b)) {
              next = static_cast<Addr>(inst->imm(2).value);
            }
            break;
          }
          case Opcode::JMP: next = static_cast<Addr>(inst->imm(0).value); break;
          case Opcode::JMPR: next = reg(inst->reg(0).id); break;
          case Opcode::JMPM: {
            Word v = 0;
            read(ea_of(inst->mem(0)), 8, &v);
            next = v;
            break;
          }
          case Opcode::CALL:
            set(kLinkRegister, pc + kInstructionWidth);
            next = static_cast<Addr>(inst->imm(0).value);
            break;
          case Opcode::RET: next = reg(kLinkRegister); break;
          case Opcode::CLFLUSH:
            if (!d.space.translate(ea_of(inst->mem(0)), kRead)) fault = "flush of unmapped address";
            break;
          case Opcode::RDCYCLE: set(inst->reg(0).id, 0); break;
          case Opcode::FENCE: break;
          case Opcode::YIELD: yield = true; break;
          case Opcode::HALT: halt = true; break;
          default: break;
        }
      }
      if (control_class(op) != ControlClass::none) {
        out.control_targets[cur].push_back(fault.empty() ? next : d.fault_handler.value_or(0));
      }
    }

    if (!fault.empty()) {
      if (d.fault_handler) {
        s.regs[kFaultPcRegister] = pc;
        s.pc = *d.fault_handler;
        continue;
      }
      s.faulted = FaultRecord{config.contexts[cur].id, pc, fault};
      out.fault = s.faulted;
      break;
    }
    if (halt) {
      s.halted = true;
      int n = next_runnable(ctxs, cur);
      if (n < 0) break;
      cur = static_cast<std::size_t>(n);
      continue;
    }
    s.pc = next;
    if (yield) {
      int n = next_runnable(ctxs, cur);
      if (n >= 0) cur = static_cast<std::size_t>(n);
    }
  }

  for (auto& c : ctxs) out.contexts.push_back(c.state);
  return out;
}

}  // namespace specsim
