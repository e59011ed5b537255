// Instruction semantics shared by the out-of-order core and the in-order
// interpreter, so the two can only differ in ordering and timing.
#pragma once

#include "specsim/isa.hpp"

namespace specsim::detail {

inline Word alu(Opcode op, Word a, Word b) {
  switch (op) {
    case Opcode::ADD: return a + b;
    case Opcode::SUB: return a - b;
    case Opcode::MUL: return a * b;
    case Opcode::AND: return a & b;
    case Opcode::OR: return a | b;
    case Opcode::XOR: return a ^ b;
    case Opcode::SHL: return a << (b & 63);
    case Opcode::SHR: return a >> (b & 63);
    default: return 0;
  }
}

inline bool is_alu(Opcode op) {
  switch (op) {
    case Opcode::ADD: case Opcode::SUB: case Opcode::MUL: case Opcode::AND:
    case Opcode::OR: case Opcode::XOR: case Opcode::SHL: case Opcode::SHR:
      return true;
    default:
      return false;
  }
}

/// BLT compares unsigned.
inline bool branch_taken(Opcode op, Word a, Word b) { return op == Opcode::BEQ ? a == b : a < b; }

inline Addr effective_address(const MemOperand& m, Word base, Word index) {
  Addr ea = static_cast<Addr>(m.disp);
  if (m.base) ea += base;
  if (m.index) ea += index * m.scale;
  return ea;
}

/// Bytes moved by the instruction's memory operand.
inline std::size_t access_size(Opcode op) { return op == Opcode::JMPM ? 8 : 1; }

/// Whether the instruction reads data memory when it executes.
inline bool reads_memory(const Instruction& inst) {
  switch (inst.op) {
    case Opcode::LOAD: case Opcode::JMPM: return true;
    case Opcode::BEQ: case Opcode::BLT: return std::holds_alternative<MemOperand>(inst.operands[1]);
    default: return false;
  }
}

/// Index of the memory operand, or -1.
inline int mem_operand_index(const Instruction& inst) {
  for (std::size_t i = 0; i < inst.operands.size(); ++i) {
    if (std::holds_alternative<MemOperand>(inst.operands[i])) return static_cast<int>(i);
  }
  return -1;
}

/// Destination register, or -1 (writes to r0 are dropped).
inline int dest_register(const Instruction& inst) {
  int d = -1;
  if (is_alu(inst.op) || inst.op == Opcode::MOVI || inst.op == Opcode::LOAD || inst.op == Opcode::RDCYCLE) {
    d = inst.reg(0).id;
  } else if (inst.op == Opcode::CALL) {
    d = kLinkRegister;
  }
  return d == 0 ? -1 : d;
}

/// Registers read by the instruction (may repeat; r0 included).
inline std::vector<std::uint8_t> source_registers(const Instruction& inst) {
  std::vector<std::uint8_t> out;
  auto add_operand = [&](const Operand& o) {
    if (auto r = std::get_if<Reg>(&o)) out.push_back(r->id);
    if (auto m = std::get_if<MemOperand>(&o)) {
      if (m->base) out.push_back(*m->base);
      if (m->index) out.push_back(*m->index);
    }
  };
  switch (inst.op) {
    case Opcode::MOVI: case Opcode::RDCYCLE: case Opcode::JMP: case Opcode::CALL:
    case Opcode::FENCE: case Opcode::YIELD: case Opcode::HALT:
      break;
    case Opcode::LOAD:
      add_operand(inst.operands[1]);
      break;
    case Opcode::RET:
      out.push_back(kLinkRegister);
      break;
    default:
      if (is_alu(inst.op)) {
        add_operand(inst.operands[1]);
        add_operand(inst.operands[2]);
      } else {
        for (const auto& o : inst.operands) add_operand(o);
      }
  }
  return out;
}

}  // namespace specsim::detail
