// Toy ISA: instruction vocabulary, programs, and the text assembler.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace specsim {

using Addr = std::uint64_t;
using Word = std::uint64_t;

inline constexpr Addr kInstructionWidth = 4;
inline constexpr int kNumRegisters = 32;
/// CALL writes the return address here; RET jumps through it.
inline constexpr int kLinkRegister = 31;

enum class Opcode : std::uint8_t {
  ADD, SUB, MUL, AND, OR, XOR, SHL, SHR,
  MOVI, LOAD, STORE,
  BEQ, BLT, JMP, JMPR, JMPM, CALL, RET,
  CLFLUSH, RDCYCLE, FENCE, YIELD, HALT,
};

std::string_view mnemonic(Opcode op);
std::optional<Opcode> opcode_from_mnemonic(std::string_view text);

struct Reg {
  std::uint8_t id = 0;
  friend bool operator==(const Reg&, const Reg&) = default;
};

struct Imm {
  std::int64_t value = 0;
  friend bool operator==(const Imm&, const Imm&) = default;
};

/// `[base + index*scale + disp]`; any term may be absent.
struct MemOperand {
  std::optional<std::uint8_t> base;
  std::optional<std::uint8_t> index;
  std::uint8_t scale = 1;
  std::int64_t disp = 0;
  friend bool operator==(const MemOperand&, const MemOperand&) = default;
};

using Operand = std::variant<Reg, Imm, MemOperand>;

/// Operand kinds accepted at one signature position.
enum class Kind : std::uint8_t { Reg, Imm, Mem, RegOrImm, RegOrMem };

struct Instruction {
  Opcode op = Opcode::HALT;
  std::vector<Operand> operands;

  const Reg& reg(std::size_t i) const { return std::get<Reg>(operands.at(i)); }
  const Imm& imm(std::size_t i) const { return std::get<Imm>(operands.at(i)); }
  const MemOperand& mem(std::size_t i) const { return std::get<MemOperand>(operands.at(i)); }

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

/// Exact operand signature of an opcode.
const std::vector<Kind>& signature(Opcode op);

/// Throws std::invalid_argument when operand count or kinds do not match.
void validate(const Instruction& inst);

enum class ControlClass : std::uint8_t { none, conditional, indirect, call, ret, direct };
ControlClass control_class(Opcode op);

struct DataSegment {
  Addr address = 0;
  std::vector<std::uint8_t> bytes;
  friend bool operator==(const DataSegment&, const DataSegment&) = default;
};

struct TextEntry {
  Addr address = 0;
  Instruction inst;
  friend bool operator==(const TextEntry&, const TextEntry&) = default;
};

struct Program {
  std::vector<TextEntry> text;  // sorted by address
  std::vector<DataSegment> data;  // sorted, non-overlapping
  std::map<std::string, Addr> labels;
  Addr entry = 0;

  const Instruction* find(Addr pc) const;
  Addr label(const std::string& name) const;

  friend bool operator==(const Program&, const Program&) = default;
};

class AsmError : public std::runtime_error {
 public:
  AsmError(int line, int column, const std::string& message);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Assembles source text. The entry point is the label `_start` when
/// defined, otherwise the first instruction.
Program assemble(std::string_view source);

std::string disassemble(const Program& program);

/// Text form of one instruction, e.g. "LOAD r2, [r1 + r3*1 + 0x13be13bd]".
std::string format_instruction(const Instruction& inst);

}  // namespace specsim
