// Helpers shared by the test executables.
#pragma once

#include <random>
#include <sstream>
#include <string>

#include "specsim/isa.hpp"
#include "specsim/memsys.hpp"
#include "specsim/pipeline.hpp"

namespace specsim::testing {

inline constexpr Addr kTextBase = 0x400000;
inline constexpr Addr kSandbox = 0x10000;

/// Assembles `source` with its code starting at the text base.
inline Program text_program(const std::string& source) { return assemble(".org 0x400000\n" + source); }

/// One context: text pages at 0x400000 (exec), sandbox page at 0x10000 (rw),
/// both identity-mapped.
inline SimConfig single_context(const Program& prog, std::size_t rob_size = 192) {
  SimConfig cfg;
  cfg.rob_size = rob_size;
  ContextDescriptor ctx;
  ctx.program = prog;
  ctx.space.map_range(kTextBase, kTextBase, 16 * kPageSize, kRead | kExec);
  ctx.space.map_range(kSandbox, kSandbox, kPageSize, kRead | kWrite);
  cfg.contexts.push_back(std::move(ctx));
  return cfg;
}

/// Random terminating program over r1..r12 and the sandbox page. Control flow
/// is forward-only except for counted loops on r20, so every program halts.
/// Includes an always-taken branch skipping an unmapped load (which only
/// ever runs on a wrong path), a leaf subroutine, and optionally JMPR and
/// JMPM through addresses built with MOVI.
class ProgramGenerator {
 public:
  explicit ProgramGenerator(std::uint64_t seed, bool indirect_jumps = true)
      : rng_(seed), indirect_(indirect_jumps) {}

  std::string generate() {
    os_.str("");
    labels_ = 0;
    os_ << ".org 0x400000\n_start:\n";
    for (int r = 1; r <= 12; ++r) os_ << "  MOVI r" << r << ", " << pick(0, 300) << "\n";
    int blocks = pick(3, 7);
    for (int b = 0; b < blocks; ++b) block(true);
    os_ << "  HALT\n";
    os_ << "leaf:\n";
    for (int i = pick(1, 4); i > 0; --i) alu();
    os_ << "  RET\n";
    os_ << ".org 0x10000\n";
    for (int i = 0; i < 64; ++i) os_ << "  .byte " << pick(0, 255) << "\n";
    return os_.str();
  }

 private:
  int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::string r() { return "r" + std::to_string(pick(0, 12)); }
  std::string rd() { return "r" + std::to_string(pick(1, 12)); }
  std::string fresh() { return "L" + std::to_string(labels_++); }

  void alu() {
    static const char* ops[] = {"ADD", "SUB", "MUL", "AND", "OR", "XOR", "SHL", "SHR"};
    os_ << "  " << ops[pick(0, 7)] << " " << rd() << ", " << r() << ", ";
    if (pick(0, 1)) os_ << r(); else os_ << pick(0, 70);
    os_ << "\n";
  }

  // Sandbox address in r13: offset 0..255.
  void sandbox_addr() { os_ << "  AND r13, " << r() << ", 255\n"; }

  void simple() {
    switch (pick(0, 6)) {
      case 0: case 1: case 2: alu(); break;
      case 3: sandbox_addr(); os_ << "  LOAD " << rd() << ", [r13 + 0x10000]\n"; break;
      case 4: sandbox_addr(); os_ << "  STORE " << r() << ", [r0 + r13*1 + 0x10000]\n"; break;
      case 5: os_ << "  MOVI " << rd() << ", " << pick(-5, 1000) << "\n"; break;
      case 6: sandbox_addr(); os_ << "  LOAD " << rd() << ", [r13*2 + 0x10000]\n"; break;
    }
  }

  void block(bool allow_loop) {
    switch (pick(0, 7)) {
      case 0: case 1: {
        for (int i = pick(1, 6); i > 0; --i) simple();
        break;
      }
      case 2: {  // forward conditional
        std::string skip = fresh();
        const char* op = pick(0, 1) ? "BEQ" : "BLT";
        if (pick(0, 1)) {
          os_ << "  " << op << " " << r() << ", " << r() << ", " << skip << "\n";
        } else {
          sandbox_addr();
          os_ << "  " << op << " " << r() << ", [r13 + 0x10000], " << skip << "\n";
        }
        for (int i = pick(1, 5); i > 0; --i) simple();
        os_ << skip << ":\n";
        break;
      }
      case 3: {  // always taken, wrong path faults
        std::string skip = fresh();
        std::string reg = r();
        os_ << "  BEQ " << reg << ", " << reg << ", " << skip << "\n";
        os_ << "  LOAD r14, [r0 + 0xdead0000]\n  STORE r14, [r0 + 0x10000]\n";
        os_ << skip << ":\n";
        break;
      }
      case 4: {
        if (!allow_loop) { simple(); break; }
        std::string top = fresh();
        os_ << "  MOVI r20, " << pick(1, 6) << "\n" << top << ":\n";
        for (int i = pick(1, 3); i > 0; --i) block(false);
        os_ << "  SUB r20, r20, 1\n  BLT r0, r20, " << top << "\n";
        break;
      }
      case 5: os_ << "  CALL leaf\n"; break;
      case 6: {
        if (!indirect_) { simple(); break; }
        std::string tgt = fresh();
        os_ << "  MOVI r15, " << tgt << "\n  JMPR r15\n";
        simple();
        os_ << tgt << ":\n";
        break;
      }
      case 7: {
        if (!indirect_) { simple(); break; }
        std::string tgt = fresh();
        int slot = 0x100 + 8 * pick(0, 3);
        os_ << "  MOVI r15, " << tgt << "\n";
        for (int b = 0; b < 3; ++b) {
          os_ << "  STORE r15, [r0 + " << (kSandbox + slot + b) << "]\n  SHR r15, r15, 8\n";
        }
        for (int b = 3; b < 8; ++b) os_ << "  STORE r0, [r0 + " << (kSandbox + slot + b) << "]\n";
        os_ << "  JMPM [r0 + " << (kSandbox + slot) << "]\n";
        simple();
        os_ << tgt << ":\n";
        break;
      }
    }
  }

  std::mt19937_64 rng_;
  bool indirect_;
  std::ostringstream os_;
  int labels_ = 0;
};

}  // namespace specsim::testing
