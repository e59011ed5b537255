#include "specsim/mitigations.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "specsim/attacks.hpp"

namespace specsim {

namespace {

struct Run {
  std::size_t first = 0;  // index into text
  std::size_t last = 0;
  Addr start = 0;
  Addr end = 0;  // one past the last instruction
};

}  // namespace

Program insert_fences(const Program& program) {
  const auto& text = program.text;
  std::set<Addr> fence_points;  // a FENCE goes in front of whatever sits here
  for (const auto& t : text) {
    if (control_class(t.inst.op) != ControlClass::conditional) continue;
    fence_points.insert(t.address + kInstructionWidth);
    fence_points.insert(static_cast<Addr>(t.inst.imm(2).value));
  }
  if (fence_points.empty()) return program;

  std::vector<Run> runs;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (runs.empty() || text[i].address != runs.back().end) {
      runs.push_back(Run{i, i, text[i].address, text[i].address + kInstructionWidth});
    } else {
      runs.back().last = i;
      runs.back().end += kInstructionWidth;
    }
  }

  auto run_of = [&](Addr a) -> const Run* {
    for (const auto& r : runs) {
      if (a >= r.start && a < r.end) return &r;
    }
    return nullptr;
  };
  auto fences_before = [&](const Run& r, Addr a) {
    return static_cast<Addr>(std::distance(fence_points.lower_bound(r.start), fence_points.lower_bound(a)));
  };
  // Address a jump to `a` lands on after the transform: the FENCE in front
  // of the instruction if there is one, else the instruction.
  auto remap = [&](Addr a) {
    const Run* r = run_of(a);
    return r ? a + kInstructionWidth * fences_before(*r, a) : a;
  };

  Program out;
  out.data = program.data;
  for (const auto& r : runs) {
    Addr pc = r.start;
    for (std::size_t i = r.first; i <= r.last; ++i) {
      const TextEntry& t = text[i];
      if (fence_points.count(t.address)) {
        out.text.push_back(TextEntry{pc, Instruction{Opcode::FENCE, {}}});
        pc += kInstructionWidth;
      }
      Instruction inst = t.inst;
      const ControlClass cls = control_class(inst.op);
      if (cls == ControlClass::conditional) {
        inst.operands[2] = Imm{static_cast<std::int64_t>(remap(static_cast<Addr>(inst.imm(2).value)))};
      } else if (inst.op == Opcode::JMP || inst.op == Opcode::CALL) {
        inst.operands[0] = Imm{static_cast<std::int64_t>(remap(static_cast<Addr>(inst.imm(0).value)))};
      }
      out.text.push_back(TextEntry{pc, std::move(inst)});
      pc += kInstructionWidth;
    }
    if (fence_points.count(r.end)) {
      out.text.push_back(TextEntry{pc, Instruction{Opcode::FENCE, {}}});
      pc += kInstructionWidth;
    }
    // The grown run must not reach any other code or data.
    auto collides = [&](Addr lo, Addr hi) { return lo < pc && hi > r.start; };
    for (const auto& other : runs) {
      if (&other != &r && collides(other.start, other.end)) throw std::runtime_error("address-space overflow");
    }
    for (const auto& seg : program.data) {
      if (collides(seg.address, seg.address + seg.bytes.size())) throw std::runtime_error("address-space overflow");
    }
  }
  std::sort(out.text.begin(), out.text.end(), [](const TextEntry& a, const TextEntry& b) { return a.address < b.address; });
  for (const auto& [name, addr] : program.labels) out.labels[name] = remap(addr);
  out.entry = remap(program.entry);
  return out;
}

std::vector<OverheadRow> overhead_report(const ScenarioConfig& scenario, const std::vector<MitigationOptions>& grid) {
  ScenarioConfig base = scenario;
  base.mitigations = MitigationOptions{};
  const AttackReport baseline = run_scenario(base);
  std::vector<OverheadRow> rows;
  for (const auto& opt : grid) {
    ScenarioConfig cfg = scenario;
    cfg.mitigations = opt;
    const AttackReport rep = opt == MitigationOptions{} ? baseline : run_scenario(cfg);
    OverheadRow row;
    row.options = opt;
    row.accuracy = rep.accuracy;
    row.cycles = rep.simulated_cycles;
    row.slowdown = baseline.simulated_cycles ? static_cast<double>(rep.simulated_cycles) / baseline.simulated_cycles : 1.0;
    rows.push_back(row);
  }
  return rows;
}

std::string overhead_csv(const std::vector<OverheadRow>& rows) {
  std::ostringstream os;
  os << "fence,flush,nofill,accuracy,cycles,slowdown\n";
  os << std::fixed;
  for (const auto& r : rows) {
    os << r.options.fence_after_branches << "," << r.options.flush_on_switch << "," << r.options.no_spec_fill << ","
       << std::setprecision(4) << r.accuracy << "," << r.cycles << "," << std::setprecision(4) << r.slowdown << "\n";
  }
  return os.str();
}

}  // namespace specsim
