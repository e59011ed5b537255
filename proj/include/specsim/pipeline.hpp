// Speculative out-of-order core and the in-order reference interpreter.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "specsim/branchpred.hpp"
#include "specsim/isa.hpp"
#include "specsim/memsys.hpp"
#include "specsim/mitigations.hpp"

namespace specsim {

struct FaultRecord {
  std::size_t ctx = 0;  // descriptor id
  Addr pc = 0;
  std::string reason;
  friend bool operator==(const FaultRecord&, const FaultRecord&) = default;
};

struct ArchState {
  std::array<Word, kNumRegisters> regs{};
  Addr pc = 0;
  std::uint64_t cycle = 0;
  bool halted = false;
  std::optional<FaultRecord> faulted;
};

/// Register-and-halt equality; cycle counts and fault reasons are ignored.
bool same_architecture(const ArchState& a, const ArchState& b);

struct ContextDescriptor {
  std::size_t id = 0;
  Program program;
  AddressSpace space;
  std::optional<Addr> entry;  // defaults to program.entry
  std::array<Word, kNumRegisters> seeds{};
  /// When set, a retired fault redirects here with r30 = faulting pc
  /// instead of ending the run.
  std::optional<Addr> fault_handler;

  Addr start_pc() const { return entry.value_or(program.entry); }
};

/// Register the fault handler receives the faulting pc in.
inline constexpr int kFaultPcRegister = 30;

struct Latencies {
  Cycles alu = 1;
  Cycles mul = 4;
  friend bool operator==(const Latencies&, const Latencies&) = default;
};

struct SimConfig {
  std::size_t rob_size = 192;
  Latencies latencies;
  std::size_t fetch_width = 1;
  std::size_t retire_width = 4;
  std::vector<ContextDescriptor> contexts;
  std::uint64_t max_cycles = 50'000'000;
  bool record_events = false;
  /// Fetch follows the architectural path, so nothing is ever mispredicted.
  bool perfect_prediction = false;

  void validate() const;
};

enum class EventKind : std::uint8_t { fetch, issue, complete, squash, retire, switch_ctx };
const char* to_string(EventKind kind);

struct Event {
  std::uint64_t cycle = 0;
  std::size_t ctx = 0;  // descriptor id
  std::uint64_t seq = 0;
  EventKind kind = EventKind::fetch;
  Addr pc = 0;
  std::string detail;
  /// Issue of an instruction that reads or writes the cache hierarchy.
  bool memory_access = false;
  /// Issued while an older conditional branch was unresolved.
  bool under_conditional = false;
  /// Issued while any older predicted control transfer was unresolved.
  bool speculative = false;
};

/// JSON lines `{cycle, ctx, seq, event, pc, detail}`.
std::string events_jsonl(const std::vector<Event>& events);

struct Trace {
  std::vector<ArchState> contexts;
  std::uint64_t cycles = 0;
  std::uint64_t retired = 0;
  std::uint64_t squashed = 0;
  std::uint64_t mispredictions = 0;
  std::uint64_t handled_faults = 0;
  std::optional<FaultRecord> fault;
  std::vector<Event> events;
  std::size_t max_speculative_inflight = 0;
};

class SimTimeout : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by drivers that expect a run to end without an unhandled fault.
class SimulationFault : public std::runtime_error {
 public:
  explicit SimulationFault(FaultRecord f);
  FaultRecord fault;
};

/// Copies every context's data segments into physical memory.
void load_program_data(const SimConfig& config, MemoryImage& memory);

/// Runs every context to HALT (or an unhandled retired fault). Contexts run
/// one at a time, switching at retired YIELD and HALT instructions.
/// Throws SimTimeout past config.max_cycles.
Trace run(const SimConfig& config, MemorySystem& memory, PredictorState& predictors,
          const MitigationOptions& options = {});

struct InOrderResult {
  std::vector<ArchState> contexts;
  MemoryImage memory;
  std::optional<FaultRecord> fault;
  std::uint64_t steps = 0;
  /// Per context, the next pc after each executed control transfer.
  std::vector<std::vector<Addr>> control_targets;
};

/// Executes the same contexts strictly in order with no caches or
/// prediction. RDCYCLE reads as 0.
InOrderResult interpret_in_order(const SimConfig& config, const MemoryImage& memory);

/// Largest number of instructions simultaneously in flight behind an
/// unresolved predicted control transfer.
std::size_t squash_depth_report(const Trace& trace);

}  // namespace specsim
