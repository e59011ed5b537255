// Small helpers shared by the scenario builders.
#pragma once

#include <bit>
#include <sstream>
#include <string>
#include <vector>

#include "specsim/attacks.hpp"

namespace specsim::detail {

inline std::string hex(Addr a) {
  std::ostringstream os;
  os << "0x" << std::hex << a;
  return os.str();
}

/// `dst = src * stride`, as a shift when the stride allows it.
inline std::string scale_by_stride(const std::string& dst, const std::string& src, std::size_t stride) {
  std::ostringstream os;
  if (std::has_single_bit(stride)) {
    os << "  SHL " << dst << ", " << src << ", " << std::countr_zero(stride) << "\n";
  } else {
    os << "  MUL " << dst << ", " << src << ", " << stride << "\n";
  }
  return os.str();
}

inline std::string byte_directives(Addr at, const std::vector<std::uint8_t>& bytes) {
  std::ostringstream os;
  os << ".org " << hex(at) << "\n";
  for (std::size_t i = 0; i < bytes.size(); i += 16) {
    os << "  .byte ";
    for (std::size_t k = i; k < std::min(bytes.size(), i + 16); ++k) os << (k > i ? ", " : "") << int{bytes[k]};
    os << "\n";
  }
  return os.str();
}

inline void accumulate(AttackReport& report, const Trace& trace, bool keep_events) {
  if (trace.fault) throw SimulationFault(*trace.fault);
  report.simulated_cycles += trace.cycles;
  report.mispredictions += trace.mispredictions;
  report.max_speculative_inflight = std::max(report.max_speculative_inflight, trace.max_speculative_inflight);
  if (keep_events) report.events.insert(report.events.end(), trace.events.begin(), trace.events.end());
}

inline void finish(AttackReport& report, const std::vector<std::uint8_t>& secret, const PredictorState& bp) {
  std::size_t correct = 0;
  for (const auto& b : report.per_byte) {
    correct += b.correct;
    report.recovered.push_back(b.value);
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(secret.size());
  report.bandwidth = report.simulated_cycles ? correct * 1e6 / static_cast<double>(report.simulated_cycles) : 0.0;
  report.btb_csv = bp.btb_csv();
}

}  // namespace specsim::detail
