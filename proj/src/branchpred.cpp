#include "specsim/branchpred.hpp"

#include <sstream>
#include <stdexcept>

namespace specsim {

namespace {
constexpr std::uint8_t kWeaklyNotTaken = 1;
}

void PredictorConfig::validate() const {
  if (btb_entries != (std::size_t{1} << btb_index_bits)) throw std::invalid_argument("btb_entries must be 2^btb_index_bits");
  if (btb_index_bits + btb_tag_bits > observe_bits) {
    throw std::invalid_argument("btb_index_bits + btb_tag_bits must not exceed observe_bits");
  }
  if (observe_bits < 3 || observe_bits > 64) throw std::invalid_argument("observe_bits must be in 3..64");
  if (pht_entries == 0 || (pht_entries & (pht_entries - 1))) throw std::invalid_argument("pht_entries must be a power of two");
  if (history_bits > 31) throw std::invalid_argument("history_bits must be at most 31");
  if (rsb_depth == 0) throw std::invalid_argument("rsb_depth must be positive");
}

const char* to_string(PredictionSource s) {
  switch (s) {
    case PredictionSource::BTB: return "BTB";
    case PredictionSource::PHT_fallthrough: return "PHT_fallthrough";
    case PredictionSource::RSB: return "RSB";
    case PredictionSource::static_not_taken: return "static_not_taken";
    case PredictionSource::decoded: return "decoded";
  }
  return "?";
}

PredictorState::PredictorState(PredictorConfig config) : config_(config) {
  config_.validate();
  btb_.assign(config_.btb_entries, BtbEntry{});
  pht_.assign(config_.pht_entries, kWeaklyNotTaken);
}

Addr PredictorState::observed(Addr pc) const {
  return config_.observe_bits >= 64 ? pc : pc & ((Addr{1} << config_.observe_bits) - 1);
}

std::size_t PredictorState::btb_index(Addr pc) const {
  return static_cast<std::size_t>((observed(pc) >> 2) & (config_.btb_entries - 1));
}

std::uint32_t PredictorState::btb_tag(Addr pc) const {
  Addr bits = observed(pc) >> (2 + config_.btb_index_bits);
  return static_cast<std::uint32_t>(bits & ((Addr{1} << config_.btb_tag_bits) - 1));
}

std::size_t PredictorState::pht_index(Addr pc, std::uint32_t history) const {
  return static_cast<std::size_t>(((observed(pc) >> 2) ^ history) & (config_.pht_entries - 1));
}

Prediction PredictorState::predict(Addr pc, ControlClass cls, Addr direct_target) const {
  const Addr fall = pc + kInstructionWidth;
  Prediction p{false, fall, PredictionSource::static_not_taken};
  const BtbEntry& e = btb_[btb_index(pc)];
  const bool btb_hit = e.valid && e.tag == btb_tag(pc);
  switch (cls) {
    case ControlClass::conditional:
      p.source = PredictionSource::PHT_fallthrough;
      if (pht_[pht_index(pc, spec_.ghr)] >= 2 && btb_hit) p = {true, e.target, PredictionSource::BTB};
      break;
    case ControlClass::indirect:
      if (btb_hit) p = {true, e.target, PredictionSource::BTB};
      break;
    case ControlClass::ret:
      if (!spec_.rsb.empty()) p = {true, spec_.rsb.back(), PredictionSource::RSB};
      break;
    case ControlClass::call:
    case ControlClass::direct:
      p = {true, direct_target, PredictionSource::decoded};
      break;
    case ControlClass::none:
      break;
  }
  return p;
}

void PredictorState::train(Addr pc, ControlClass cls, bool taken, Addr actual_target, std::uint32_t history) {
  if (cls == ControlClass::conditional) {
    std::uint8_t& c = pht_[pht_index(pc, history)];
    if (taken && c < 3) ++c;
    if (!taken && c > 0) --c;
  }
  const bool installs = taken && (cls == ControlClass::conditional || cls == ControlClass::indirect ||
                                  cls == ControlClass::call);
  if (installs) btb_[btb_index(pc)] = BtbEntry{true, btb_tag(pc), actual_target};
}

void PredictorState::update(Addr pc, ControlClass cls, bool taken, Addr actual_target) {
  train(pc, cls, taken, actual_target, spec_.ghr);
  if (cls == ControlClass::call) push_return(pc + kInstructionWidth);
  if (cls == ControlClass::ret) pop_return();
}

void PredictorState::speculate(Addr pc, ControlClass cls, bool predicted_taken) {
  if (cls == ControlClass::conditional) push_history(predicted_taken);
  if (cls == ControlClass::call) push_return(pc + kInstructionWidth);
  if (cls == ControlClass::ret) pop_return();
}

void PredictorState::push_history(bool taken) {
  const std::uint32_t mask = config_.history_bits == 0 ? 0 : (std::uint32_t{1} << config_.history_bits) - 1;
  spec_.ghr = ((spec_.ghr << 1) | (taken ? 1u : 0u)) & mask;
}

void PredictorState::push_return(Addr ret) {
  if (spec_.rsb.size() == config_.rsb_depth) spec_.rsb.erase(spec_.rsb.begin());
  spec_.rsb.push_back(ret);
}

void PredictorState::pop_return() {
  if (!spec_.rsb.empty()) spec_.rsb.pop_back();
}

void PredictorState::flush() {
  btb_.assign(config_.btb_entries, BtbEntry{});
  pht_.assign(config_.pht_entries, kWeaklyNotTaken);
  spec_ = SpeculativeHistory{};
}

std::string PredictorState::btb_csv() const {
  std::ostringstream os;
  os << "index,tag,target\n";
  for (std::size_t i = 0; i < btb_.size(); ++i) {
    if (!btb_[i].valid) continue;
    os << i << "," << btb_[i].tag << ",0x" << std::hex << btb_[i].target << std::dec << "\n";
  }
  return os.str();
}

}  // namespace specsim
