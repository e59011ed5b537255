// Branch prediction state shared by every context on the core: a
// direct-mapped BTB, a gshare direction predictor and a return stack.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "specsim/isa.hpp"

namespace specsim {

struct PredictorConfig {
  std::size_t btb_entries = 4096;
  unsigned btb_index_bits = 12;
  unsigned btb_tag_bits = 8;
  unsigned history_bits = 8;
  std::size_t pht_entries = 4096;
  std::size_t rsb_depth = 16;
  /// Low virtual-address bits the predictor can see at all.
  unsigned observe_bits = 20;

  void validate() const;
  friend bool operator==(const PredictorConfig&, const PredictorConfig&) = default;
};

enum class PredictionSource : std::uint8_t { BTB, PHT_fallthrough, RSB, static_not_taken, decoded };
const char* to_string(PredictionSource s);

struct Prediction {
  bool taken = false;
  Addr target = 0;  // fall-through when not taken
  PredictionSource source = PredictionSource::static_not_taken;
};

struct BtbEntry {
  bool valid = false;
  std::uint32_t tag = 0;
  Addr target = 0;
  friend bool operator==(const BtbEntry&, const BtbEntry&) = default;
};

/// Speculatively updated part of the predictor, saved with each checkpoint.
struct SpeculativeHistory {
  std::uint32_t ghr = 0;
  std::vector<Addr> rsb;  // back() is the top
  friend bool operator==(const SpeculativeHistory&, const SpeculativeHistory&) = default;
};

/// Holds no context identifier: training in one context steers every other.
class PredictorState {
 public:
  explicit PredictorState(PredictorConfig config = {});

  const PredictorConfig& config() const { return config_; }

  std::size_t btb_index(Addr pc) const;
  std::uint32_t btb_tag(Addr pc) const;
  std::size_t pht_index(Addr pc, std::uint32_t history) const;

  /// `direct_target` is the decoded target of JMP/CALL.
  Prediction predict(Addr pc, ControlClass cls, Addr direct_target = 0) const;

  /// Trains the PHT (with the history seen at prediction time) and the BTB.
  void train(Addr pc, ControlClass cls, bool taken, Addr actual_target, std::uint32_t history);

  /// Resolution-time update: `train` with the current history, plus the
  /// return-stack push (call) or pop (return).
  void update(Addr pc, ControlClass cls, bool taken, Addr actual_target);

  /// Fetch-time speculation: shifts the predicted direction into the
  /// history (conditional) and pushes/pops the return stack.
  void speculate(Addr pc, ControlClass cls, bool predicted_taken);

  const SpeculativeHistory& history() const { return spec_; }
  void restore(const SpeculativeHistory& h) { spec_ = h; }
  void push_history(bool taken);
  void push_return(Addr ret);
  void pop_return();

  void flush();

  std::uint8_t counter(std::size_t pht_idx) const { return pht_[pht_idx]; }
  const BtbEntry& btb_entry(std::size_t idx) const { return btb_[idx]; }

  /// CSV `index,tag,target` of valid entries.
  std::string btb_csv() const;

  friend bool operator==(const PredictorState&, const PredictorState&) = default;

 private:
  Addr observed(Addr pc) const;

  PredictorConfig config_;
  std::vector<BtbEntry> btb_;
  std::vector<std::uint8_t> pht_;
  SpeculativeHistory spec_;
};

}  // namespace specsim
