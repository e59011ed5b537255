// Cache timing channels: Flush+Reload, Evict+Reload and Evict+Time.
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "specsim/memsys.hpp"

namespace specsim {

struct ProbeConfig {
  Addr probe_base = 0x800000;  // virtual, in the prober's address space
  std::size_t stride = 512;
  std::size_t entries = 256;
  std::optional<Cycles> threshold;

  void validate(const CacheConfig& cache) const;
  friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

struct ProbeResult {
  std::vector<Cycles> latencies;
  std::vector<std::size_t> hot;  // ascending
  std::optional<std::size_t> best;
  Cycles threshold = 0;
};

/// Midpoint of the L1 hit latency and the DRAM latency.
Cycles calibrate_threshold(const CacheConfig& cache, const ProbeConfig& probe);

/// Removes every probe line from all cache levels.
void flush_probe_array(MemorySystem& mem, const AddressSpace& space, const ProbeConfig& probe);

/// Times one read of each entry, in index order, and classifies it.
ProbeResult reload_and_classify(MemorySystem& mem, const AddressSpace& space, const ProbeConfig& probe);

/// Evicts every probe line by walking congruent arena addresses instead of
/// flushing.
void evict_probe_array(MemorySystem& mem, const AddressSpace& space, const ProbeConfig& probe,
                       const EvictionArena& arena);

/// Evicts one virtual line the same way.
void evict_line(MemorySystem& mem, const AddressSpace& space, Addr vaddr, const EvictionArena& arena);

/// Reload-and-classify, then evict the probe array again so the next round
/// starts clean without any flush.
ProbeResult evict_reload(MemorySystem& mem, const AddressSpace& space, const ProbeConfig& probe,
                         const EvictionArena& arena);

/// CSV `index,latency,hot`.
std::string probe_csv(const ProbeResult& result);

struct EvictTimeResult {
  Cycles t_evicted = 0;
  Cycles t_primed = 0;
  bool conclusive = false;  // false when both legs took equally long
  std::int64_t delta() const { return static_cast<std::int64_t>(t_evicted) - static_cast<std::int64_t>(t_primed); }
};

/// Runs the victim on the supplied memory state and returns its cycle count.
using VictimRunner = std::function<Cycles(MemorySystem&)>;

/// Times the victim twice from copies of `start`: once with the target line
/// flushed from every level, once with it primed into L1.
EvictTimeResult evict_time(const VictimRunner& victim, Addr target_vaddr, const AddressSpace& space,
                           const MemorySystem& start);

}  // namespace specsim
