#include "specsim/channels.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace specsim {

namespace {

Addr probe_pa(const AddressSpace& space, const ProbeConfig& probe, std::size_t i) {
  const Addr va = probe.probe_base + i * probe.stride;
  auto pa = space.translate(va, kRead);
  if (!pa) {
    std::ostringstream os;
    os << "probe entry " << i << " at 0x" << std::hex << va << " is not readable";
    throw std::invalid_argument(os.str());
  }
  return *pa;
}

// Ways beyond the LLC associativity, so the walk also covers lines the
// dual-index order touches twice.
constexpr std::size_t kExtraEvictionLines = 4;

}  // namespace

void ProbeConfig::validate(const CacheConfig& cache) const {
  if (entries == 0) throw std::invalid_argument("probe entries must be positive");
  if (stride < cache.line_size) throw std::invalid_argument("probe stride must be at least one cache line");
}

Cycles calibrate_threshold(const CacheConfig& cache, const ProbeConfig& probe) {
  if (probe.threshold) return *probe.threshold;
  return (cache.l1.hit_latency + cache.dram_latency) / 2;
}

void flush_probe_array(MemorySystem& mem, const AddressSpace& space, const ProbeConfig& probe) {
  for (std::size_t i = 0; i < probe.entries; ++i) mem.flush_line(probe_pa(space, probe, i));
}

ProbeResult reload_and_classify(MemorySystem& mem, const AddressSpace& space, const ProbeConfig& probe) {
  ProbeResult r;
  r.threshold = calibrate_threshold(mem.caches.config(), probe);
  r.latencies.reserve(probe.entries);
  for (std::size_t i = 0; i < probe.entries; ++i) {
    const Cycles t = mem.access(probe_pa(space, probe, i), 1, AccessKind::read, true).latency;
    r.latencies.push_back(t);
    if (t < r.threshold) r.hot.push_back(i);
  }
  if (r.hot.size() == 1) r.best = r.hot.front();
  return r;
}

void evict_line(MemorySystem& mem, const AddressSpace& space, Addr vaddr, const EvictionArena& arena) {
  auto pa = space.translate(vaddr, 0);
  if (!pa) throw std::invalid_argument("eviction target is unmapped");
  const CacheConfig& cfg = mem.caches.config();
  const std::size_t ways = std::max({cfg.l1.ways, cfg.l2.ways, cfg.llc.ways});
  auto addrs = congruent_addresses(cfg, *pa, ways + kExtraEvictionLines, space, arena);
  for (Addr va : eviction_walk(addrs)) {
    mem.access(*space.translate(va, kRead), 1, AccessKind::read, true);
  }
}

void evict_probe_array(MemorySystem& mem, const AddressSpace& space, const ProbeConfig& probe,
                       const EvictionArena& arena) {
  for (std::size_t i = 0; i < probe.entries; ++i) evict_line(mem, space, probe.probe_base + i * probe.stride, arena);
}

ProbeResult evict_reload(MemorySystem& mem, const AddressSpace& space, const ProbeConfig& probe,
                         const EvictionArena& arena) {
  ProbeResult r = reload_and_classify(mem, space, probe);
  evict_probe_array(mem, space, probe, arena);
  return r;
}

std::string probe_csv(const ProbeResult& result) {
  std::ostringstream os;
  os << "index,latency,hot\n";
  for (std::size_t i = 0; i < result.latencies.size(); ++i) {
    os << i << "," << result.latencies[i] << "," << (result.latencies[i] < result.threshold ? 1 : 0) << "\n";
  }
  return os.str();
}

EvictTimeResult evict_time(const VictimRunner& victim, Addr target_vaddr, const AddressSpace& space,
                           const MemorySystem& start) {
  auto pa = space.translate(target_vaddr, 0);
  if (!pa) throw std::invalid_argument("evict_time target is unmapped");
  EvictTimeResult r;
  {
    MemorySystem leg = start;
    leg.flush_line(*pa);
    r.t_evicted = victim(leg);
  }
  {
    MemorySystem leg = start;
    leg.caches.touch(*pa, true);
    r.t_primed = victim(leg);
  }
  r.conclusive = r.t_evicted != r.t_primed;
  return r;
}

}  // namespace specsim
