#include "specsim/memsys.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace specsim {

namespace {
bool pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }
}  // namespace

const char* to_string(HitLevel level) {
  switch (level) {
    case HitLevel::L1: return "L1";
    case HitLevel::L2: return "L2";
    case HitLevel::LLC: return "LLC";
    case HitLevel::DRAM: return "DRAM";
  }
  return "?";
}

void CacheConfig::validate() const {
  if (!pow2(line_size)) throw std::invalid_argument("line_size must be a power of two");
  const LevelConfig* lv[] = {&l1, &l2, &llc};
  for (const auto* l : lv) {
    if (!pow2(l->sets)) throw std::invalid_argument("set counts must be powers of two");
    if (l->ways == 0 || l->ways > 255) throw std::invalid_argument("ways must be in 1..255");
  }
  if (!(l1.hit_latency < l2.hit_latency && l2.hit_latency < llc.hit_latency && llc.hit_latency < dram_latency)) {
    throw std::invalid_argument("latencies must strictly increase L1 < L2 < LLC < DRAM");
  }
}

// ---------------------------------------------------------------------------

CacheHierarchy::CacheHierarchy(CacheConfig config) : config_(config) {
  config_.validate();
  const LevelConfig cfgs[] = {config_.l1, config_.l2, config_.llc};
  for (std::size_t i = 0; i < kCacheLevels; ++i) {
    levels_[i].cfg = cfgs[i];
    levels_[i].lines.assign(cfgs[i].sets * cfgs[i].ways, 0);
    levels_[i].count.assign(cfgs[i].sets, 0);
  }
}

std::size_t CacheHierarchy::set_index(HitLevel l, Addr paddr) const {
  return static_cast<std::size_t>(line_of(paddr) & (level(l).cfg.sets - 1));
}

bool CacheHierarchy::find(const Level& lvl, Addr line, std::size_t* pos) const {
  std::size_t set = static_cast<std::size_t>(line & (lvl.cfg.sets - 1));
  std::size_t base = set * lvl.cfg.ways;
  for (std::size_t i = 0; i < lvl.count[set]; ++i) {
    if (lvl.lines[base + i] == line) {
      if (pos) *pos = base + i;
      return true;
    }
  }
  return false;
}

void CacheHierarchy::promote(Level& lvl, Addr line, std::size_t pos) {
  std::size_t set = static_cast<std::size_t>(line & (lvl.cfg.sets - 1));
  std::size_t base = set * lvl.cfg.ways;
  std::rotate(lvl.lines.begin() + static_cast<std::ptrdiff_t>(base), lvl.lines.begin() + static_cast<std::ptrdiff_t>(pos),
              lvl.lines.begin() + static_cast<std::ptrdiff_t>(pos + 1));
}

std::optional<Addr> CacheHierarchy::insert(Level& lvl, Addr line) {
  std::size_t set = static_cast<std::size_t>(line & (lvl.cfg.sets - 1));
  std::size_t base = set * lvl.cfg.ways;
  std::optional<Addr> victim;
  std::size_t n = lvl.count[set];
  if (n == lvl.cfg.ways) {
    victim = lvl.lines[base + n - 1];
    --n;
  } else {
    ++lvl.count[set];
  }
  auto first = lvl.lines.begin() + static_cast<std::ptrdiff_t>(base);
  std::copy_backward(first, first + static_cast<std::ptrdiff_t>(n), first + static_cast<std::ptrdiff_t>(n + 1));
  *first = line;
  return victim;
}

void CacheHierarchy::remove(Level& lvl, Addr line) {
  std::size_t pos = 0;
  if (!find(lvl, line, &pos)) return;
  std::size_t set = static_cast<std::size_t>(line & (lvl.cfg.sets - 1));
  std::size_t end = set * lvl.cfg.ways + lvl.count[set];
  std::copy(lvl.lines.begin() + static_cast<std::ptrdiff_t>(pos + 1), lvl.lines.begin() + static_cast<std::ptrdiff_t>(end),
            lvl.lines.begin() + static_cast<std::ptrdiff_t>(pos));
  lvl.lines[end - 1] = 0;
  --lvl.count[set];
}

HitLevel CacheHierarchy::lookup(Addr paddr) const {
  Addr line = line_of(paddr);
  for (std::size_t i = 0; i < kCacheLevels; ++i) {
    if (find(levels_[i], line, nullptr)) return static_cast<HitLevel>(i);
  }
  return HitLevel::DRAM;
}

bool CacheHierarchy::contains(HitLevel l, Addr paddr) const {
  if (l == HitLevel::DRAM) return true;
  return find(level(l), line_of(paddr), nullptr);
}

Cycles CacheHierarchy::latency(HitLevel l) const {
  return l == HitLevel::DRAM ? config_.dram_latency : level(l).cfg.hit_latency;
}

HitLevel CacheHierarchy::touch(Addr paddr, bool fill) {
  HitLevel hit = lookup(paddr);
  if (!fill) return hit;
  auto h = static_cast<std::size_t>(hit);
  for (std::size_t i = 0; i < h; ++i) ++stats_[i].misses;
  ++stats_[h].hits;

  Addr line = line_of(paddr);
  // Outermost first so back-invalidation never removes the new line.
  for (std::size_t i = kCacheLevels; i-- > 0;) {
    Level& lvl = levels_[i];
    std::size_t pos = 0;
    if (find(lvl, line, &pos)) {
      promote(lvl, line, pos);
      continue;
    }
    if (auto victim = insert(lvl, line); victim && config_.inclusive) {
      for (std::size_t j = 0; j < i; ++j) remove(levels_[j], *victim);
    }
  }
  return hit;
}

void CacheHierarchy::flush_line(Addr paddr) {
  Addr line = line_of(paddr);
  for (auto& lvl : levels_) remove(lvl, line);
}

std::vector<Addr> CacheHierarchy::resident(HitLevel l, std::size_t set) const {
  const Level& lvl = level(l);
  std::size_t base = set * lvl.cfg.ways;
  return {lvl.lines.begin() + static_cast<std::ptrdiff_t>(base),
          lvl.lines.begin() + static_cast<std::ptrdiff_t>(base + lvl.count[set])};
}

std::string CacheHierarchy::stats_csv() const {
  std::ostringstream os;
  os << "level,hits,misses\n";
  const char* names[] = {"L1", "L2", "LLC", "DRAM"};
  for (std::size_t i = 0; i < stats_.size(); ++i) os << names[i] << "," << stats_[i].hits << "," << stats_[i].misses << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------

std::uint8_t MemoryImage::read_byte(Addr paddr) const {
  auto it = pages_.find(paddr / kPageSize);
  return it == pages_.end() ? 0 : it->second[paddr % kPageSize];
}

void MemoryImage::write_byte(Addr paddr, std::uint8_t value) {
  auto [it, inserted] = pages_.try_emplace(paddr / kPageSize);
  if (inserted) it->second.fill(0);
  it->second[paddr % kPageSize] = value;
}

std::uint64_t MemoryImage::read(Addr paddr, std::size_t size) const {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < size; ++i) v |= static_cast<std::uint64_t>(read_byte(paddr + i)) << (8 * i);
  return v;
}

void MemoryImage::write(Addr paddr, std::uint64_t value, std::size_t size) {
  for (std::size_t i = 0; i < size; ++i) write_byte(paddr + i, static_cast<std::uint8_t>(value >> (8 * i)));
}

void MemoryImage::write_bytes(Addr paddr, const std::vector<std::uint8_t>& bytes) {
  for (std::size_t i = 0; i < bytes.size(); ++i) write_byte(paddr + i, bytes[i]);
}

bool operator==(const MemoryImage& a, const MemoryImage& b) {
  // A materialized all-zero page equals an absent one.
  auto covers = [](const MemoryImage& x, const MemoryImage& y) {
    for (const auto& [pg, bytes] : x.pages_) {
      auto it = y.pages_.find(pg);
      if (it == y.pages_.end()) {
        if (std::any_of(bytes.begin(), bytes.end(), [](std::uint8_t v) { return v != 0; })) return false;
      } else if (it->second != bytes) {
        return false;
      }
    }
    return true;
  };
  return covers(a, b) && covers(b, a);
}

// ---------------------------------------------------------------------------

void AddressSpace::map_page(Addr vpage, Addr ppage, std::uint8_t perms) { pages_[vpage] = PageMapping{ppage, perms}; }

void AddressSpace::map_range(Addr vaddr, Addr paddr, Addr length, std::uint8_t perms) {
  if (vaddr % kPageSize || paddr % kPageSize) throw std::invalid_argument("map_range needs page-aligned addresses");
  for (Addr off = 0; off < length; off += kPageSize) map_page((vaddr + off) / kPageSize, (paddr + off) / kPageSize, perms);
}

std::optional<PageMapping> AddressSpace::mapping(Addr vaddr) const {
  auto it = pages_.find(vaddr / kPageSize);
  if (it == pages_.end()) return std::nullopt;
  return it->second;
}

std::optional<Addr> AddressSpace::translate(Addr vaddr, std::uint8_t need) const {
  auto it = pages_.find(vaddr / kPageSize);
  if (it == pages_.end() || (it->second.perms & need) != need) return std::nullopt;
  return it->second.phys_page * kPageSize + vaddr % kPageSize;
}

// ---------------------------------------------------------------------------

AccessResult MemorySystem::access(Addr paddr, std::size_t size, AccessKind kind, bool fill, std::uint64_t store_value) {
  const std::size_t line = caches.config().line_size;
  if (size == 0 || size > 8) throw std::invalid_argument("access size must be 1..8 bytes");
  if (paddr % line + size > line) throw std::invalid_argument("access straddles a cache line");
  AccessResult r;
  if (kind == AccessKind::write) {
    memory.write(paddr, store_value, size);
    r.value = store_value;
  } else {
    r.value = memory.read(paddr, size);
  }
  r.hit_level = caches.touch(paddr, fill);
  r.latency = caches.latency(r.hit_level);
  return r;
}

// ---------------------------------------------------------------------------

std::vector<Addr> congruent_addresses(const CacheConfig& config, Addr target_paddr, std::size_t count,
                                      const AddressSpace& space, const EvictionArena& arena) {
  std::vector<Addr> out;
  if (count == 0) return out;
  config.validate();
  const Addr line = config.line_size;
  Addr step = std::min<Addr>({config.l1.sets * line, config.l2.sets * line, config.llc.sets * line});
  if (step > kPageSize) step = kPageSize;
  const Addr target_line = target_paddr / line;
  const Addr first_off = target_paddr % step;
  const std::size_t set_counts[] = {config.l1.sets, config.l2.sets, config.llc.sets};

  for (Addr page = arena.base / kPageSize * kPageSize; page < arena.base + arena.size && out.size() < count;
       page += kPageSize) {
    auto pa_page = space.translate(page, kRead);
    if (!pa_page) continue;
    for (Addr off = first_off; off < kPageSize && out.size() < count; off += step) {
      Addr va = page + off;
      if (va < arena.base || va >= arena.base + arena.size) continue;
      Addr pa = *pa_page + off;
      if (pa / line == target_line) continue;
      bool same = std::all_of(std::begin(set_counts), std::end(set_counts), [&](std::size_t sets) {
        return ((pa / line) & (sets - 1)) == (target_line & (sets - 1));
      });
      if (same) out.push_back(va);
    }
  }
  if (out.size() < count) {
    throw std::length_error("eviction arena too small: found " + std::to_string(out.size()) + " of " +
                            std::to_string(count) + " congruent lines");
  }
  return out;
}

std::vector<Addr> congruent_addresses_va(const CacheConfig& config, Addr target_vaddr, std::size_t count,
                                         const AddressSpace& space, const EvictionArena& arena) {
  auto pa = space.translate(target_vaddr, 0);
  if (!pa) throw std::invalid_argument("target address is not mapped in this context");
  return congruent_addresses(config, *pa, count, space, arena);
}

std::vector<Addr> eviction_walk(const std::vector<Addr>& addrs, std::size_t lag) {
  std::vector<Addr> order;
  order.reserve(addrs.size() * 2);
  for (std::size_t i = 0; i < addrs.size() + lag; ++i) {
    if (i < addrs.size()) order.push_back(addrs[i]);
    if (i >= lag && i - lag < addrs.size()) order.push_back(addrs[i - lag]);
  }
  return order;
}

}  // namespace specsim
