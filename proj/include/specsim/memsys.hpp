// Set-associative cache hierarchy over sparse physical memory, plus the
// per-context page tables that map virtual to physical addresses.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "specsim/isa.hpp"

namespace specsim {

using Cycles = std::uint64_t;

inline constexpr Addr kPageSize = 4096;

struct LevelConfig {
  std::size_t sets = 0;
  std::size_t ways = 0;
  Cycles hit_latency = 0;
  friend bool operator==(const LevelConfig&, const LevelConfig&) = default;
};

struct CacheConfig {
  std::size_t line_size = 64;
  LevelConfig l1{64, 8, 4};
  LevelConfig l2{512, 8, 12};
  LevelConfig llc{4096, 16, 40};
  Cycles dram_latency = 200;
  bool inclusive = true;

  /// Throws std::invalid_argument on a malformed geometry.
  void validate() const;
  friend bool operator==(const CacheConfig&, const CacheConfig&) = default;
};

enum class HitLevel : std::uint8_t { L1 = 0, L2 = 1, LLC = 2, DRAM = 3 };
const char* to_string(HitLevel level);

inline constexpr std::size_t kCacheLevels = 3;

struct LevelStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  friend bool operator==(const LevelStats&, const LevelStats&) = default;
};

/// Tag-only cache state. Every filling access touches the line at every
/// level, so each level is an exact LRU over the access stream restricted
/// to its sets.
class CacheHierarchy {
 public:
  explicit CacheHierarchy(CacheConfig config = {});

  const CacheConfig& config() const { return config_; }

  /// Highest level holding the line; does not change any state.
  HitLevel lookup(Addr paddr) const;
  /// Looks the line up; with `fill`, installs it at every level as MRU.
  HitLevel touch(Addr paddr, bool fill);
  void flush_line(Addr paddr);

  bool contains(HitLevel level, Addr paddr) const;
  Cycles latency(HitLevel level) const;
  std::size_t set_index(HitLevel level, Addr paddr) const;
  Addr line_of(Addr paddr) const { return paddr / config_.line_size; }

  /// Resident line numbers of one set, most recently used first.
  std::vector<Addr> resident(HitLevel level, std::size_t set) const;

  const std::array<LevelStats, kCacheLevels + 1>& stats() const { return stats_; }
  /// CSV `level,hits,misses`.
  std::string stats_csv() const;

  friend bool operator==(const CacheHierarchy&, const CacheHierarchy&) = default;

 private:
  struct Level {
    LevelConfig cfg;
    std::vector<Addr> lines;          // sets * ways, MRU first within a set
    std::vector<std::uint8_t> count;  // occupancy per set
    friend bool operator==(const Level&, const Level&) = default;
  };

  const Level& level(HitLevel l) const { return levels_[static_cast<std::size_t>(l)]; }
  Level& level(HitLevel l) { return levels_[static_cast<std::size_t>(l)]; }
  bool find(const Level& lvl, Addr line, std::size_t* pos) const;
  void promote(Level& lvl, Addr line, std::size_t pos);
  std::optional<Addr> insert(Level& lvl, Addr line);
  void remove(Level& lvl, Addr line);

  CacheConfig config_;
  std::array<Level, kCacheLevels> levels_;
  std::array<LevelStats, kCacheLevels + 1> stats_{};
};

/// Sparse physical memory; never-written bytes read as zero.
class MemoryImage {
 public:
  std::uint8_t read_byte(Addr paddr) const;
  void write_byte(Addr paddr, std::uint8_t value);
  std::uint64_t read(Addr paddr, std::size_t size) const;  // little-endian
  void write(Addr paddr, std::uint64_t value, std::size_t size);
  void write_bytes(Addr paddr, const std::vector<std::uint8_t>& bytes);
  std::size_t page_count() const { return pages_.size(); }

  friend bool operator==(const MemoryImage& a, const MemoryImage& b);

 private:
  using Page = std::array<std::uint8_t, kPageSize>;
  std::unordered_map<Addr, Page> pages_;
};

enum Perm : std::uint8_t { kRead = 1, kWrite = 2, kExec = 4 };

struct PageMapping {
  Addr phys_page = 0;
  std::uint8_t perms = 0;
};

/// A context's page table: virtual page number to physical page number.
class AddressSpace {
 public:
  void map_page(Addr vpage, Addr ppage, std::uint8_t perms);
  /// Maps [vaddr, vaddr+length) linearly onto physical memory at paddr;
  /// both addresses must be page-aligned.
  void map_range(Addr vaddr, Addr paddr, Addr length, std::uint8_t perms);
  /// Physical address, or nothing when unmapped or missing a permission.
  std::optional<Addr> translate(Addr vaddr, std::uint8_t need) const;
  std::optional<PageMapping> mapping(Addr vaddr) const;

 private:
  std::unordered_map<Addr, PageMapping> pages_;
};

enum class AccessKind : std::uint8_t { read, write };

struct AccessResult {
  std::uint64_t value = 0;
  Cycles latency = 0;
  HitLevel hit_level = HitLevel::DRAM;
};

/// Physical memory plus its caches.
struct MemorySystem {
  explicit MemorySystem(CacheConfig config = {}) : caches(config) {}

  /// Reads or writes `size` (1..8) bytes inside one line. With fill=false
  /// the cache contents and statistics are left untouched.
  AccessResult access(Addr paddr, std::size_t size, AccessKind kind, bool fill, std::uint64_t store_value = 0);
  void flush_line(Addr paddr) { caches.flush_line(paddr); }

  MemoryImage memory;
  CacheHierarchy caches;
};

/// A virtual range in a context used for eviction-by-contention.
struct EvictionArena {
  Addr base = 0;
  Addr size = 0;
};

/// `count` arena addresses whose physical lines share every cache level's set
/// with `target_paddr`, each at the target's offset within the set stride.
/// Throws std::length_error if the arena is too small.
std::vector<Addr> congruent_addresses(const CacheConfig& config, Addr target_paddr, std::size_t count,
                                      const AddressSpace& space, const EvictionArena& arena);

/// Same, with the target given as a virtual address of `space`.
std::vector<Addr> congruent_addresses_va(const CacheConfig& config, Addr target_vaddr, std::size_t count,
                                         const AddressSpace& space, const EvictionArena& arena);

/// Reads every address twice in a dual-index walk: a leading index and a
/// second index trailing it by `lag` steps, which keeps replacement LRU-like.
std::vector<Addr> eviction_walk(const std::vector<Addr>& addrs, std::size_t lag = 2);

}  // namespace specsim
