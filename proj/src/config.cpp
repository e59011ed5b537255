#include "specsim/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace specsim {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view why) {
  std::ostringstream os;
  os << "bad value '" << value << "' for " << key << ": " << why;
  throw ConfigError(os.str());
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::string_view digits = value;
  int base = 10;
  if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
    digits.remove_prefix(2);
    base = 16;
  }
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v, base);
  if (ec == std::errc::result_out_of_range) bad_value(key, value, "out of range");
  if (ec != std::errc() || end != digits.data() + digits.size() || digits.empty()) {
    bad_value(key, value, "expected an unsigned integer");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  const std::string v = lower(value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, value, "expected true or false");
}

std::vector<std::uint8_t> parse_secret(std::string_view key, std::string_view value) {
  if (value.substr(0, 4) != "hex:") return {value.begin(), value.end()};
  std::string_view h = value.substr(4);
  if (h.size() % 2) bad_value(key, value, "odd number of hex digits");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < h.size(); i += 2) {
    unsigned b = 0;
    auto [end, ec] = std::from_chars(h.data() + i, h.data() + i + 2, b, 16);
    if (ec != std::errc() || end != h.data() + i + 2) bad_value(key, value, "bad hex digit");
    out.push_back(static_cast<std::uint8_t>(b));
  }
  return out;
}

std::string format_secret(const std::vector<std::uint8_t>& s) {
  const bool plain = !s.empty() && s.front() != ' ' && s.back() != ' ' &&
                     std::all_of(s.begin(), s.end(), [](std::uint8_t c) { return c >= 0x20 && c < 0x7f; }) &&
                     !(s.size() >= 4 && std::string(s.begin(), s.begin() + 4) == "hex:");
  if (plain) return {s.begin(), s.end()};
  std::ostringstream os;
  os << "hex:" << std::hex;
  for (std::uint8_t c : s) os << (c < 16 ? "0" : "") << static_cast<unsigned>(c);
  return os.str();
}

std::string hex_u64(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

struct Field {
  ConfigKey key;
  std::function<void(ScenarioConfig&, std::string_view)> set;
  std::function<std::string(const ScenarioConfig&)> get;
};

template <typename T>
Field num(std::string name, std::string help, std::function<T&(ScenarioConfig&)> ref, bool as_hex = false) {
  std::string n = name;
  return Field{{name, help},
               [ref, n](ScenarioConfig& c, std::string_view v) {
                 const std::uint64_t x = parse_u64(n, v);
                 if (x > std::numeric_limits<T>::max()) bad_value(n, v, "out of range");
                 ref(c) = static_cast<T>(x);
               },
               [ref, as_hex](const ScenarioConfig& c) {
                 const auto x = static_cast<std::uint64_t>(ref(const_cast<ScenarioConfig&>(c)));
                 return as_hex ? hex_u64(x) : std::to_string(x);
               }};
}

Field flag(std::string name, std::string help, std::function<bool&(ScenarioConfig&)> ref) {
  std::string n = name;
  return Field{{name, help},
               [ref, n](ScenarioConfig& c, std::string_view v) { ref(c) = parse_bool(n, v); },
               [ref](const ScenarioConfig& c) -> std::string {
                 return ref(const_cast<ScenarioConfig&>(c)) ? "true" : "false";
               }};
}

void level_fields(std::vector<Field>& f, const std::string& name, LevelConfig CacheConfig::*level) {
  const std::string p = "cache." + name + ".";
  f.push_back(num<std::size_t>(p + "sets", name + " set count", [level](ScenarioConfig& c) -> std::size_t& {
    return (c.cache.*level).sets;
  }));
  f.push_back(num<std::size_t>(p + "ways", name + " associativity", [level](ScenarioConfig& c) -> std::size_t& {
    return (c.cache.*level).ways;
  }));
  f.push_back(num<Cycles>(p + "latency", name + " hit latency in cycles", [level](ScenarioConfig& c) -> Cycles& {
    return (c.cache.*level).hit_latency;
  }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using C = ScenarioConfig;
    std::vector<Field> f;
    f.push_back(Field{{"scenario.variant", "V1_flush, V1_evict or V2_btb"},
                      [](C& c, std::string_view v) {
                        auto parsed = variant_from_string(std::string(v));
                        if (!parsed) bad_value("scenario.variant", v, "unknown variant");
                        c.variant = *parsed;
                      },
                      [](const C& c) { return std::string(to_string(c.variant)); }});
    f.push_back(Field{{"scenario.secret", "victim secret, plain text or hex:<digits>"},
                      [](C& c, std::string_view v) { c.secret = parse_secret("scenario.secret", v); },
                      [](const C& c) { return format_secret(c.secret); }});
    f.push_back(num<std::size_t>("scenario.training_passes", "predictor training iterations per attempt",
                                 [](C& c) -> std::size_t& { return c.training_passes; }));
    f.push_back(num<std::size_t>("scenario.attempts_per_byte", "attack attempts before giving up on a byte",
                                 [](C& c) -> std::size_t& { return c.attempts_per_byte; }));
    f.push_back(num<std::uint64_t>("scenario.seed", "random seed for training inputs",
                                   [](C& c) -> std::uint64_t& { return c.seed; }));
    f.push_back(num<std::size_t>("scenario.pad", "filler instructions between bounds check and leak",
                                 [](C& c) -> std::size_t& { return c.pad; }));
    f.push_back(flag("scenario.evict_time", "also run the Evict+Time experiment",
                     [](C& c) -> bool& { return c.evict_time; }));
    f.push_back(flag("scenario.evict_jump_target", "evict the victim's jump-target word before switching",
                     [](C& c) -> bool& { return c.evict_jump_target; }));
    f.push_back(flag("scenario.check_residue", "compare each attempt against a never-mispredicted replay",
                     [](C& c) -> bool& { return c.check_residue; }));

    f.push_back(num<Addr>("probe.base", "probe array virtual base",
                          [](C& c) -> Addr& { return c.probe.probe_base; }, true));
    f.push_back(num<std::size_t>("probe.stride", "bytes between probe entries",
                                 [](C& c) -> std::size_t& { return c.probe.stride; }));
    f.push_back(num<std::size_t>("probe.entries", "probe entries",
                                 [](C& c) -> std::size_t& { return c.probe.entries; }));
    f.push_back(Field{{"probe.threshold", "hit/miss threshold in cycles, or auto"},
                      [](C& c, std::string_view v) {
                        if (lower(v) == "auto") c.probe.threshold.reset();
                        else c.probe.threshold = parse_u64("probe.threshold", v);
                      },
                      [](const C& c) {
                        return c.probe.threshold ? std::to_string(*c.probe.threshold) : std::string("auto");
                      }});

    f.push_back(num<std::size_t>("sim.rob_size", "reorder buffer entries (speculation window)",
                                 [](C& c) -> std::size_t& { return c.sim.rob_size; }));
    f.push_back(num<std::size_t>("sim.fetch_width", "instructions fetched per cycle",
                                 [](C& c) -> std::size_t& { return c.sim.fetch_width; }));
    f.push_back(num<std::size_t>("sim.retire_width", "instructions retired per cycle",
                                 [](C& c) -> std::size_t& { return c.sim.retire_width; }));
    f.push_back(num<Cycles>("sim.alu_latency", "ALU latency in cycles",
                            [](C& c) -> Cycles& { return c.sim.latencies.alu; }));
    f.push_back(num<Cycles>("sim.mul_latency", "MUL latency in cycles",
                            [](C& c) -> Cycles& { return c.sim.latencies.mul; }));
    f.push_back(num<std::uint64_t>("sim.max_cycles", "watchdog limit per run",
                                   [](C& c) -> std::uint64_t& { return c.sim.max_cycles; }));
    f.push_back(flag("sim.record_events", "keep the per-instruction event trace",
                     [](C& c) -> bool& { return c.sim.record_events; }));
    f.push_back(flag("sim.perfect_prediction", "fetch along the architectural path only",
                     [](C& c) -> bool& { return c.sim.perfect_prediction; }));

    f.push_back(num<std::size_t>("cache.line_size", "line size in bytes",
                                 [](C& c) -> std::size_t& { return c.cache.line_size; }));
    level_fields(f, "l1", &CacheConfig::l1);
    level_fields(f, "l2", &CacheConfig::l2);
    level_fields(f, "llc", &CacheConfig::llc);
    f.push_back(num<Cycles>("cache.dram_latency", "memory latency in cycles",
                            [](C& c) -> Cycles& { return c.cache.dram_latency; }));
    f.push_back(flag("cache.inclusive", "outer levels back-invalidate inner ones",
                     [](C& c) -> bool& { return c.cache.inclusive; }));

    f.push_back(num<std::size_t>("predictor.btb_entries", "BTB entries",
                                 [](C& c) -> std::size_t& { return c.predictor.btb_entries; }));
    f.push_back(num<unsigned>("predictor.btb_index_bits", "pc bits used as BTB index",
                              [](C& c) -> unsigned& { return c.predictor.btb_index_bits; }));
    f.push_back(num<unsigned>("predictor.btb_tag_bits", "pc bits used as BTB tag",
                              [](C& c) -> unsigned& { return c.predictor.btb_tag_bits; }));
    f.push_back(num<unsigned>("predictor.history_bits", "global history length",
                              [](C& c) -> unsigned& { return c.predictor.history_bits; }));
    f.push_back(num<std::size_t>("predictor.pht_entries", "pattern history table entries",
                                 [](C& c) -> std::size_t& { return c.predictor.pht_entries; }));
    f.push_back(num<std::size_t>("predictor.rsb_depth", "return stack depth",
                                 [](C& c) -> std::size_t& { return c.predictor.rsb_depth; }));
    f.push_back(num<unsigned>("predictor.observe_bits", "low pc bits the predictor sees",
                              [](C& c) -> unsigned& { return c.predictor.observe_bits; }));

    f.push_back(flag("mitigations.fence_after_branches", "fence after every conditional branch",
                     [](C& c) -> bool& { return c.mitigations.fence_after_branches; }));
    f.push_back(flag("mitigations.flush_on_switch", "clear predictor state on context switch",
                     [](C& c) -> bool& { return c.mitigations.flush_on_switch; }));
    f.push_back(flag("mitigations.no_spec_fill", "speculative loads do not fill caches",
                     [](C& c) -> bool& { return c.mitigations.no_spec_fill; }));
    return f;
  }();
  return table;
}

const Field* find_field(std::string_view key) {
  for (const Field& f : fields()) {
    if (f.key.name == key) return &f;
  }
  return nullptr;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k{{"scenario.preset", "start from a built-in preset"}};
    for (const Field& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void apply_setting(ScenarioConfig& config, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (key == "scenario.preset") {
    auto p = preset(std::string(value));
    if (!p) bad_value(key, value, "unknown preset");
    config = *p;
    return;
  }
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown key '" + std::string(key) + "'");
  f->set(config, value);
}

void apply_override(ScenarioConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  }
  apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void parse_scenario(ScenarioConfig& config, std::string_view text) {
  std::string section;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header");
        section = std::string(trim(line.substr(1, line.size() - 2)));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError("expected key = value");
      std::string key(trim(line.substr(0, eq)));
      if (!section.empty()) key = section + "." + key;
      apply_setting(config, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void load_scenario_file(ScenarioConfig& config, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    parse_scenario(config, buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string get_setting(const ScenarioConfig& config, std::string_view key) {
  const Field* f = find_field(trim(key));
  if (!f) throw ConfigError("unknown key '" + std::string(key) + "'");
  return f->get(config);
}

std::string dump_scenario(const ScenarioConfig& config) {
  std::ostringstream os;
  for (const Field& f : fields()) os << f.key.name << " = " << f.get(config) << "\n";
  return os.str();
}

}  // namespace specsim
