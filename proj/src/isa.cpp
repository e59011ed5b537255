#include "specsim/isa.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <sstream>

namespace specsim {

namespace {

struct OpInfo {
  Opcode op;
  std::string_view name;
  std::vector<Kind> sig;
};

const std::vector<OpInfo>& op_table() {
  static const std::vector<OpInfo> table = {
      {Opcode::ADD, "ADD", {Kind::Reg, Kind::Reg, Kind::RegOrImm}},
      {Opcode::SUB, "SUB", {Kind::Reg, Kind::Reg, Kind::RegOrImm}},
      {Opcode::MUL, "MUL", {Kind::Reg, Kind::Reg, Kind::RegOrImm}},
      {Opcode::AND, "AND", {Kind::Reg, Kind::Reg, Kind::RegOrImm}},
      {Opcode::OR, "OR", {Kind::Reg, Kind::Reg, Kind::RegOrImm}},
      {Opcode::XOR, "XOR", {Kind::Reg, Kind::Reg, Kind::RegOrImm}},
      {Opcode::SHL, "SHL", {Kind::Reg, Kind::Reg, Kind::RegOrImm}},
      {Opcode::SHR, "SHR", {Kind::Reg, Kind::Reg, Kind::RegOrImm}},
      {Opcode::MOVI, "MOVI", {Kind::Reg, Kind::Imm}},
      {Opcode::LOAD, "LOAD", {Kind::Reg, Kind::Mem}},
      {Opcode::STORE, "STORE", {Kind::Reg, Kind::Mem}},
      {Opcode::BEQ, "BEQ", {Kind::Reg, Kind::RegOrMem, Kind::Imm}},
      {Opcode::BLT, "BLT", {Kind::Reg, Kind::RegOrMem, Kind::Imm}},
      {Opcode::JMP, "JMP", {Kind::Imm}},
      {Opcode::JMPR, "JMPR", {Kind::Reg}},
      {Opcode::JMPM, "JMPM", {Kind::Mem}},
      {Opcode::CALL, "CALL", {Kind::Imm}},
      {Opcode::RET, "RET", {}},
      {Opcode::CLFLUSH, "CLFLUSH", {Kind::Mem}},
      {Opcode::RDCYCLE, "RDCYCLE", {Kind::Reg}},
      {Opcode::FENCE, "FENCE", {}},
      {Opcode::YIELD, "YIELD", {}},
      {Opcode::HALT, "HALT", {}},
  };
  return table;
}

const OpInfo& info(Opcode op) { return op_table().at(static_cast<std::size_t>(op)); }

bool kind_accepts(Kind k, const Operand& o) {
  switch (k) {
    case Kind::Reg: return std::holds_alternative<Reg>(o);
    case Kind::Imm: return std::holds_alternative<Imm>(o);
    case Kind::Mem: return std::holds_alternative<MemOperand>(o);
    case Kind::RegOrImm: return !std::holds_alternative<MemOperand>(o);
    case Kind::RegOrMem: return !std::holds_alternative<Imm>(o);
  }
  return false;
}

bool reg_ok(std::uint8_t r) { return r < kNumRegisters; }

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

std::string format_imm(std::int64_t v) {
  if (v < 0) return std::to_string(v);
  if (v < 10) return std::to_string(v);
  return hex(static_cast<std::uint64_t>(v));
}

// ---------------------------------------------------------------------------
// Parsing

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  int line = 0;

  void skip_ws() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\r')) ++pos;
  }
  bool done() {
    skip_ws();
    return pos >= text.size();
  }
  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }
  int column() const { return static_cast<int>(pos) + 1; }
  [[noreturn]] void fail(const std::string& msg) const { throw AsmError(line, column(), msg); }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos;
  }
  std::string_view ident() {
    skip_ws();
    std::size_t start = pos;
    if (pos < text.size() && (std::isalpha(static_cast<unsigned char>(text[pos])) || text[pos] == '_' || text[pos] == '.')) {
      ++pos;
      while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_' || text[pos] == '.')) ++pos;
    }
    return text.substr(start, pos - start);
  }
};

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }

std::optional<std::uint8_t> parse_register(std::string_view word) {
  if (word.size() < 2 || (word[0] != 'r' && word[0] != 'R')) return std::nullopt;
  unsigned v = 0;
  auto [p, ec] = std::from_chars(word.data() + 1, word.data() + word.size(), v);
  if (ec != std::errc() || p != word.data() + word.size()) return std::nullopt;
  if (v >= static_cast<unsigned>(kNumRegisters)) return std::nullopt;
  return static_cast<std::uint8_t>(v);
}

// `r` followed only by digits, whether or not the number is a valid id.
bool register_shaped(std::string_view word) {
  return word.size() >= 2 && (word[0] == 'r' || word[0] == 'R') &&
         word.find_first_not_of("0123456789", 1) == std::string_view::npos;
}

// Number literal: decimal or 0x hex, optional leading '-'.
std::optional<std::int64_t> parse_number(Cursor& c) {
  c.skip_ws();
  std::size_t start = c.pos;
  bool neg = false;
  if (c.pos < c.text.size() && c.text[c.pos] == '-') {
    neg = true;
    ++c.pos;
  }
  std::string_view rest = c.text.substr(c.pos);
  std::uint64_t v = 0;
  const char* first = rest.data();
  const char* last = rest.data() + rest.size();
  std::from_chars_result r;
  if (rest.size() > 2 && rest[0] == '0' && (rest[1] == 'x' || rest[1] == 'X')) {
    r = std::from_chars(first + 2, last, v, 16);
    if (r.ptr == first + 2) c.fail("malformed hex literal");
  } else {
    r = std::from_chars(first, last, v, 10);
    if (r.ptr == first) {
      c.pos = start;
      return std::nullopt;
    }
  }
  if (r.ec == std::errc::result_out_of_range) c.fail("literal out of range");
  if (r.ptr < last && (std::isalnum(static_cast<unsigned char>(*r.ptr)) || *r.ptr == '_')) {
    c.fail("malformed number");
  }
  c.pos += static_cast<std::size_t>(r.ptr - first);
  return static_cast<std::int64_t>(neg ? 0 - v : v);
}

struct SymbolRef {
  std::string name;
  bool negate = false;
  int line = 0;
  int column = 0;
};

struct PendingOperand {
  Operand operand;
  std::optional<SymbolRef> symbol;  // adds into Imm value or MemOperand disp
};

PendingOperand parse_value_operand(Cursor& c) {
  PendingOperand out{Imm{}, std::nullopt};
  if (auto n = parse_number(c)) {
    out.operand = Imm{*n};
    return out;
  }
  int col = c.column();
  if (c.peek() == '-') c.fail("expected number after '-'");
  std::string_view word = c.ident();
  if (word.empty()) c.fail("expected operand");
  if (auto r = parse_register(word)) {
    out.operand = Reg{*r};
    return out;
  }
  if (register_shaped(word)) c.fail("register " + std::string(word) + " out of range");
  if (!is_ident_start(word[0])) c.fail("bad operand '" + std::string(word) + "'");
  out.symbol = SymbolRef{std::string(word), false, c.line, col};
  return out;
}

PendingOperand parse_mem_operand(Cursor& c) {
  c.expect('[');
  MemOperand m;
  std::optional<SymbolRef> sym;
  bool first = true;
  while (true) {
    bool negate = false;
    if (!first) {
      char ch = c.peek();
      if (ch == ']') break;
      if (ch == '+') {
        ++c.pos;
      } else if (ch == '-') {
        ++c.pos;
        negate = true;
      } else {
        c.fail("expected '+', '-' or ']' in memory operand");
      }
    } else if (c.peek() == ']') {
      break;
    }
    first = false;
    c.skip_ws();
    if (!negate && c.peek() == '-') {
      ++c.pos;
      negate = true;
    }
    int col = c.column();
    if (auto n = parse_number(c)) {
      auto u = static_cast<std::uint64_t>(*n);
      m.disp = static_cast<std::int64_t>(static_cast<std::uint64_t>(m.disp) + (negate ? 0 - u : u));
      continue;
    }
    std::string_view word = c.ident();
    if (word.empty()) c.fail("expected register, number or label in memory operand");
    if (!parse_register(word) && register_shaped(word)) c.fail("register " + std::string(word) + " out of range");
    if (auto r = parse_register(word)) {
      if (negate) c.fail("registers cannot be subtracted");
      if (c.peek() == '*') {
        ++c.pos;
        auto s = parse_number(c);
        if (!s || (*s != 1 && *s != 2 && *s != 4 && *s != 8)) c.fail("scale must be 1, 2, 4 or 8");
        if (m.index) c.fail("memory operand has two index registers");
        m.index = *r;
        m.scale = static_cast<std::uint8_t>(*s);
      } else if (!m.base) {
        m.base = *r;
      } else if (!m.index) {
        m.index = *r;
        m.scale = 1;
      } else {
        c.fail("too many registers in memory operand");
      }
      continue;
    }
    if (!is_ident_start(word[0])) c.fail("bad term '" + std::string(word) + "'");
    if (sym) c.fail("at most one label per memory operand");
    sym = SymbolRef{std::string(word), negate, c.line, col};
  }
  c.expect(']');
  return PendingOperand{m, sym};
}

struct PendingInstruction {
  Addr address = 0;
  Opcode op = Opcode::HALT;
  std::vector<PendingOperand> operands;
  int line = 0;
};

struct Interval {
  Addr begin;
  Addr end;
  int line;
};

}  // namespace

// ---------------------------------------------------------------------------

std::string_view mnemonic(Opcode op) { return info(op).name; }

std::optional<Opcode> opcode_from_mnemonic(std::string_view text) {
  std::string u = upper(text);
  for (const auto& e : op_table()) {
    if (e.name == u) return e.op;
  }
  return std::nullopt;
}

const std::vector<Kind>& signature(Opcode op) { return info(op).sig; }

void validate(const Instruction& inst) {
  const auto& sig = signature(inst.op);
  if (inst.operands.size() != sig.size()) {
    throw std::invalid_argument(std::string(mnemonic(inst.op)) + " expects " + std::to_string(sig.size()) +
                                " operand(s), got " + std::to_string(inst.operands.size()));
  }
  for (std::size_t i = 0; i < sig.size(); ++i) {
    const Operand& o = inst.operands[i];
    if (!kind_accepts(sig[i], o)) {
      throw std::invalid_argument(std::string(mnemonic(inst.op)) + ": operand " + std::to_string(i + 1) +
                                  " has the wrong kind");
    }
    if (auto* r = std::get_if<Reg>(&o); r && !reg_ok(r->id)) throw std::invalid_argument("register out of range");
    if (auto* m = std::get_if<MemOperand>(&o)) {
      if ((m->base && !reg_ok(*m->base)) || (m->index && !reg_ok(*m->index))) {
        throw std::invalid_argument("register out of range");
      }
      if (m->scale != 1 && m->scale != 2 && m->scale != 4 && m->scale != 8) {
        throw std::invalid_argument("bad scale");
      }
    }
  }
}

ControlClass control_class(Opcode op) {
  switch (op) {
    case Opcode::BEQ:
    case Opcode::BLT: return ControlClass::conditional;
    case Opcode::JMPR:
    case Opcode::JMPM: return ControlClass::indirect;
    case Opcode::CALL: return ControlClass::call;
    case Opcode::RET: return ControlClass::ret;
    case Opcode::JMP: return ControlClass::direct;
    default: return ControlClass::none;
  }
}

const Instruction* Program::find(Addr pc) const {
  auto it = std::lower_bound(text.begin(), text.end(), pc,
                             [](const TextEntry& e, Addr a) { return e.address < a; });
  if (it == text.end() || it->address != pc) return nullptr;
  return &it->inst;
}

Addr Program::label(const std::string& name) const {
  auto it = labels.find(name);
  if (it == labels.end()) throw std::out_of_range("no such label: " + name);
  return it->second;
}

AsmError::AsmError(int line, int column, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

Program assemble(std::string_view source) {
  Program prog;
  std::vector<PendingInstruction> pending;
  std::map<std::string, int> label_lines;
  std::vector<Interval> intervals;
  Addr lc = 0;

  auto emit_bytes = [&](const std::vector<std::uint8_t>& bytes, int line) {
    if (bytes.empty()) return;
    if (!prog.data.empty() && prog.data.back().address + prog.data.back().bytes.size() == lc) {
      auto& seg = prog.data.back().bytes;
      seg.insert(seg.end(), bytes.begin(), bytes.end());
    } else {
      prog.data.push_back(DataSegment{lc, bytes});
    }
    intervals.push_back({lc, lc + bytes.size(), line});
    lc += bytes.size();
  };

  int line_no = 0;
  std::size_t start = 0;
  while (start <= source.size()) {
    std::size_t end = source.find('\n', start);
    if (end == std::string_view::npos) end = source.size();
    ++line_no;
    std::string_view line = source.substr(start, end - start);
    if (auto semi = line.find(';'); semi != std::string_view::npos) line = line.substr(0, semi);
    start = end + 1;

    Cursor c{line, 0, line_no};
    // Labels.
    while (!c.done()) {
      std::size_t save = c.pos;
      int col = c.column();
      std::string_view word = c.ident();
      if (!word.empty() && c.peek() == ':' && word[0] != '.') {
        ++c.pos;
        std::string name(word);
        if (!is_ident_start(name[0])) c.fail("bad label name");
        if (parse_register(name)) throw AsmError(line_no, col, "label name '" + name + "' is a register");
        if (prog.labels.count(name)) throw AsmError(line_no, col, "duplicate label '" + name + "'");
        prog.labels[name] = lc;
        label_lines[name] = line_no;
        continue;
      }
      c.pos = save;
      break;
    }
    if (c.done()) continue;

    int stmt_col = c.column();
    std::string_view word = c.ident();
    if (word.empty()) c.fail("expected mnemonic or directive");

    if (word[0] == '.') {
      std::string dir = upper(word);
      if (dir == ".ORG") {
        auto v = parse_number(c);
        if (!v || *v < 0) c.fail(".org needs a non-negative address");
        lc = static_cast<Addr>(*v);
      } else if (dir == ".BYTE") {
        std::vector<std::uint8_t> bytes;
        do {
          auto v = parse_number(c);
          if (!v || *v < 0 || *v > 255) c.fail(".byte values must be 0..255");
          bytes.push_back(static_cast<std::uint8_t>(*v));
          if (c.peek() != ',') break;
          ++c.pos;
        } while (true);
        emit_bytes(bytes, line_no);
      } else if (dir == ".FILL") {
        auto count = parse_number(c);
        if (!count || *count < 0) c.fail(".fill needs a non-negative count");
        c.expect(',');
        auto v = parse_number(c);
        if (!v || *v < 0 || *v > 255) c.fail(".fill byte must be 0..255");
        emit_bytes(std::vector<std::uint8_t>(static_cast<std::size_t>(*count), static_cast<std::uint8_t>(*v)),
                   line_no);
      } else {
        throw AsmError(line_no, stmt_col, "unknown directive '" + std::string(word) + "'");
      }
      if (!c.done()) c.fail("unexpected trailing text");
      continue;
    }

    auto op = opcode_from_mnemonic(word);
    if (!op) throw AsmError(line_no, stmt_col, "unknown mnemonic '" + std::string(word) + "'");
    if (lc % kInstructionWidth != 0) throw AsmError(line_no, stmt_col, "instruction address is not 4-byte aligned");

    PendingInstruction pi{lc, *op, {}, line_no};
    if (!c.done()) {
      do {
        if (c.peek() == '[') {
          pi.operands.push_back(parse_mem_operand(c));
        } else {
          pi.operands.push_back(parse_value_operand(c));
        }
        if (c.peek() != ',') break;
        ++c.pos;
      } while (true);
    }
    if (!c.done()) c.fail("unexpected trailing text");

    const auto& sig = signature(*op);
    if (pi.operands.size() != sig.size()) {
      throw AsmError(line_no, stmt_col,
                     std::string(mnemonic(*op)) + " expects " + std::to_string(sig.size()) + " operand(s), got " +
                         std::to_string(pi.operands.size()));
    }
    for (std::size_t i = 0; i < sig.size(); ++i) {
      if (!kind_accepts(sig[i], pi.operands[i].operand)) {
        throw AsmError(line_no, stmt_col,
                       std::string(mnemonic(*op)) + ": operand " + std::to_string(i + 1) + " has the wrong kind");
      }
    }
    intervals.push_back({lc, lc + kInstructionWidth, line_no});
    pending.push_back(std::move(pi));
    lc += kInstructionWidth;
  }

  // Overlap check.
  std::sort(intervals.begin(), intervals.end(), [](const Interval& a, const Interval& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < intervals.size(); ++i) {
    if (intervals[i].begin < intervals[i - 1].end) {
      throw AsmError(std::max(intervals[i].line, intervals[i - 1].line), 1, "overlapping segments");
    }
  }

  // Resolve symbols.
  auto resolve = [&](const SymbolRef& s) -> std::int64_t {
    auto it = prog.labels.find(s.name);
    if (it == prog.labels.end()) throw AsmError(s.line, s.column, "unresolved label '" + s.name + "'");
    return static_cast<std::int64_t>(s.negate ? 0 - it->second : it->second);
  };
  for (auto& pi : pending) {
    Instruction inst{pi.op, {}};
    for (auto& po : pi.operands) {
      if (po.symbol) {
        auto v = static_cast<std::uint64_t>(resolve(*po.symbol));
        if (auto* imm = std::get_if<Imm>(&po.operand)) {
          imm->value = static_cast<std::int64_t>(static_cast<std::uint64_t>(imm->value) + v);
        } else if (auto* m = std::get_if<MemOperand>(&po.operand)) {
          m->disp = static_cast<std::int64_t>(static_cast<std::uint64_t>(m->disp) + v);
        }
      }
      inst.operands.push_back(po.operand);
    }
    prog.text.push_back(TextEntry{pi.address, std::move(inst)});
  }
  std::sort(prog.text.begin(), prog.text.end(),
            [](const TextEntry& a, const TextEntry& b) { return a.address < b.address; });

  // Canonical data layout: sorted, adjacent segments merged.
  std::sort(prog.data.begin(), prog.data.end(),
            [](const DataSegment& a, const DataSegment& b) { return a.address < b.address; });
  std::vector<DataSegment> merged;
  for (auto& seg : prog.data) {
    if (!merged.empty() && merged.back().address + merged.back().bytes.size() == seg.address) {
      merged.back().bytes.insert(merged.back().bytes.end(), seg.bytes.begin(), seg.bytes.end());
    } else {
      merged.push_back(std::move(seg));
    }
  }
  prog.data = std::move(merged);

  if (prog.text.empty()) throw AsmError(line_no, 1, "program has no instructions");
  if (auto it = prog.labels.find("_start"); it != prog.labels.end()) {
    if (!prog.find(it->second)) throw AsmError(label_lines["_start"], 1, "_start does not label an instruction");
    prog.entry = it->second;
  } else {
    prog.entry = prog.text.front().address;
  }
  return prog;
}

std::string format_instruction(const Instruction& inst) {
  std::string out(mnemonic(inst.op));
  for (std::size_t i = 0; i < inst.operands.size(); ++i) {
    out += i == 0 ? " " : ", ";
    const Operand& o = inst.operands[i];
    if (auto* r = std::get_if<Reg>(&o)) {
      out += "r" + std::to_string(r->id);
    } else if (auto* imm = std::get_if<Imm>(&o)) {
      out += format_imm(imm->value);
    } else {
      const auto& m = std::get<MemOperand>(o);
      std::string body;
      if (m.base) body += "r" + std::to_string(*m.base);
      if (m.index) {
        if (!body.empty()) body += " + ";
        body += "r" + std::to_string(*m.index) + "*" + std::to_string(m.scale);
      }
      if (m.disp != 0 || body.empty()) {
        if (body.empty()) {
          body += format_imm(m.disp);
        } else if (m.disp < 0) {
          // Negating INT64_MIN is undefined; print it through the unsigned path.
          body += " - " + hex(0 - static_cast<std::uint64_t>(m.disp));
        } else {
          body += " + " + format_imm(m.disp);
        }
      }
      out += "[" + body + "]";
    }
  }
  return out;
}

std::string disassemble(const Program& program) {
  std::multimap<Addr, std::string> labels_at;
  for (const auto& [name, addr] : program.labels) labels_at.emplace(addr, name);

  std::ostringstream os;
  bool have_lc = false;
  Addr lc = 0;
  auto move_to = [&](Addr a) {
    if (!have_lc || lc != a) {
      os << ".org " << hex(a) << "\n";
      lc = a;
      have_lc = true;
    }
  };
  auto emit_labels_upto = [&](Addr a) {
    // Labels strictly before `a` that no item covers.
    while (!labels_at.empty() && labels_at.begin()->first < a) {
      auto it = labels_at.begin();
      move_to(it->first);
      os << it->second << ":\n";
      labels_at.erase(it);
    }
  };
  auto emit_labels_at = [&](Addr a) {
    auto [lo, hi] = labels_at.equal_range(a);
    for (auto it = lo; it != hi; ++it) os << it->second << ":\n";
    labels_at.erase(lo, hi);
  };

  std::size_t ti = 0, di = 0;
  while (ti < program.text.size() || di < program.data.size()) {
    bool take_text = di >= program.data.size() ||
                     (ti < program.text.size() && program.text[ti].address < program.data[di].address);
    if (take_text) {
      const auto& e = program.text[ti++];
      emit_labels_upto(e.address);
      move_to(e.address);
      emit_labels_at(e.address);
      os << format_instruction(e.inst) << "\n";
      lc += kInstructionWidth;
    } else {
      const auto& seg = program.data[di++];
      emit_labels_upto(seg.address);
      move_to(seg.address);
      std::size_t i = 0;
      while (i < seg.bytes.size()) {
        Addr here = seg.address + i;
        emit_labels_at(here);
        std::size_t n = std::min<std::size_t>(16, seg.bytes.size() - i);
        // Break the line at the next label inside the segment.
        if (!labels_at.empty()) {
          auto next = labels_at.upper_bound(here);
          if (next != labels_at.end() && next->first < here + n) n = static_cast<std::size_t>(next->first - here);
        }
        os << ".byte ";
        for (std::size_t k = 0; k < n; ++k) os << (k ? ", " : "") << static_cast<int>(seg.bytes[i + k]);
        os << "\n";
        i += n;
      }
      lc = seg.address + seg.bytes.size();
    }
  }
  emit_labels_upto(~Addr{0});
  if (!labels_at.empty()) {
    for (auto& [a, name] : labels_at) {
      move_to(a);
      os << name << ":\n";
    }
  }
  return os.str();
}

}  // namespace specsim
