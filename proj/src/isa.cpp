#include "mcsim/isa.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

namespace mcsim {

namespace {

struct OpInfo {
  Opcode op;
  std::string_view name;
};

constexpr std::array<OpInfo, 17> kOps{{
    {Opcode::ADD, "add"},   {Opcode::SUB, "sub"},     {Opcode::AND, "and"},
    {Opcode::OR, "or"},     {Opcode::XOR, "xor"},     {Opcode::SLT, "slt"},
    {Opcode::MUL, "mul"},   {Opcode::ADDI, "addi"},   {Opcode::LOAD, "lw"},
    {Opcode::STORE, "sw"},  {Opcode::BEQ, "beq"},     {Opcode::BNE, "bne"},
    {Opcode::BLT, "blt"},   {Opcode::JAL, "jal"},     {Opcode::JR, "jr"},
    {Opcode::FENCE, "fence"}, {Opcode::HALT, "halt"},
}};

constexpr Word kImmMin = -32768;
constexpr Word kImmMax = 32767;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_operands(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.emplace_back(trim(cur));
  return out;
}

std::optional<std::int64_t> parse_int(std::string_view s) {
  s = trim(s);
  bool neg = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return neg ? -v : v;
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

struct PendingInst {
  DecodedInstruction inst;
  std::string target_label;  // for pc-relative operands given as labels
  int line = 0;
};

struct ThreadBuild {
  std::vector<PendingInst> code;
  std::map<std::string, std::uint32_t> labels;
  std::set<std::uint32_t> labeled_addrs;
};

class Assembler {
 public:
  Program run(std::string_view source) {
    // Data directives may appear anywhere; collect them first so that
    // symbols can be referenced before their definition.
    std::vector<std::pair<int, std::string>> lines;
    {
      std::istringstream in{std::string(source)};
      std::string raw;
      int n = 0;
      while (std::getline(in, raw)) {
        ++n;
        auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        lines.emplace_back(n, std::string(trim(raw)));
      }
    }
    for (const auto& [n, text] : lines) {
      if (text.rfind(".data", 0) == 0) parse_data(n, std::string_view(text).substr(5));
    }
    for (const auto& [n, text] : lines) {
      if (text.empty() || text.rfind(".data", 0) == 0) continue;
      parse_line(n, text);
    }
    return finish();
  }

 private:
  Program program_;
  std::vector<ThreadBuild> threads_;
  int current_ = -1;

  ThreadBuild& cur(int line) {
    if (current_ < 0) {
      if (!threads_.empty()) throw AssembleError(line, "instruction outside a .thread section");
      threads_.emplace_back();
      current_ = 0;
    }
    return threads_[static_cast<std::size_t>(current_)];
  }

  void parse_data(int line, std::string_view rest) {
    std::istringstream in{std::string(rest)};
    std::vector<std::string> tok;
    for (std::string t; in >> t;) tok.push_back(t);
    std::string name;
    if (tok.size() == 3) {
      name = tok[0];
      if (!is_identifier(name)) throw AssembleError(line, "bad data symbol '" + name + "'");
      tok.erase(tok.begin());
    }
    if (tok.size() != 2) throw AssembleError(line, ".data expects [name] addr value");
    auto addr = parse_int(tok[0]);
    auto value = parse_int(tok[1]);
    if (!addr || *addr < 0 || *addr > 0xffffffffLL) throw AssembleError(line, "bad data address");
    if (*addr % kWordBytes != 0) throw AssembleError(line, "data address not word-aligned");
    if (!value) throw AssembleError(line, "bad data value");
    const auto a = static_cast<Addr>(*addr);
    if (program_.data.count(a)) throw AssembleError(line, "duplicate data address");
    program_.data[a] = static_cast<Word>(*value);
    if (!name.empty()) {
      if (program_.symbols.count(name)) throw AssembleError(line, "duplicate data symbol '" + name + "'");
      program_.symbols[name] = a;
    }
  }

  void parse_line(int line, std::string_view text) {
    if (text.rfind(".thread", 0) == 0) {
      auto n = parse_int(text.substr(7));
      if (!n || *n != static_cast<std::int64_t>(threads_.size()))
        throw AssembleError(line, ".thread sections must be numbered 0, 1, 2, ... in order");
      threads_.emplace_back();
      current_ = static_cast<int>(*n);
      return;
    }
    if (!text.empty() && text.front() == '.') throw AssembleError(line, "unknown directive");
    auto colon = text.find(':');
    if (colon != std::string_view::npos) {
      auto label = trim(text.substr(0, colon));
      if (!is_identifier(label)) throw AssembleError(line, "bad label '" + std::string(label) + "'");
      auto& t = cur(line);
      const auto addr = static_cast<std::uint32_t>(t.code.size());
      if (t.labels.count(std::string(label)))
        throw AssembleError(line, "duplicate label '" + std::string(label) + "'");
      if (t.labeled_addrs.count(addr)) throw AssembleError(line, "second label at the same address");
      t.labels[std::string(label)] = addr;
      t.labeled_addrs.insert(addr);
      text = trim(text.substr(colon + 1));
      if (text.empty()) return;
    }
    parse_instruction(line, text);
  }

  static std::uint8_t reg(int line, std::string_view s) {
    s = trim(s);
    if (s.size() < 2 || (s[0] != 'r' && s[0] != 'R'))
      throw AssembleError(line, "expected register, got '" + std::string(s) + "'");
    auto v = parse_int(s.substr(1));
    if (!v || *v < 0 || *v >= kNumLogicalRegs)
      throw AssembleError(line, "register out of range: '" + std::string(s) + "'");
    return static_cast<std::uint8_t>(*v);
  }

  Word imm(int line, std::string_view s) const {
    s = trim(s);
    std::int64_t v;
    if (auto n = parse_int(s)) {
      v = *n;
    } else if (auto it = program_.symbols.find(std::string(s)); it != program_.symbols.end()) {
      v = it->second;
    } else {
      throw AssembleError(line, "bad immediate '" + std::string(s) + "'");
    }
    if (v < kImmMin || v > kImmMax)
      throw AssembleError(line, "immediate out of signed 16-bit range: " + std::string(s));
    return static_cast<Word>(v);
  }

  // "imm(rs)" memory operand.
  std::pair<Word, std::uint8_t> mem_operand(int line, std::string_view s) const {
    s = trim(s);
    auto open = s.find('(');
    auto close = s.rfind(')');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open)
      throw AssembleError(line, "expected imm(reg) operand");
    auto off = trim(s.substr(0, open));
    Word value = off.empty() ? 0 : imm(line, off);
    return {value, reg(line, s.substr(open + 1, close - open - 1))};
  }

  void parse_instruction(int line, std::string_view text) {
    auto space = text.find_first_of(" \t");
    std::string name(text.substr(0, space));
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    auto rest = space == std::string_view::npos ? std::string_view{} : trim(text.substr(space));
    auto it = std::find_if(kOps.begin(), kOps.end(), [&](const OpInfo& o) { return o.name == name; });
    if (it == kOps.end()) throw AssembleError(line, "unknown mnemonic '" + name + "'");

    auto& t = cur(line);
    PendingInst p;
    p.line = line;
    p.inst.opcode = it->op;
    p.inst.pc = static_cast<std::uint32_t>(t.code.size());
    auto ops = split_operands(rest);
    auto expect = [&](std::size_t n) {
      if (ops.size() != n)
        throw AssembleError(line, "'" + name + "' expects " + std::to_string(n) + " operands");
    };
    auto branch_target = [&](std::string_view s) {
      s = trim(s);
      if (auto n = parse_int(s)) {
        if (*n < kImmMin || *n > kImmMax) throw AssembleError(line, "branch offset out of range");
        p.inst.imm = static_cast<Word>(*n);
      } else if (is_identifier(s)) {
        p.target_label = std::string(s);
      } else {
        throw AssembleError(line, "bad branch target '" + std::string(s) + "'");
      }
    };

    switch (it->op) {
      case Opcode::ADD: case Opcode::SUB: case Opcode::AND: case Opcode::OR:
      case Opcode::XOR: case Opcode::SLT: case Opcode::MUL:
        expect(3);
        p.inst.dest = reg(line, ops[0]);
        p.inst.src1 = reg(line, ops[1]);
        p.inst.src2 = reg(line, ops[2]);
        break;
      case Opcode::ADDI:
        expect(3);
        p.inst.dest = reg(line, ops[0]);
        p.inst.src1 = reg(line, ops[1]);
        p.inst.imm = imm(line, ops[2]);
        break;
      case Opcode::LOAD: {
        expect(2);
        p.inst.dest = reg(line, ops[0]);
        auto [off, base] = mem_operand(line, ops[1]);
        p.inst.imm = off;
        p.inst.src1 = base;
        break;
      }
      case Opcode::STORE: {
        expect(2);
        p.inst.src1 = reg(line, ops[0]);
        auto [off, base] = mem_operand(line, ops[1]);
        p.inst.imm = off;
        p.inst.src2 = base;
        break;
      }
      case Opcode::BEQ: case Opcode::BNE: case Opcode::BLT:
        expect(3);
        p.inst.src1 = reg(line, ops[0]);
        p.inst.src2 = reg(line, ops[1]);
        branch_target(ops[2]);
        break;
      case Opcode::JAL:
        expect(2);
        p.inst.dest = reg(line, ops[0]);
        branch_target(ops[1]);
        break;
      case Opcode::JR:
        expect(1);
        p.inst.src1 = reg(line, ops[0]);
        break;
      case Opcode::FENCE: case Opcode::HALT:
        if (!ops.empty()) throw AssembleError(line, "'" + name + "' takes no operands");
        break;
    }
    t.code.push_back(std::move(p));
  }

  Program finish() {
    for (auto& t : threads_) {
      ThreadCode tc;
      for (auto& p : t.code) {
        if (!p.target_label.empty()) {
          auto it = t.labels.find(p.target_label);
          if (it == t.labels.end()) throw AssembleError(p.line, "unresolved label '" + p.target_label + "'");
          std::int64_t off = static_cast<std::int64_t>(it->second) - p.inst.pc;
          if (off < kImmMin || off > kImmMax) throw AssembleError(p.line, "branch offset out of range");
          p.inst.imm = static_cast<Word>(off);
        }
        if (is_control(p.inst.opcode) && p.inst.opcode != Opcode::JR) {
          std::int64_t target = static_cast<std::int64_t>(p.inst.pc) + p.inst.imm;
          if (target < 0 || target >= static_cast<std::int64_t>(t.code.size()))
            throw AssembleError(p.line, "branch target outside the program");
        }
        tc.code.push_back(p.inst);
      }
      program_.threads.push_back(std::move(tc));
    }
    if (program_.threads.empty()) program_.threads.emplace_back();
    return std::move(program_);
  }
};

}  // namespace

std::string_view mnemonic(Opcode op) { return kOps[static_cast<std::size_t>(op)].name; }

bool reads_src1(Opcode op) {
  switch (op) {
    case Opcode::JAL: case Opcode::FENCE: case Opcode::HALT: return false;
    default: return true;
  }
}

bool reads_src2(Opcode op) {
  switch (op) {
    case Opcode::ADD: case Opcode::SUB: case Opcode::AND: case Opcode::OR: case Opcode::XOR:
    case Opcode::SLT: case Opcode::MUL: case Opcode::STORE: case Opcode::BEQ: case Opcode::BNE:
    case Opcode::BLT:
      return true;
    default:
      return false;
  }
}

bool writes_dest(Opcode op) {
  switch (op) {
    case Opcode::ADD: case Opcode::SUB: case Opcode::AND: case Opcode::OR: case Opcode::XOR:
    case Opcode::SLT: case Opcode::MUL: case Opcode::ADDI: case Opcode::LOAD: case Opcode::JAL:
      return true;
    default:
      return false;
  }
}

bool is_cond_branch(Opcode op) {
  return op == Opcode::BEQ || op == Opcode::BNE || op == Opcode::BLT;
}

bool is_control(Opcode op) { return is_cond_branch(op) || op == Opcode::JAL || op == Opcode::JR; }

bool is_memory(Opcode op) { return op == Opcode::LOAD || op == Opcode::STORE; }

std::optional<std::string> Program::symbol_at(Addr addr) const {
  for (const auto& [name, a] : symbols)
    if (a == addr) return name;
  return std::nullopt;
}

Program assemble(std::string_view source) { return Assembler{}.run(source); }

std::string disassemble(const DecodedInstruction& inst) {
  std::ostringstream o;
  o << mnemonic(inst.opcode);
  auto r = [](int x) { return "r" + std::to_string(x); };
  switch (inst.opcode) {
    case Opcode::ADD: case Opcode::SUB: case Opcode::AND: case Opcode::OR:
    case Opcode::XOR: case Opcode::SLT: case Opcode::MUL:
      o << ' ' << r(inst.dest) << ", " << r(inst.src1) << ", " << r(inst.src2);
      break;
    case Opcode::ADDI:
      o << ' ' << r(inst.dest) << ", " << r(inst.src1) << ", " << inst.imm;
      break;
    case Opcode::LOAD:
      o << ' ' << r(inst.dest) << ", " << inst.imm << '(' << r(inst.src1) << ')';
      break;
    case Opcode::STORE:
      o << ' ' << r(inst.src1) << ", " << inst.imm << '(' << r(inst.src2) << ')';
      break;
    case Opcode::BEQ: case Opcode::BNE: case Opcode::BLT:
      o << ' ' << r(inst.src1) << ", " << r(inst.src2) << ", " << inst.imm;
      break;
    case Opcode::JAL:
      o << ' ' << r(inst.dest) << ", " << inst.imm;
      break;
    case Opcode::JR:
      o << ' ' << r(inst.src1);
      break;
    case Opcode::FENCE: case Opcode::HALT:
      break;
  }
  return o.str();
}

std::string to_text(const Program& program) {
  std::ostringstream o;
  for (const auto& [addr, value] : program.data) {
    o << ".data ";
    if (auto name = program.symbol_at(addr)) o << *name << ' ';
    o << "0x" << std::hex << addr << std::dec << ' ' << value << '\n';
  }
  for (std::size_t t = 0; t < program.threads.size(); ++t) {
    o << ".thread " << t << '\n';
    for (const auto& inst : program.threads[t].code) o << "  " << disassemble(inst) << '\n';
  }
  return o.str();
}

}  // namespace mcsim
