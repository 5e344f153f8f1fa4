#include "mcsim/consistency.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>
#include <unordered_set>

namespace mcsim::consistency {

std::string_view to_string(Model m) { return m == Model::SC ? "sc" : "tso"; }

Model parse_model(std::string_view s) {
  std::string l(s);
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "sc") return Model::SC;
  if (l == "tso") return Model::TSO;
  throw Error("unknown consistency model '" + std::string(s) + "' (expected sc or tso)");
}

void StoreBuffer::push(Addr addr, Word value) {
  if (full()) throw Error("store buffer overflow");
  entries_.push_back({addr, value});
}

std::optional<Word> StoreBuffer::forward(Addr addr) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it)
    if (it->addr == addr) return it->value;
  return std::nullopt;
}

SbAction sb_process(StoreBuffer& sb, const MemOp& op, Model model) {
  SbAction a;
  switch (op.kind) {
    case MemOpKind::Load:
      if (model == Model::SC) {
        a.kind = sb.empty() ? SbAction::Proceed : SbAction::Stall;
      } else if (auto v = sb.forward(op.addr)) {
        a.kind = SbAction::Forwarded;
        a.value = *v;
      } else {
        a.kind = SbAction::Proceed;
      }
      return a;
    case MemOpKind::Store:
      if (sb.full()) return a;
      sb.push(op.addr, op.value);
      a.kind = SbAction::Enqueued;
      return a;
    case MemOpKind::Fence:
      a.kind = sb.empty() ? SbAction::Done : SbAction::Stall;
      return a;
  }
  return a;
}

std::string format_outcome(const Outcome& o) {
  std::string s = "(";
  bool first = true;
  for (const auto& [k, v] : o) {
    if (!first) s += ", ";
    first = false;
    s += k + "=" + std::to_string(v);
  }
  return s + ")";
}

namespace {

std::string reg_key(std::size_t thread, int reg) { return std::to_string(thread) + ":r" + std::to_string(reg); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

struct EnumState {
  ArchState arch;
  std::vector<std::deque<BufferedStore>> buffers;  // empty under SC
};

void encode_word(std::string& out, std::uint32_t w) { out.append(reinterpret_cast<const char*>(&w), sizeof w); }

std::string encode(const EnumState& s) {
  std::string out;
  for (const auto& t : s.arch.threads) {
    encode_word(out, t.pc | (t.halted ? 0x80000000u : 0u));
    for (Word r : t.regs) encode_word(out, static_cast<std::uint32_t>(r));
  }
  for (const auto& [a, v] : s.arch.memory) {
    if (v == 0) continue;
    encode_word(out, a);
    encode_word(out, static_cast<std::uint32_t>(v));
  }
  out.push_back('|');
  for (const auto& b : s.buffers) {
    for (const auto& e : b) {
      encode_word(out, e.addr);
      encode_word(out, static_cast<std::uint32_t>(e.value));
    }
    out.push_back('|');
  }
  return out;
}

class Enumerator {
 public:
  Enumerator(const LitmusTest& test, Model model) : test_(test), model_(model) {}

  OutcomeSet run() {
    validate_litmus(test_.program);
    EnumState s;
    s.arch = ArchState::initial(test_.program);
    if (model_ == Model::TSO) s.buffers.resize(test_.program.threads.size());
    explore(s);
    return std::move(outcomes_);
  }

 private:
  bool finished(const EnumState& s, std::size_t t) const {
    return s.arch.threads[t].halted;
  }

  // Applies one instruction of thread t; false when not enabled.
  bool step(EnumState& s, std::size_t t) const {
    auto& ts = s.arch.threads[t];
    const auto& in = test_.program.threads[t].code.at(ts.pc);
    if (model_ == Model::SC) {
      step_in_place(s.arch, test_.program, static_cast<int>(t));
      return true;
    }
    auto& buf = s.buffers[t];
    const Addr addr = static_cast<Addr>(wrap_add(ts.regs[in.opcode == Opcode::STORE ? in.src2 : in.src1], in.imm));
    switch (in.opcode) {
      case Opcode::FENCE:
        if (!buf.empty()) return false;
        break;
      case Opcode::STORE:
        if (addr % kWordBytes != 0) throw ExecError("misaligned store in litmus thread " + std::to_string(t));
        buf.push_back({addr, ts.regs[in.src1]});
        ++ts.pc;
        return true;
      case Opcode::LOAD: {
        if (addr % kWordBytes != 0) throw ExecError("misaligned load in litmus thread " + std::to_string(t));
        Word v = s.arch.load(addr);
        for (auto it = buf.rbegin(); it != buf.rend(); ++it)
          if (it->addr == addr) {
            v = it->value;
            break;
          }
        if (in.dest != 0) ts.regs[in.dest] = v;
        ++ts.pc;
        return true;
      }
      default:
        break;
    }
    step_in_place(s.arch, test_.program, static_cast<int>(t));
    return true;
  }

  void explore(const EnumState& s) {
    if (!seen_.insert(encode(s)).second) return;
    bool moved = false;
    for (std::size_t t = 0; t < s.arch.threads.size(); ++t) {
      if (finished(s, t)) continue;
      EnumState n = s;
      if (!step(n, t)) continue;
      moved = true;
      explore(n);
    }
    for (std::size_t t = 0; t < s.buffers.size(); ++t) {
      if (s.buffers[t].empty()) continue;
      EnumState n = s;
      const auto e = n.buffers[t].front();
      n.buffers[t].pop_front();
      n.arch.store(e.addr, e.value);
      moved = true;
      explore(n);
    }
    if (!moved) outcomes_.insert(outcome_of(test_, s.arch));
  }

  const LitmusTest& test_;
  Model model_;
  std::unordered_set<std::string> seen_;
  OutcomeSet outcomes_;
};

}  // namespace

std::vector<std::string> LitmusTest::keys() const {
  std::vector<std::string> out;
  for (std::size_t t = 0; t < program.threads.size(); ++t) {
    std::set<int> regs;
    for (const auto& in : program.threads[t].code)
      if (in.opcode == Opcode::LOAD && in.dest != 0) regs.insert(in.dest);
    for (int r : regs) out.push_back(reg_key(t, r));
  }
  for (const auto& [name, addr] : program.symbols) out.push_back("[" + name + "]");
  std::sort(out.begin(), out.end());
  return out;
}

Outcome outcome_of(const LitmusTest& test, const ArchState& final_state) {
  Outcome o;
  for (std::size_t t = 0; t < test.program.threads.size(); ++t)
    for (const auto& in : test.program.threads[t].code)
      if (in.opcode == Opcode::LOAD && in.dest != 0) o[reg_key(t, in.dest)] = final_state.threads.at(t).regs[in.dest];
  for (const auto& [name, addr] : test.program.symbols) o["[" + name + "]"] = final_state.load(addr);
  return o;
}

void validate_litmus(const Program& program) {
  const auto n = program.threads.size();
  if (n < 1 || n > static_cast<std::size_t>(kMaxLitmusThreads))
    throw Error("litmus tests have 1 to " + std::to_string(kMaxLitmusThreads) + " threads");
  for (std::size_t t = 0; t < n; ++t) {
    const auto& code = program.threads[t].code;
    int ops = 0;
    for (const auto& in : code) {
      if (is_control(in.opcode))
        throw Error("litmus thread " + std::to_string(t) + " is not straight-line ('" + disassemble(in) + "')");
      if (is_memory(in.opcode) || in.opcode == Opcode::FENCE) ++ops;
    }
    if (ops > kMaxLitmusOps)
      throw Error("litmus thread " + std::to_string(t) + " has " + std::to_string(ops) + " memory operations (max " +
                  std::to_string(kMaxLitmusOps) + ")");
    if (code.empty() || code.back().opcode != Opcode::HALT)
      throw Error("litmus thread " + std::to_string(t) + " must end with halt");
    if (program.threads[t].entry != 0) throw Error("litmus threads start at pc 0");
  }
}

Outcome parse_outcome(const LitmusTest& test, std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '(') {
    if (text.back() != ')') throw Error("outcome: missing ')'");
    text = trim(text.substr(1, text.size() - 2));
  }
  const auto keys = test.keys();
  auto known = [&](const std::string& k) { return std::binary_search(keys.begin(), keys.end(), k); };
  Outcome o;
  std::string body(text);
  std::istringstream in(body);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("outcome: expected key=value in '" + item + "'");
    std::string key(trim(std::string_view(item).substr(0, eq)));
    std::string val(trim(std::string_view(item).substr(eq + 1)));
    if (!known(key)) {
      if (known("[" + key + "]")) {
        key = "[" + key + "]";
      } else if (key.size() > 1 && key[0] == 'r') {
        std::vector<std::string> hits;
        for (const auto& k : keys)
          if (k.size() > key.size() && k.compare(k.size() - key.size() - 1, std::string::npos, ":" + key) == 0)
            hits.push_back(k);
        if (hits.size() != 1)
          throw Error("outcome: register '" + key + "' " + (hits.empty() ? "receives no load" : "is ambiguous"));
        key = hits[0];
      } else {
        throw Error("outcome: unknown key '" + key + "'");
      }
    }
    try {
      std::size_t used = 0;
      const long v = std::stol(val, &used, 0);
      if (used != val.size()) throw Error("");
      o[key] = static_cast<Word>(v);
    } catch (const std::exception&) {
      throw Error("outcome: bad value '" + val + "' for " + key);
    }
  }
  if (o.empty()) throw Error("outcome: empty");
  return o;
}

LitmusTest parse_litmus(std::string_view text, std::string name) {
  static const std::regex expect_re(R"(^\s*expect\s+(allowed|forbidden)\s+(\(.*\))\s+under\s+(sc|tso)\s*$)",
                                    std::regex::icase);
  LitmusTest test;
  test.name = std::move(name);
  std::string source;
  std::vector<std::pair<int, std::string>> expect_lines;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto body = trim(line);
    if (body.rfind("expect", 0) == 0) {
      expect_lines.emplace_back(n, line);
      source += '\n';
    } else {
      source += line + '\n';
    }
  }
  test.program = assemble(source);
  for (auto& t : test.program.threads) {
    if (t.code.empty() || t.code.back().opcode != Opcode::HALT) {
      DecodedInstruction halt;
      halt.opcode = Opcode::HALT;
      halt.pc = static_cast<std::uint32_t>(t.code.size());
      t.code.push_back(halt);
    }
  }
  validate_litmus(test.program);
  for (const auto& [ln, l] : expect_lines) {
    std::smatch m;
    if (!std::regex_match(l, m, expect_re))
      throw AssembleError(ln, "expected 'expect allowed|forbidden (k=v, ...) under sc|tso'");
    Expectation e;
    e.line = ln;
    e.allowed = m[1].str().size() == 7;
    try {
      e.outcome = parse_outcome(test, m[2].str());
      e.model = parse_model(m[3].str());
    } catch (const Error& err) {
      throw AssembleError(ln, err.what());
    }
    test.expectations.push_back(std::move(e));
  }
  return test;
}

OutcomeSet enumerate_sc(const LitmusTest& test) { return Enumerator(test, Model::SC).run(); }
OutcomeSet enumerate_tso(const LitmusTest& test) { return Enumerator(test, Model::TSO).run(); }
OutcomeSet enumerate(const LitmusTest& test, Model model) { return Enumerator(test, model).run(); }

bool check_outcome(const Outcome& outcome, Model model, const LitmusTest& test) {
  const auto keys = test.keys();
  for (const auto& [k, v] : outcome)
    if (!std::binary_search(keys.begin(), keys.end(), k)) throw Error("outcome: unknown key '" + k + "'");
  if (outcome.empty()) throw Error("outcome: empty");
  for (const auto& o : enumerate(test, model)) {
    bool match = true;
    for (const auto& [k, v] : outcome) {
      auto it = o.find(k);
      if (it == o.end() || it->second != v) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

}  // namespace mcsim::consistency
