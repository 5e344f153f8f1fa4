#include "mcsim/isa.hpp"

namespace mcsim {

ArchState ArchState::initial(const Program& program) {
  ArchState s;
  s.threads.resize(program.threads.size());
  for (std::size_t t = 0; t < program.threads.size(); ++t) s.threads[t].pc = program.threads[t].entry;
  s.memory = program.data;
  return s;
}

Word ArchState::load(Addr addr) const {
  auto it = memory.find(addr);
  return it == memory.end() ? 0 : it->second;
}

void ArchState::store(Addr addr, Word value) { memory[addr] = value; }

std::map<Addr, Word> ArchState::normalized_memory() const {
  std::map<Addr, Word> out;
  for (const auto& [a, v] : memory)
    if (v != 0) out.emplace(a, v);
  return out;
}

bool ArchState::equivalent(const ArchState& other) const {
  return threads == other.threads && normalized_memory() == other.normalized_memory();
}

CommitRecord step_in_place(ArchState& state, const Program& program, int thread) {
  auto& ts = state.threads.at(static_cast<std::size_t>(thread));
  const auto& code = program.threads.at(static_cast<std::size_t>(thread)).code;
  if (ts.pc >= code.size()) throw ExecError("pc " + std::to_string(ts.pc) + " outside program");
  const auto& in = code[ts.pc];
  auto& r = ts.regs;
  const Word a = r[in.src1];
  const Word b = r[in.src2];
  CommitRecord rec;
  rec.pc = ts.pc;
  std::uint32_t next = ts.pc + 1;
  Word result = 0;

  auto mem_addr = [&](Word base) {
    const Addr addr = static_cast<Addr>(wrap_add(base, in.imm));
    if (addr % kWordBytes != 0)
      throw ExecError("misaligned address " + std::to_string(addr) + " at pc " + std::to_string(in.pc));
    return addr;
  };

  switch (in.opcode) {
    case Opcode::ADD: result = wrap_add(a, b); break;
    case Opcode::SUB: result = wrap_sub(a, b); break;
    case Opcode::AND: result = a & b; break;
    case Opcode::OR: result = a | b; break;
    case Opcode::XOR: result = a ^ b; break;
    case Opcode::SLT: result = a < b ? 1 : 0; break;
    case Opcode::MUL: result = wrap_mul(a, b); break;
    case Opcode::ADDI: result = wrap_add(a, in.imm); break;
    case Opcode::LOAD: result = state.load(mem_addr(a)); break;
    case Opcode::STORE: {
      const Addr addr = mem_addr(b);
      state.store(addr, a);
      rec.is_store = true;
      rec.addr = addr;
      rec.value = a;
      break;
    }
    case Opcode::BEQ: if (a == b) next = ts.pc + static_cast<std::uint32_t>(in.imm); break;
    case Opcode::BNE: if (a != b) next = ts.pc + static_cast<std::uint32_t>(in.imm); break;
    case Opcode::BLT: if (a < b) next = ts.pc + static_cast<std::uint32_t>(in.imm); break;
    case Opcode::JAL:
      result = static_cast<Word>(ts.pc + 1);
      next = ts.pc + static_cast<std::uint32_t>(in.imm);
      break;
    case Opcode::JR:
      next = static_cast<std::uint32_t>(a);
      if (next >= code.size())
        throw ExecError("jump target " + std::to_string(a) + " outside program");
      break;
    case Opcode::FENCE: break;
    case Opcode::HALT:
      ts.halted = true;
      next = ts.pc;
      break;
  }
  if (writes_dest(in.opcode) && in.dest != 0) {
    r[in.dest] = result;
    rec.dest = in.dest;
    rec.value = result;
  }
  ts.pc = next;
  return rec;
}

ArchState functional_step(const ArchState& state, const Program& program, int thread) {
  ArchState next = state;
  step_in_place(next, program, thread);
  return next;
}

FunctionalResult functional_run(const Program& program, std::uint64_t step_budget, bool record_trace) {
  if (program.threads.size() != 1) throw Error("functional_run requires a single-thread program");
  FunctionalResult res;
  res.state = ArchState::initial(program);
  auto& ts = res.state.threads[0];
  while (!ts.halted) {
    if (res.retired >= step_budget) {
      res.status = RunStatus::BudgetExhausted;
      return res;
    }
    try {
      auto rec = step_in_place(res.state, program, 0);
      if (record_trace) res.trace.push_back(rec);
    } catch (const ExecError& e) {
      res.status = RunStatus::Trap;
      res.trap_reason = e.what();
      return res;
    }
    ++res.retired;
  }
  res.status = RunStatus::Halted;
  return res;
}

}  // namespace mcsim
