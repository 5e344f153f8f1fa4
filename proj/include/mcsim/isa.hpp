#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcsim/types.hpp"

namespace mcsim {

inline constexpr int kNumLogicalRegs = 32;

enum class Opcode : std::uint8_t {
  ADD, SUB, AND, OR, XOR, SLT, MUL, ADDI,
  LOAD, STORE, BEQ, BNE, BLT, JAL, JR, FENCE, HALT,
};

std::string_view mnemonic(Opcode op);

/// One ISA operation in logical-register form.
///
/// Operand roles per opcode:
///   R-type   dest <- src1 op src2
///   ADDI     dest <- src1 + imm
///   LOAD     dest <- mem[src1 + imm]
///   STORE    mem[src2 + imm] <- src1
///   Bxx      if (src1 cmp src2) pc <- pc + imm
///   JAL      dest <- pc + 1; pc <- pc + imm
///   JR       pc <- src1
struct DecodedInstruction {
  Opcode opcode = Opcode::HALT;
  std::uint8_t dest = 0;
  std::uint8_t src1 = 0;
  std::uint8_t src2 = 0;
  Word imm = 0;
  std::uint32_t pc = 0;

  bool operator==(const DecodedInstruction&) const = default;
};

bool reads_src1(Opcode op);
bool reads_src2(Opcode op);
bool writes_dest(Opcode op);
bool is_cond_branch(Opcode op);
bool is_control(Opcode op);  // conditional branches, JAL, JR
bool is_memory(Opcode op);   // LOAD, STORE

struct ThreadCode {
  std::vector<DecodedInstruction> code;
  std::uint32_t entry = 0;

  bool operator==(const ThreadCode&) const = default;
};

struct Program {
  std::vector<ThreadCode> threads;
  std::map<Addr, Word> data;              // initial shared memory
  std::map<std::string, Addr> symbols;    // named data addresses

  bool operator==(const Program&) const = default;

  std::optional<std::string> symbol_at(Addr addr) const;
};

struct ThreadState {
  std::array<Word, kNumLogicalRegs> regs{};
  std::uint32_t pc = 0;
  bool halted = false;

  bool operator==(const ThreadState&) const = default;
};

/// Architectural state: per-thread registers and pc, shared word memory.
/// Memory entries holding zero are equivalent to absent entries.
struct ArchState {
  std::vector<ThreadState> threads;
  std::map<Addr, Word> memory;

  static ArchState initial(const Program& program);

  Word load(Addr addr) const;
  void store(Addr addr, Word value);
  std::map<Addr, Word> normalized_memory() const;

  bool equivalent(const ArchState& other) const;
};

/// Architecturally visible effect of one retired instruction.
struct CommitRecord {
  std::uint32_t pc = 0;
  int dest = -1;  // logical register written, -1 if none
  Word value = 0;
  bool is_store = false;
  Addr addr = 0;

  bool operator==(const CommitRecord&) const = default;
};

class AssembleError : public Error {
 public:
  AssembleError(int line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ExecError : public Error {
 public:
  using Error::Error;
};

Program assemble(std::string_view source);

std::string disassemble(const DecodedInstruction& inst);

/// Canonical assembly text; `assemble(to_text(p)) == p`.
std::string to_text(const Program& program);

/// Applies exactly one instruction of `thread`. Throws ExecError on a
/// misaligned memory address or a pc outside the program.
ArchState functional_step(const ArchState& state, const Program& program, int thread);

// In-place variant used by the run loop and the enumerators.
CommitRecord step_in_place(ArchState& state, const Program& program, int thread);

enum class RunStatus { Halted, BudgetExhausted, Trap };

struct FunctionalResult {
  ArchState state;
  std::uint64_t retired = 0;
  RunStatus status = RunStatus::Halted;
  std::string trap_reason;
  std::vector<CommitRecord> trace;
};

/// Golden in-order execution of a single-thread program.
FunctionalResult functional_run(const Program& program, std::uint64_t step_budget,
                                bool record_trace = false);

}  // namespace mcsim
