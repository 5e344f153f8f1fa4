#include "doctest.h"
#include "mcsim/isa.hpp"
#include "program_gen.hpp"

using namespace mcsim;

namespace {

DecodedInstruction only(const Program& p, std::size_t i = 0) { return p.threads.at(0).code.at(i); }

Program one_thread(const std::string& body) { return assemble(".thread 0\n" + body); }

}  // namespace

TEST_CASE("assembler maps operands directly") {
  auto add = only(one_thread("add r1, r2, r3\n"));
  CHECK(add.opcode == Opcode::ADD);
  CHECK(add.dest == 1);
  CHECK(add.src1 == 2);
  CHECK(add.src2 == 3);

  auto sw = only(one_thread("sw r1, 4(r2)\n"));
  CHECK(sw.opcode == Opcode::STORE);
  CHECK(sw.src1 == 1);
  CHECK(sw.src2 == 2);
  CHECK(sw.imm == 4);

  auto lw = only(one_thread("lw r7, -8(r30)\n"));
  CHECK(lw.opcode == Opcode::LOAD);
  CHECK(lw.dest == 7);
  CHECK(lw.src1 == 30);
  CHECK(lw.imm == -8);
}

TEST_CASE("backward branch label resolves to a negative pc-relative offset") {
  auto p = one_thread("loop: addi r1, r1, -1\n bne r1, r0, loop\n halt\n");
  CHECK(only(p, 1).opcode == Opcode::BNE);
  CHECK(only(p, 1).imm == -1);
  CHECK(only(p, 1).pc == 1);
}

TEST_CASE("assembler rejects malformed input") {
  CHECK_THROWS_AS(one_thread("frob r1, r2, r3\n"), AssembleError);
  CHECK_THROWS_AS(one_thread("add r1, r2, r32\n"), AssembleError);
  CHECK_THROWS_AS(one_thread("beq r1, r2, nowhere\n"), AssembleError);
  CHECK_THROWS_AS(one_thread("a: add r1, r1, r1\na: halt\n"), AssembleError);
  CHECK_THROWS_AS(one_thread("a: b: halt\n"), AssembleError);
  CHECK_THROWS_AS(one_thread("addi r1, r0, 40000\n"), AssembleError);
  CHECK_THROWS_AS(one_thread("addi r1, r0, -32769\n"), AssembleError);
  CHECK_NOTHROW(one_thread("addi r1, r0, -32768\n"));
  CHECK_THROWS_AS(assemble(".data 6 1\n"), AssembleError);
  CHECK_THROWS_AS(assemble(".thread 1\nhalt\n"), AssembleError);
  try {
    one_thread("add r1, r2, r3\nbogus\n");
    FAIL("expected an error");
  } catch (const AssembleError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("data directive and symbols") {
  auto p = assemble(".data x 256 7\n.data 260 -3\n.thread 0\n lw r1, x(r0)\n halt\n");
  CHECK(p.data.at(256) == 7);
  CHECK(p.data.at(260) == -3);
  CHECK(p.symbols.at("x") == 256u);
  CHECK(only(p).imm == 256);
}

TEST_CASE("canonical text round-trips") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto p = assemble(testgen::random_program(seed));
    CHECK(assemble(to_text(p)) == p);
  }
  auto two = assemble(".data a 64 1\n.thread 0\n sw r1, 0(r2)\n fence\n halt\n.thread 1\n jal r31, 1\n jr r31\n");
  CHECK(assemble(to_text(two)) == two);
}

TEST_CASE("functional_step semantics") {
  auto p = one_thread("add r1, r2, r3\n add r0, r2, r3\n lw r4, 512(r0)\n halt\n");
  auto s = ArchState::initial(p);
  s.threads[0].regs[2] = 2;
  s.threads[0].regs[3] = 3;
  s = functional_step(s, p, 0);
  CHECK(s.threads[0].regs[1] == 5);
  s = functional_step(s, p, 0);
  CHECK(s.threads[0].regs[0] == 0);
  s.threads[0].regs[4] = 99;
  s = functional_step(s, p, 0);
  CHECK(s.threads[0].regs[4] == 0);  // never-written memory reads zero
  CHECK(s.threads[0].pc == 3);
}

TEST_CASE("functional_step errors") {
  auto p = one_thread("lw r1, 2(r0)\n");
  CHECK_THROWS_AS(functional_step(ArchState::initial(p), p, 0), ExecError);
  auto q = one_thread("add r1, r1, r1\n");
  auto s = functional_step(ArchState::initial(q), q, 0);
  CHECK_THROWS_AS(functional_step(s, q, 0), ExecError);
}

TEST_CASE("wrapping arithmetic") {
  auto p = one_thread("mul r3, r1, r1\n add r4, r2, r2\n slt r5, r2, r1\n halt\n");
  auto s = ArchState::initial(p);
  s.threads[0].regs[1] = 0x10000;
  s.threads[0].regs[2] = INT32_MAX;
  for (int i = 0; i < 3; ++i) s = functional_step(s, p, 0);
  CHECK(s.threads[0].regs[3] == 0);
  CHECK(s.threads[0].regs[4] == -2);
  CHECK(s.threads[0].regs[5] == 0);
}

TEST_CASE("functional_run") {
  SUBCASE("immediate halt") {
    auto r = functional_run(one_thread("halt\n"), 10);
    CHECK(r.status == RunStatus::Halted);
    CHECK(r.retired == 1);
    CHECK(r.state.normalized_memory().empty());
  }
  SUBCASE("sum 1..10") {
    auto r = functional_run(one_thread(R"(
      addi r1, r0, 10
loop: add r5, r5, r1
      addi r1, r1, -1
      bne r1, r0, loop
      halt
)"),
                            1000);
    CHECK(r.status == RunStatus::Halted);
    CHECK(r.state.threads[0].regs[5] == 55);
    CHECK(r.retired == 1 + 3 * 10 + 1);
  }
  SUBCASE("budget exhausted") {
    auto r = functional_run(one_thread("spin: beq r0, r0, spin\n"), 1000);
    CHECK(r.status == RunStatus::BudgetExhausted);
    CHECK(r.retired == 1000);
  }
  SUBCASE("jal and jr") {
    auto r = functional_run(one_thread("jal r31, 3\n halt\n halt\n addi r2, r0, 9\n jr r31\n"), 100);
    CHECK(r.status == RunStatus::Halted);
    CHECK(r.state.threads[0].regs[2] == 9);
    CHECK(r.state.threads[0].pc == 1);
  }
  SUBCASE("trap") {
    auto r = functional_run(one_thread("addi r1, r0, 3\n sw r1, 0(r1)\n halt\n"), 100);
    CHECK(r.status == RunStatus::Trap);
    CHECK(r.retired == 1);
  }
  SUBCASE("multi-thread programs are rejected") {
    CHECK_THROWS_AS(functional_run(assemble(".thread 0\nhalt\n.thread 1\nhalt\n"), 10), Error);
  }
}

TEST_CASE("determinism and r0 over random programs") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto p = assemble(testgen::random_program(seed));
    auto a = functional_run(p, 100000, true);
    auto b = functional_run(p, 100000, true);
    REQUIRE(a.status == RunStatus::Halted);
    CHECK(a.state.equivalent(b.state));
    CHECK(a.trace == b.trace);
    CHECK(a.state.threads[0].regs[0] == 0);
  }
}
