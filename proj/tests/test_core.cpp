#include <sstream>

#include "doctest.h"
#include "mcsim/core.hpp"
#include "program_gen.hpp"

using namespace mcsim;
using namespace mcsim::core;
using memhier::MemConfig;
using memhier::MemKind;

namespace {

MemConfig mem_of(MemKind kind) {
  MemConfig c;
  c.kind = kind;
  c.topo_cols = 1;
  c.topo_rows = 1;
  return c;
}

CoreResult run(const Program& p, const CoreConfig& cfg, MemKind kind = MemKind::Perfect, bool trace = true) {
  auto mem = memhier::make_memory_system(mem_of(kind), 1, p.data);
  return run_core(p, cfg, *mem, 5'000'000, trace);
}

void check_against_golden(const Program& p, const CoreResult& r) {
  auto g = functional_run(p, 5'000'000, true);
  REQUIRE(g.status != RunStatus::BudgetExhausted);
  CHECK(r.status == g.status);
  CHECK(r.state.threads.at(0) == g.state.threads.at(0));
  CHECK(r.state.normalized_memory() == g.state.normalized_memory());
  CHECK(r.stats.retired == g.retired);
  CHECK(r.trace.size() == g.trace.size());
  CHECK(r.trace == g.trace);
}

DecodedInstruction inst(Opcode op, int d, int s1, int s2, Word imm = 0) {
  DecodedInstruction i;
  i.opcode = op;
  i.dest = d;
  i.src1 = s1;
  i.src2 = s2;
  i.imm = imm;
  return i;
}

std::string straight_adds(int n, bool dependent) {
  std::ostringstream o;
  o << ".thread 0\n";
  for (int i = 0; i < n; ++i) {
    if (dependent)
      o << "  addi r1, r1, 1\n";
    else
      o << "  add r" << 1 + i % 20 << ", r21, r22\n";
  }
  o << "  halt\n";
  return o.str();
}

}  // namespace

TEST_CASE("rename: closest earlier destination wins inside a group") {
  RenameState rs(64);
  const std::vector<DecodedInstruction> g{inst(Opcode::ADD, 1, 2, 3), inst(Opcode::ADD, 4, 1, 1),
                                          inst(Opcode::ADD, 1, 4, 1), inst(Opcode::STORE, 0, 1, 4)};
  auto r = rename_group(rs, g);
  REQUIRE(r);
  const auto& o = *r;
  CHECK(o[0].src1 == 2);
  CHECK(o[0].src2 == 3);
  CHECK(o[0].prev == 1);
  CHECK(o[1].src1 == o[0].dest);
  CHECK(o[1].src2 == o[0].dest);
  CHECK(o[2].src1 == o[1].dest);
  CHECK(o[2].src2 == o[0].dest);
  CHECK(o[2].prev == o[0].dest);
  CHECK(o[3].dest == -1);
  CHECK(o[3].src1 == o[2].dest);
  CHECK(o[3].src2 == o[1].dest);
  CHECK(rs.table[1] == o[2].dest);
  CHECK(rs.table[4] == o[1].dest);
  CHECK(rs.free_list.size() == 64 - 32 - 3);
  CHECK(rs.ready[static_cast<std::size_t>(o[2].dest)] == 0);

  // r0 is never renamed.
  auto z = rename_group(rs, {inst(Opcode::ADD, 0, 1, 1)});
  REQUIRE(z);
  CHECK(z->at(0).dest == -1);
}

TEST_CASE("rename: a short free list stalls the whole group") {
  RenameState rs(34);
  const auto before = rs.table;
  const auto free_before = rs.free_list;
  CHECK_FALSE(rename_group(rs, {inst(Opcode::ADD, 1, 0, 0), inst(Opcode::ADD, 2, 0, 0), inst(Opcode::ADD, 3, 0, 0)}));
  CHECK(rs.table == before);
  CHECK(rs.free_list == free_before);
  CHECK(rename_group(rs, {inst(Opcode::ADD, 1, 0, 0), inst(Opcode::ADD, 2, 0, 0)}));
  CHECK(rs.free_list.empty());
}

TEST_CASE("select: oldest first within unit limits") {
  std::vector<IqEntry> iq(5);
  for (std::size_t i = 0; i < iq.size(); ++i) iq[i].seq = i + 1;
  iq[0].fu = FuClass::Mul;
  iq[1].fu = FuClass::Mul;
  iq[2].ready1 = false;
  iq[3].fu = FuClass::Load;
  auto picks = select_issue(iq, {4, 1, 2, 1}, 4, false);
  CHECK(picks == std::vector<std::size_t>{0, 3, 4});
  CHECK(select_issue(iq, {4, 1, 2, 1}, 2, false) == std::vector<std::size_t>{0, 3});
  // In order: stops at the second MUL.
  CHECK(select_issue(iq, {4, 1, 2, 1}, 4, true) == std::vector<std::size_t>{0});
  iq[1].fu = FuClass::Alu;
  CHECK(select_issue(iq, {4, 1, 2, 1}, 4, true) == std::vector<std::size_t>{0, 1});
  wakeup(iq, iq[2].src1);
  CHECK(iq[2].ready1);
}

TEST_CASE("LSQ forwarding and violations") {
  std::deque<LsqEntry> lsq(3);
  lsq[0] = {1, true, 0, true, 0x100, 5, false, 0};
  lsq[1] = {2, true, 1, false, 0, 0, false, 0};
  lsq[2] = {3, false, 2, true, 0x100, 0, false, 0};

  auto d = lsq_resolve(lsq, 2, false);
  CHECK(d.kind == LsqDecision::Forward);
  CHECK(d.value == 5);
  CHECK(d.from == 1);
  CHECK(lsq_resolve(lsq, 2, true).kind == LsqDecision::Stall);
  lsq[2].addr = 0x140;
  CHECK(lsq_resolve(lsq, 2, false).kind == LsqDecision::Access);

  // The load went to memory; then the unknown store resolves to its address.
  lsq[2].issued = true;
  lsq[1].addr_valid = true;
  lsq[1].addr = 0x140;
  CHECK(lsq_violations(lsq, 1) == std::vector<std::uint64_t>{3});
  // A load that forwarded from a younger store than the resolving one is fine.
  lsq[2].fwd_from = 2;
  CHECK(lsq_violations(lsq, 1).empty());
  lsq[2].fwd_from = 0;
  lsq[1].addr = 0x180;
  CHECK(lsq_violations(lsq, 1).empty());
}

TEST_CASE("config validation") {
  CoreConfig c;
  CHECK_NOTHROW(c.validate());
  c.width = 1;
  try {
    c.validate();
    FAIL("width 1 accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("superscalar width between 2 and 8") != std::string::npos);
  }
  c.allow_unrealistic = true;
  CHECK_NOTHROW(c.validate());
  c = CoreConfig{};
  c.frontend_depth = 40;
  CHECK_THROWS_AS(c.validate(), Error);
  c = CoreConfig{};
  c.phys_regs = 32;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("random programs match the golden model") {
  std::vector<std::pair<const char*, CoreConfig>> configs;
  configs.emplace_back("default", CoreConfig{});
  CoreConfig narrow;
  narrow.width = 2;
  narrow.in_order = true;
  narrow.frontend_depth = 3;
  configs.emplace_back("in-order", narrow);
  CoreConfig cons;
  cons.memdep = MemDepMode::Conservative;
  configs.emplace_back("conservative", cons);
  CoreConfig cramped;
  cramped.rob_size = 8;
  cramped.iq_size = 4;
  cramped.lsq_size = 3;
  cramped.phys_regs = 36;
  cramped.store_buffer = 1;
  configs.emplace_back("cramped", cramped);
  CoreConfig wide;
  wide.width = 8;
  wide.mul = {2, 5};
  wide.load = {3, 2};
  wide.predictor.kind = bpred::PredictorKind::StaticNotTaken;
  configs.emplace_back("wide", wide);

  int runs = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto p = assemble(testgen::random_program(seed));
    for (const auto& [name, cfg] : configs) {
      for (auto kind : {MemKind::Perfect, MemKind::Snoopy, MemKind::Directory}) {
        CAPTURE(seed);
        CAPTURE(name);
        CAPTURE(memhier::to_string(kind));
        auto r = run(p, cfg, kind);
        check_against_golden(p, r);
        CHECK(r.stats.ipc() <= cfg.width);
        if (cfg.memdep == MemDepMode::Conservative) CHECK(r.stats.squash_memdep == 0);
        ++runs;
      }
    }
  }
  CHECK(runs >= 100);
}

TEST_CASE("renaming invariants hold every cycle") {
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    CAPTURE(seed);
    const auto p = assemble(testgen::random_program(seed));
    auto mem = memhier::make_memory_system(mem_of(MemKind::Snoopy), 1, p.data);
    CoreConfig cfg;
    cfg.phys_regs = 48;
    CorePort port(0, *mem, consistency::Model::TSO, 8, 0, 0);
    Core core(0, p, 0, cfg, port);
    Cycle now = 0;
    std::optional<std::string> bad;
    while (!core.done() && now < 1'000'000 && !bad) {
      ++now;
      mem->tick(now);
      core.cycle(now);
      bad = core.check_invariants();
    }
    CHECK_FALSE(bad);
    CHECK(core.status() == CoreStatus::Halted);
  }
}

TEST_CASE("a speculative load that bypasses an aliasing store is replayed") {
  // The store address waits on a MUL chain; the load behind it reads the
  // same word early and must be squashed.
  const auto p = assemble(R"(
.data x 0x100 7
.thread 0
  addi r1, r0, 1
  addi r2, r0, 0x100
  mul r3, r2, r1
  mul r3, r3, r1
  mul r3, r3, r1
  addi r4, r0, 42
  sw r4, 0(r3)
  lw r5, 0x100(r0)
  add r6, r5, r5
  halt
)");
  CoreConfig spec;
  spec.mul = {1, 6};
  auto r = run(p, spec);
  check_against_golden(p, r);
  CHECK(r.stats.squash_memdep == 1);
  CHECK(r.state.threads[0].regs[6] == 84);

  CoreConfig cons = spec;
  cons.memdep = MemDepMode::Conservative;
  auto c = run(p, cons);
  check_against_golden(p, c);
  CHECK(c.stats.squash_memdep == 0);
}

TEST_CASE("the head blocks commit while younger work completes") {
  const auto p = assemble(".thread 0\n addi r1, r0, 3\n mul r2, r1, r1\n addi r3, r0, 1\n addi r4, r0, 2\n halt\n");
  auto mem = memhier::make_memory_system(mem_of(MemKind::Perfect), 1, p.data);
  CoreConfig cfg;
  cfg.mul = {1, 30};
  cfg.frontend_depth = 3;
  CorePort port(0, *mem, consistency::Model::TSO, 8, 0, 0);
  Core core(0, p, 0, cfg, port);
  for (Cycle now = 1; now <= 20; ++now) {
    mem->tick(now);
    core.cycle(now);
  }
  CHECK(core.stats().retired == 1);
  CHECK(core.rob_seqs().size() == 4);
  CHECK(core.arch_state().regs[3] == 0);
  Cycle now = 20;
  while (!core.done()) {
    ++now;
    mem->tick(now);
    core.cycle(now);
  }
  CHECK(core.arch_state().regs[2] == 9);
  CHECK(core.arch_state().regs[3] == 1);
}

TEST_CASE("squash restores the committed mapping") {
  const auto p = assemble(testgen::random_program(7, 80));
  auto golden_after = [&](std::uint64_t n) { return functional_run(p, n).state.threads[0]; };

  for (Cycle stop : {Cycle{15}, Cycle{30}, Cycle{45}}) {
    CAPTURE(stop);
    auto mem = memhier::make_memory_system(mem_of(MemKind::Perfect), 1, p.data);
    CorePort port(0, *mem, consistency::Model::TSO, 8, 0, 0);
    CoreConfig cfg;
    cfg.frontend_depth = 3;
    Core core(0, p, 0, cfg, port);
    Cycle now = 0;
    while (now < stop || (!core.oldest_seq() && !core.done())) {
      ++now;
      mem->tick(now);
      core.cycle(now);
    }
    REQUIRE(core.oldest_seq());
    const auto state = core.arch_state();
    core.squash(*core.oldest_seq() - 1, state.pc);
    CHECK(core.rob_seqs().empty());
    CHECK(core.iq_seqs().empty());
    CHECK(core.lsq_seqs().empty());
    CHECK(core.rename_state().free_list.size() == static_cast<std::size_t>(cfg.phys_regs - kNumLogicalRegs));
    CHECK_FALSE(core.check_invariants());
    CHECK(core.fetch_pc() == state.pc);
    auto g = golden_after(core.stats().retired);
    CHECK(core.arch_state().regs == g.regs);
    CHECK(core.arch_state().pc == g.pc);

    // Resumes to the same final state. Committed stores may still be buffered.
    while (!core.done()) {
      ++now;
      mem->tick(now);
      core.cycle(now);
    }
    CHECK(core.arch_state() == functional_run(p, 1'000'000).state.threads[0]);
  }
}

TEST_CASE("two squashes equal one at the older point") {
  // A slow MUL at the head lets the ROB fill up.
  const auto p = assemble(".thread 0\n mul r23, r21, r22\n" + straight_adds(200, false).substr(10));
  CoreConfig cfg;
  cfg.mul = {1, 40};
  auto make = [&](Cycle cycles, auto& mem, auto& port) {
    auto core = std::make_unique<Core>(0, p, 0, cfg, *port);
    for (Cycle now = 1; now <= cycles; ++now) {
      mem->tick(now);
      core->cycle(now);
    }
    return core;
  };
  auto mem_a = memhier::make_memory_system(mem_of(MemKind::Perfect), 1, p.data);
  auto port_a = std::make_unique<CorePort>(0, *mem_a, consistency::Model::TSO, 8, 0, 0);
  auto mem_b = memhier::make_memory_system(mem_of(MemKind::Perfect), 1, p.data);
  auto port_b = std::make_unique<CorePort>(0, *mem_b, consistency::Model::TSO, 8, 0, 0);
  auto a = make(22, mem_a, port_a);
  auto b = make(22, mem_b, port_b);
  const auto seqs = a->rob_seqs();
  REQUIRE(seqs.size() > 8);
  const auto older = seqs[2], younger = seqs[6];
  a->squash(younger, 50);
  a->squash(older, 10);
  b->squash(older, 10);
  CHECK(a->rob_seqs() == b->rob_seqs());
  CHECK(a->iq_seqs() == b->iq_seqs());
  CHECK(a->rename_state().table == b->rename_state().table);
  CHECK(a->rename_state().free_list == b->rename_state().free_list);
  CHECK(a->fetch_pc() == 10);
  CHECK_FALSE(a->check_invariants());
}

TEST_CASE("IPC bounds") {
  CoreConfig cfg;
  const auto indep = assemble(straight_adds(10000, false));
  auto r = run(indep, cfg, MemKind::Perfect, false);
  CHECK(r.status == RunStatus::Halted);
  CHECK(r.stats.ipc() >= 3.5);
  CHECK(r.stats.ipc() <= 4.0);

  const auto chain = assemble(straight_adds(1000, true));
  auto c = run(chain, cfg, MemKind::Perfect, false);
  CHECK(c.state.threads[0].regs[1] == 1000);
  CHECK(c.stats.ipc() <= 1.0);
  CHECK(c.stats.ipc() > 0.9);

  for (int w : {2, 3, 6, 8}) {
    cfg.width = w;
    cfg.alu.count = w;
    auto x = run(indep, cfg, MemKind::Perfect, false);
    CAPTURE(w);
    CHECK(x.stats.ipc() <= w);
    CHECK(x.stats.ipc() >= 0.875 * w);
  }
}

TEST_CASE("instruction cache misses insert fetch bubbles") {
  const auto p = assemble(straight_adds(600, false));
  auto perfect = run(p, CoreConfig{}, MemKind::Perfect, false);
  auto cached = run(p, CoreConfig{}, MemKind::Snoopy, false);
  CHECK(perfect.stats.icache_stall_cycles == 0);
  CHECK(cached.stats.icache_stall_cycles > 0);
  // 600 instructions span 38 blocks of 64 bytes, each a cold miss.
  CHECK(cached.stats.cycles > perfect.stats.cycles + 38 * 50);
}

TEST_CASE("traps match the golden model") {
  const char* programs[] = {
      ".thread 0\n addi r1, r0, 6\n addi r2, r0, 9\n lw r3, 0(r1)\n addi r2, r0, 1\n halt\n",
      ".thread 0\n addi r1, r0, 2\n sw r1, 1(r0)\n halt\n",
      ".thread 0\n addi r1, r0, 77\n jr r1\n halt\n",
      ".thread 0\n addi r1, r0, 1\n addi r2, r0, 2\n",
  };
  for (const char* src : programs) {
    CAPTURE(src);
    const auto p = assemble(src);
    for (auto kind : {MemKind::Perfect, MemKind::Directory}) {
      auto r = run(p, CoreConfig{}, kind);
      check_against_golden(p, r);
      CHECK(r.status == RunStatus::Trap);
      CHECK_FALSE(r.trap_reason.empty());
    }
  }
}

TEST_CASE("branch statistics") {
  const auto p = assemble(R"(
.thread 0
  addi r1, r0, 200
loop:
  addi r2, r2, 3
  addi r1, r1, -1
  bne r1, r0, loop
  halt
)");
  CoreConfig hybrid;
  CoreConfig snt;
  snt.predictor.kind = bpred::PredictorKind::StaticNotTaken;
  auto h = run(p, hybrid);
  auto s = run(p, snt);
  check_against_golden(p, h);
  check_against_golden(p, s);
  CHECK(h.stats.cond_branches == 200);
  CHECK(s.stats.cond_mispredicts == 199);
  CHECK(h.stats.cond_mispredicts <= 5);
  CHECK(s.stats.cycles > h.stats.cycles + 199 * 8);
}
