#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mcsim/system.hpp"
#include "program_gen.hpp"

using namespace mcsim;
using namespace mcsim::sim;
using consistency::Model;
using memhier::MemKind;

namespace {

std::string load_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<consistency::LitmusTest> corpus() {
  std::vector<consistency::LitmusTest> out;
  for (const auto& e : std::filesystem::directory_iterator(std::filesystem::path(MCSIM_SOURCE_DIR) / "litmus"))
    if (e.path().extension() == ".litmus") out.push_back(consistency::parse_litmus(load_file(e.path()), e.path().stem()));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

SystemConfig litmus_config(MemKind kind, Model model, std::uint64_t seed) {
  SystemConfig c;
  c.mem.kind = kind;
  c.model = model;
  c.seed = seed;
  c.max_start_delay = 30;
  c.max_drain_delay = 20;
  return c;
}

// Thread t of a race-free program: a random program relocated to its own
// 4 KiB data window.
Program relocated(std::uint64_t seed, int t) {
  auto p = assemble(testgen::random_program(seed));
  const Addr shift = static_cast<Addr>(t) * 4096;
  p.threads[0].code[0].imm += static_cast<Word>(shift);  // addi r30, r0, 4096
  std::map<Addr, Word> data;
  for (auto [a, v] : p.data) data[a + shift] = v;
  p.data = data;
  p.symbols.clear();
  return p;
}

}  // namespace

TEST_CASE("race-free threads match independent golden runs") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    for (auto kind : {MemKind::Perfect, MemKind::Snoopy, MemKind::Directory}) {
      CAPTURE(seed);
      CAPTURE(memhier::to_string(kind));
      Program merged;
      std::map<Addr, Word> expect_mem;
      std::vector<ThreadState> expect_threads;
      for (int t = 0; t < 4; ++t) {
        auto part = relocated(seed * 10 + static_cast<std::uint64_t>(t), t);
        merged.threads.push_back(part.threads[0]);
        merged.data.insert(part.data.begin(), part.data.end());
        auto g = functional_run(part, 1'000'000);
        REQUIRE(g.status == RunStatus::Halted);
        expect_threads.push_back(g.state.threads[0]);
        for (auto [a, v] : g.state.normalized_memory()) expect_mem[a] = v;
      }
      SystemConfig cfg;
      cfg.mem.kind = kind;
      cfg.seed = seed;
      cfg.max_start_delay = 50;
      cfg.max_drain_delay = 5;
      auto r = run_system(merged, cfg);
      CHECK(r.status == RunStatus::Halted);
      CHECK(r.state.threads == expect_threads);
      CHECK(r.state.normalized_memory() == expect_mem);
      CHECK(r.mem.get("swmr_violations") == 0);
      CHECK(r.mem.get("data_value_violations") == 0);
    }
  }
}

TEST_CASE("simulated litmus outcomes are allowed by the model") {
  const auto tests = corpus();
  REQUIRE(tests.size() >= 12);
  for (const auto& t : tests) {
    for (auto model : {Model::SC, Model::TSO}) {
      const auto allowed = consistency::enumerate(t, model);
      for (auto kind : {MemKind::Perfect, MemKind::Snoopy, MemKind::Directory}) {
        for (std::uint64_t seed = 1; seed <= 25; ++seed) {
          auto o = simulate_litmus(t, litmus_config(kind, model, seed));
          if (!allowed.count(o)) {
            CAPTURE(t.name);
            CAPTURE(consistency::to_string(model));
            CAPTURE(memhier::to_string(kind));
            CAPTURE(seed);
            FAIL("disallowed outcome " << consistency::format_outcome(o));
          }
        }
      }
    }
  }
}

TEST_CASE("store buffering shows up under TSO only") {
  const auto t = consistency::parse_litmus(load_file(std::filesystem::path(MCSIM_SOURCE_DIR) / "litmus/sb.litmus"), "sb");
  const consistency::Outcome both_zero{{"0:r1", 0}, {"1:r1", 0}};
  auto matches = [&](const consistency::Outcome& o) { return o.at("0:r1") == 0 && o.at("1:r1") == 0; };
  int tso = 0, sc = 0;
  for (auto kind : {MemKind::Perfect, MemKind::Snoopy, MemKind::Directory})
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      tso += matches(simulate_litmus(t, litmus_config(kind, Model::TSO, seed)));
      sc += matches(simulate_litmus(t, litmus_config(kind, Model::SC, seed)));
    }
  CHECK(tso > 0);
  CHECK(sc == 0);
  CHECK(consistency::check_outcome(both_zero, Model::TSO, t));
}

TEST_CASE("runs are deterministic per seed") {
  const auto t = consistency::parse_litmus(load_file(std::filesystem::path(MCSIM_SOURCE_DIR) / "litmus/iriw.litmus"), "iriw");
  auto cfg = litmus_config(MemKind::Directory, Model::TSO, 99);
  auto a = run_system(t.program, cfg);
  auto b = run_system(t.program, cfg);
  CHECK(a.cycles == b.cycles);
  CHECK(a.state.threads == b.state.threads);
  CHECK(a.mem.counters == b.mem.counters);
}

TEST_CASE("a trapping core ends the run with a trap") {
  auto p = assemble(".thread 0\n addi r1, r0, 3\n lw r2, 0(r1)\n halt\n.thread 1\n addi r1, r0, 5\n halt\n");
  auto r = run_system(p, SystemConfig{});
  CHECK(r.status == RunStatus::Trap);
  CHECK(r.reason.find("core 0") == 0);
  CHECK(r.state.threads[1].regs[1] == 5);
  CHECK(r.state.threads[1].halted);
}

TEST_CASE("budget exhaustion is reported") {
  auto p = assemble(".thread 0\nspin:\n beq r0, r0, spin\n");
  SystemConfig cfg;
  cfg.budget = 500;
  auto r = run_system(p, cfg);
  CHECK(r.status == RunStatus::BudgetExhausted);
  CHECK(r.cycles == 500);
}
