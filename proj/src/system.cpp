#include "mcsim/system.hpp"

#include <memory>

#include "mcsim/rng.hpp"

namespace mcsim::sim {

SystemResult run_system(const Program& program, const SystemConfig& config) {
  const int n = static_cast<int>(program.threads.size());
  if (n == 0) throw Error("program has no threads");
  config.core.validate();
  config.mem.validate(n);
  if (config.max_drain_delay < 0 || config.max_start_delay < 0) throw Error("random delays must be >= 0");

  auto mem = memhier::make_memory_system(config.mem, n, program.data);
  std::vector<std::unique_ptr<core::CorePort>> ports;
  std::vector<std::unique_ptr<core::Core>> cores;
  std::vector<Cycle> start;
  auto rng = SeedTree(config.seed).stream("start");
  for (int i = 0; i < n; ++i) {
    ports.push_back(std::make_unique<core::CorePort>(i, *mem, config.model,
                                                     static_cast<std::size_t>(config.core.store_buffer),
                                                     config.max_drain_delay, config.seed));
    cores.push_back(std::make_unique<core::Core>(i, program, i, config.core, *ports.back(), config.record_trace));
    start.push_back(draw_below(rng, static_cast<std::uint64_t>(config.max_start_delay) + 1));
  }

  SystemResult res;
  auto all_done = [&] {
    for (const auto& c : cores)
      if (!c->done()) return false;
    return true;
  };
  Cycle now = 0;
  while (!all_done() || !mem->quiescent()) {
    if (now >= config.budget) {
      res.status = RunStatus::BudgetExhausted;
      res.reason = "cycle budget of " + std::to_string(config.budget) + " exhausted";
      break;
    }
    ++now;
    mem->tick(now);
    for (int i = 0; i < n; ++i)
      if (now > start[static_cast<std::size_t>(i)]) cores[static_cast<std::size_t>(i)]->cycle(now);
  }
  res.cycles = now;
  for (int i = 0; i < n; ++i) {
    const auto& c = *cores[static_cast<std::size_t>(i)];
    if (res.status != RunStatus::BudgetExhausted && c.status() == core::CoreStatus::Trapped) {
      res.status = RunStatus::Trap;
      if (res.reason.empty()) res.reason = "core " + std::to_string(i) + ": " + c.trap_reason();
    }
    res.state.threads.push_back(c.arch_state());
    res.cores.push_back(c.stats());
    res.traces.push_back(c.trace());
  }
  res.state.memory = mem->snapshot();
  res.mem = mem->stats();
  return res;
}

consistency::Outcome simulate_litmus(const consistency::LitmusTest& test, const SystemConfig& config) {
  auto r = run_system(test.program, config);
  if (r.status != RunStatus::Halted) throw Error("litmus test " + test.name + " did not finish: " + r.reason);
  return consistency::outcome_of(test, r.state);
}

}  // namespace mcsim::sim
