#pragma once

#include <string>
#include <vector>

#include "mcsim/consistency.hpp"
#include "mcsim/core.hpp"
#include "mcsim/memhier.hpp"

namespace mcsim::sim {

struct SystemConfig {
  core::CoreConfig core;
  memhier::MemConfig mem;
  consistency::Model model = consistency::Model::TSO;
  int max_drain_delay = 0;  // random extra cycles before each store-buffer drain
  int max_start_delay = 0;  // random cycles before each core starts fetching
  std::uint64_t seed = 1;
  Cycle budget = 10'000'000;
  bool record_trace = false;
};

struct SystemResult {
  ArchState state;  // memory is the coherent snapshot
  std::vector<core::CoreStats> cores;
  memhier::MemStats mem;
  Cycle cycles = 0;
  RunStatus status = RunStatus::Halted;
  std::string reason;  // trap or budget description
  std::vector<std::vector<CommitRecord>> traces;
};

/// Runs one core per program thread against a shared memory system until
/// every core has halted or trapped, every store buffer has drained and the
/// memory system is quiescent.
SystemResult run_system(const Program& program, const SystemConfig& config);

/// One timing run of a litmus test.
consistency::Outcome simulate_litmus(const consistency::LitmusTest& test, const SystemConfig& config);

}  // namespace mcsim::sim
