#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mcsim/bpred.hpp"
#include "mcsim/consistency.hpp"
#include "mcsim/isa.hpp"
#include "mcsim/memhier.hpp"

namespace mcsim::core {

enum class FuClass : std::uint8_t { Alu, Mul, Load, Store, None };
inline constexpr int kFuClasses = 4;

struct FuSpec {
  int count = 1;
  int latency = 1;
};

enum class MemDepMode { Conservative, Speculative };

std::string_view to_string(MemDepMode m);
MemDepMode parse_memdep_mode(std::string_view s);

struct CoreConfig {
  int width = 4;
  int frontend_depth = 10;  // fetch-to-issue stages
  int iq_size = 32;
  int rob_size = 64;
  int lsq_size = 32;
  int phys_regs = 128;
  FuSpec alu{4, 1};
  FuSpec mul{1, 3};
  FuSpec load{2, 1};   // address generation; the cache adds its own latency
  FuSpec store{1, 1};
  bool in_order = false;
  MemDepMode memdep = MemDepMode::Speculative;
  bpred::PredictorConfig predictor;
  int store_buffer = 8;
  bool allow_unrealistic = false;  // lifts the 2..8 width rule

  /// Front end plus one execute and one commit stage.
  int pipeline_depth() const { return frontend_depth + 2; }
  const FuSpec& fu(FuClass c) const;
  void validate() const;
};

FuClass fu_class(Opcode op);

// ---------------------------------------------------------------------------
// Renaming
// ---------------------------------------------------------------------------

struct RenameState {
  std::array<int, kNumLogicalRegs> table{};
  std::deque<int> free_list;
  std::vector<Word> values;
  std::vector<std::uint8_t> ready;

  /// Identity mapping r_i -> p_i with everything else free and p_0 pinned to zero.
  explicit RenameState(int phys_regs = 128);
};

struct RenamedOperands {
  int src1 = 0;
  int src2 = 0;
  int dest = -1;  // -1: writes no register
  int prev = -1;  // mapping replaced by dest
};

/// Renames a group in program order. Sources read the table, then are
/// overridden by the closest earlier destination in the group. Returns
/// nullopt, leaving the state untouched, when the free list is too short.
std::optional<std::vector<RenamedOperands>> rename_group(RenameState& rs,
                                                         const std::vector<DecodedInstruction>& group);

// ---------------------------------------------------------------------------
// Issue
// ---------------------------------------------------------------------------

struct IqEntry {
  std::uint64_t seq = 0;
  FuClass fu = FuClass::Alu;
  int src1 = 0;
  int src2 = 0;
  bool ready1 = true;
  bool ready2 = true;
  int dest = -1;
};

/// Sets the ready bits of every entry waiting on `tag`.
void wakeup(std::vector<IqEntry>& iq, int tag);

/// Indices (into the age-ordered `iq`) of the entries issued this cycle:
/// oldest first, at most `width`, within the free units of each class. In
/// in-order mode only the `width` oldest entries are considered and
/// selection stops at the first one that cannot go.
std::vector<std::size_t> select_issue(const std::vector<IqEntry>& iq, std::array<int, kFuClasses> free_units,
                                      int width, bool in_order);

// ---------------------------------------------------------------------------
// Load/store queue
// ---------------------------------------------------------------------------

struct LsqEntry {
  std::uint64_t seq = 0;
  bool is_store = false;
  std::uint32_t pc = 0;
  bool addr_valid = false;
  Addr addr = 0;
  Word data = 0;
  bool issued = false;           // load: value obtained or access started
  std::uint64_t fwd_from = 0;    // load: seq of the forwarding store, 0 if none
};

struct LsqDecision {
  enum Kind { Forward, Access, Stall } kind = Stall;
  Word value = 0;
  std::uint64_t from = 0;
};

/// Decides how the load at `index` (address known) obtains its value.
/// `hold` makes the load wait for every older store address, as in
/// conservative mode or when the dependence predictor flags the load.
LsqDecision lsq_resolve(const std::deque<LsqEntry>& lsq, std::size_t index, bool hold);

/// Younger loads already issued to the same address without seeing the
/// store at `index`; oldest first.
std::vector<std::uint64_t> lsq_violations(const std::deque<LsqEntry>& lsq, std::size_t index);

// ---------------------------------------------------------------------------
// Store buffer port
// ---------------------------------------------------------------------------

/// A core's connection to the memory system: its store buffer plus the drain
/// engine that writes buffered stores back one at a time, in order.
class CorePort {
 public:
  CorePort(CoreId core, memhier::MemorySystem& mem, consistency::Model model, std::size_t capacity,
           int max_drain_delay, std::uint64_t seed);

  void tick(Cycle now);
  bool drained() const { return sb_.empty() && !inflight_; }

  consistency::StoreBuffer& buffer() { return sb_; }
  const consistency::StoreBuffer& buffer() const { return sb_; }
  consistency::Model model() const { return model_; }
  memhier::MemorySystem& mem() { return *mem_; }
  CoreId core() const { return core_; }

 private:
  CoreId core_;
  memhier::MemorySystem* mem_;
  consistency::Model model_;
  consistency::StoreBuffer sb_;
  int max_delay_;
  std::mt19937_64 rng_;
  std::optional<memhier::ReqId> inflight_;
  std::optional<Cycle> drain_at_;
};

// ---------------------------------------------------------------------------
// Core
// ---------------------------------------------------------------------------

struct CoreStats {
  std::uint64_t cycles = 0;
  std::uint64_t retired = 0;
  std::uint64_t fetched = 0;
  std::uint64_t squashed = 0;       // instructions thrown away
  std::uint64_t cond_branches = 0;  // committed
  std::uint64_t cond_mispredicts = 0;
  std::uint64_t control_mispredicts = 0;  // all recoveries from wrong-path fetch
  std::uint64_t squash_memdep = 0;
  std::uint64_t squash_memorder = 0;
  std::uint64_t loads = 0;
  std::uint64_t stores = 0;
  std::uint64_t forwarded_loads = 0;
  std::uint64_t icache_stall_cycles = 0;
  std::uint64_t rename_stalls = 0;    // cycles a ready group waited for registers
  std::uint64_t structure_stalls = 0; // cycles a ready group waited for ROB/IQ/LSQ space
  std::uint64_t commit_stalls_sb = 0; // cycles the head waited on the store buffer

  double ipc() const { return cycles ? static_cast<double>(retired) / static_cast<double>(cycles) : 0.0; }
  double branch_accuracy() const {
    return cond_branches ? 1.0 - static_cast<double>(cond_mispredicts) / static_cast<double>(cond_branches) : 0.0;
  }
};

enum class CoreStatus { Running, Halted, Trapped };

class Core {
 public:
  Core(CoreId id, const Program& program, int thread, const CoreConfig& config, CorePort& port,
       bool record_trace = false);

  /// Advances one cycle. The memory system must already have ticked.
  void cycle(Cycle now);

  CoreStatus status() const { return status_; }
  /// Halted or trapped, with every committed store written back.
  bool done() const { return status_ != CoreStatus::Running && port_->drained(); }
  const std::string& trap_reason() const { return trap_reason_; }

  /// Committed architectural registers and pc.
  ThreadState arch_state() const;
  const CoreStats& stats() const { return stats_; }
  const std::vector<CommitRecord>& trace() const { return trace_; }

  // Introspection and direct control, used by tests.
  const RenameState& rename_state() const { return rs_; }
  std::vector<std::uint64_t> rob_seqs() const;
  std::vector<std::uint64_t> iq_seqs() const;
  std::vector<std::uint64_t> lsq_seqs() const;
  std::uint32_t fetch_pc() const { return fetch_pc_; }
  std::optional<std::uint64_t> oldest_seq() const;
  /// Flushes everything younger than `seq` and refetches from `redirect`.
  void squash(std::uint64_t seq, std::uint32_t redirect);
  /// Renaming invariants; returns a description of the first violation.
  std::optional<std::string> check_invariants() const;

 private:
  struct FrontEntry {
    DecodedInstruction inst;
    Cycle ready = 0;
    bpred::FetchSlot slot;
  };
  struct RobEntry {
    std::uint64_t seq = 0;
    DecodedInstruction inst;
    RenamedOperands ops;
    bpred::FetchSlot slot;
    bool completed = false;
    bool exception = false;
    std::string reason;
    Word result = 0;
    std::uint32_t next_pc = 0;  // actual successor (control)
    bool taken = false;
    Addr addr = 0;
    Word store_value = 0;
    std::optional<memhier::ReqId> revalidate;
  };
  enum class EventKind { Complete, AddressReady };
  struct Event {
    std::uint64_t seq;
    EventKind kind;
  };

  RobEntry* find(std::uint64_t seq);
  LsqEntry* find_lsq(std::uint64_t seq);
  std::size_t lsq_index(std::uint64_t seq) const;

  void writeback(Cycle now);
  void complete(RobEntry& e, Cycle now);
  void address_ready(RobEntry& e, Cycle now);
  bool try_load(std::uint64_t seq, Cycle now);
  void commit(Cycle now);
  bool commit_load(RobEntry& e, Cycle now);
  void issue(Cycle now);
  void execute(RobEntry& e, Cycle now);
  void dispatch(Cycle now);
  void fetch(Cycle now);
  void finish_load(std::uint64_t seq, Word value, Cycle now);
  void trap(const std::string& reason, std::uint32_t pc);

  CoreId id_;
  const Program* program_;
  const ThreadCode* code_;
  CoreConfig cfg_;
  CorePort* port_;
  bool record_trace_;

  bpred::BranchPredictor predictor_;
  bpred::Btb btb_;
  std::vector<std::uint8_t> memdep_;  // 1-bit conflict flags by load pc

  RenameState rs_;
  std::deque<FrontEntry> front_;
  std::deque<RobEntry> rob_;
  std::vector<IqEntry> iq_;
  std::deque<LsqEntry> lsq_;
  std::multimap<Cycle, Event> events_;
  std::vector<std::uint64_t> waiting_loads_;
  std::vector<std::pair<std::uint64_t, memhier::ReqId>> inflight_loads_;

  std::uint64_t next_seq_ = 1;
  std::uint32_t fetch_pc_ = 0;
  Cycle fetch_resume_ = 0;
  bool fetch_stopped_ = false;  // halt fetched
  std::uint32_t committed_pc_ = 0;
  std::array<int, kNumLogicalRegs> committed_map_{};  // retirement rename table
  CoreStatus status_ = CoreStatus::Running;
  std::string trap_reason_;
  CoreStats stats_;
  std::vector<CommitRecord> trace_;
};

/// Instruction-memory address of `pc`, kept apart from the data segment.
inline Addr code_address(CoreId core, std::uint32_t pc) {
  return 0x40000000u + (static_cast<Addr>(core) << 24) + pc * kWordBytes;
}

struct CoreResult {
  ArchState state;
  CoreStats stats;
  RunStatus status = RunStatus::Halted;
  std::string trap_reason;
  std::vector<CommitRecord> trace;
};

/// Runs a single-thread program to completion on one core.
CoreResult run_core(const Program& program, const CoreConfig& config, memhier::MemorySystem& mem,
                    Cycle budget = 10'000'000, bool record_trace = false);

}  // namespace mcsim::core
