#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mcsim/isa.hpp"

namespace mcsim::consistency {

enum class Model { SC, TSO };

std::string_view to_string(Model m);
Model parse_model(std::string_view s);

struct BufferedStore {
  Addr addr = 0;
  Word value = 0;

  bool operator==(const BufferedStore&) const = default;
  auto operator<=>(const BufferedStore&) const = default;
};

/// Committed stores not yet globally visible, oldest at the front.
class StoreBuffer {
 public:
  explicit StoreBuffer(std::size_t capacity = 8) : capacity_(capacity) {}

  bool empty() const { return entries_.empty(); }
  bool full() const { return capacity_ != 0 && entries_.size() >= capacity_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }

  void push(Addr addr, Word value);
  const BufferedStore& front() const { return entries_.front(); }
  void pop() { entries_.pop_front(); }
  /// Value of the newest buffered store to `addr`.
  std::optional<Word> forward(Addr addr) const;
  const std::deque<BufferedStore>& entries() const { return entries_; }

 private:
  std::size_t capacity_;  // 0 = unbounded
  std::deque<BufferedStore> entries_;
};

enum class MemOpKind { Load, Store, Fence };

struct MemOp {
  MemOpKind kind = MemOpKind::Load;
  Addr addr = 0;
  Word value = 0;
};

struct SbAction {
  enum Kind {
    Forwarded,  // load satisfied from the buffer, no memory access
    Proceed,    // load goes to the memory system now
    Enqueued,   // store accepted into the buffer
    Done,       // fence with an empty buffer
    Stall,      // retry later
  } kind = Stall;
  Word value = 0;  // Forwarded
};

/// Store-buffer rule for one memory operation, applied at load issue or at
/// store/fence commit. Under SC a load may only proceed with an empty buffer.
SbAction sb_process(StoreBuffer& sb, const MemOp& op, Model model);

// ---------------------------------------------------------------------------
// Litmus tests
// ---------------------------------------------------------------------------

/// Final values keyed by "T:rN" (register N of thread T, for registers that
/// receive loads) and "[x]" (shared variable x).
using Outcome = std::map<std::string, Word>;
using OutcomeSet = std::set<Outcome>;

std::string format_outcome(const Outcome& o);

struct Expectation {
  bool allowed = true;
  Outcome outcome;  // may name a subset of the keys
  Model model = Model::SC;
  int line = 0;
};

struct LitmusTest {
  std::string name;
  Program program;
  std::vector<Expectation> expectations;

  std::vector<std::string> keys() const;
};

inline constexpr int kMaxLitmusThreads = 4;
inline constexpr int kMaxLitmusOps = 8;  // loads, stores and fences per thread

/// Assembly with `.thread` sections plus `expect allowed|forbidden (k=v, ...)
/// under sc|tso` lines. Keys may be written T:rN, rN (when only one thread
/// loads into it), [x] or x. A missing final `halt` is appended.
LitmusTest parse_litmus(std::string_view text, std::string name = "litmus");

/// Throws unless the program is straight-line, 1..4 threads, <= 8 memory ops each.
void validate_litmus(const Program& program);

/// Parses "(k=v, ...)" into an outcome, checking every key against the test.
Outcome parse_outcome(const LitmusTest& test, std::string_view text);

/// Keys and values of the final state of a litmus run.
Outcome outcome_of(const LitmusTest& test, const ArchState& final_state);

OutcomeSet enumerate_sc(const LitmusTest& test);
OutcomeSet enumerate_tso(const LitmusTest& test);
OutcomeSet enumerate(const LitmusTest& test, Model model);

/// True when some outcome of `model` agrees with every key in `outcome`.
bool check_outcome(const Outcome& outcome, Model model, const LitmusTest& test);

}  // namespace mcsim::consistency
