#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcsim/coherence.hpp"
#include "mcsim/noc.hpp"
#include "mcsim/types.hpp"

namespace mcsim::memhier {

struct CacheGeometry {
  std::uint32_t capacity = 32768;
  std::uint32_t assoc = 8;
  std::uint32_t block = 64;
  int hit_latency = 2;

  std::uint32_t sets() const { return capacity / (assoc * block); }
  /// Throws unless all fields are powers of two and capacity = sets x assoc x block.
  void validate(const std::string& name) const;
};

enum class MemKind {
  Perfect,    // no caches: every access is a fixed latency against one memory
  Snoopy,     // private caches on an atomic broadcast bus
  Directory,  // private caches, directory beside the LLC banks, point-to-point network
};

std::string_view to_string(MemKind k);

struct MemConfig {
  MemKind kind = MemKind::Snoopy;
  int flat_latency = 1;  // Perfect only
  CacheGeometry l1i{32768, 8, 64, 1};
  CacheGeometry l1d{32768, 8, 64, 2};
  bool l2_enabled = false;
  CacheGeometry l2{262144, 8, 64, 8};
  CacheGeometry llc_bank{1u << 20, 16, 64, 12};
  int memory_latency = 80;
  int data_packet_size = 2;  // link-width units for data-bearing messages
  noc::TopologyKind topology = noc::TopologyKind::Mesh;
  int topo_cols = 2;
  int topo_rows = 2;
  int llc_banks = 0;  // 0: topology default
  noc::NetworkConfig network;
  coherence::ProtocolOptions protocol;

  void validate(int cores) const;
};

using ReqId = std::uint64_t;

enum class AccessKind { Read, Write };

struct Completion {
  Word value = 0;   // loaded value (reads) or the value written
  Cycle latency = 0;
};

struct MemStats {
  std::map<std::string, std::uint64_t> counters;
  noc::NetworkStats network;

  std::uint64_t get(const std::string& key) const {
    auto it = counters.find(key);
    return it == counters.end() ? 0 : it->second;
  }
};

/// Timing and data interface between cores (through their store buffers) and
/// the memory hierarchy. The owner calls tick(now) once per cycle before any
/// core acts in that cycle.
class MemorySystem {
 public:
  virtual ~MemorySystem() = default;

  /// Extra front-end stall cycles for fetching the block holding `addr`.
  virtual int ifetch(CoreId core, Addr addr, Cycle now) = 0;
  virtual ReqId issue(CoreId core, AccessKind kind, Addr addr, Word value, Cycle now) = 0;
  /// Returns the result once the access has completed by `now`; consumes it.
  virtual std::optional<Completion> poll(ReqId id, Cycle now) = 0;
  /// Drops interest in a request (squashed load). The access still completes.
  virtual void discard(ReqId id) = 0;
  /// Value of `addr` if the core holds a readable copy right now.
  virtual std::optional<Word> peek(CoreId core, Addr addr) const = 0;
  virtual void tick(Cycle now) = 0;
  virtual bool quiescent() const = 0;
  /// Coherent view of memory (call when quiescent); zero words omitted.
  virtual std::map<Addr, Word> snapshot() const = 0;
  virtual MemStats stats() const = 0;
  virtual int cores() const = 0;
};

std::unique_ptr<MemorySystem> make_memory_system(const MemConfig& config, int cores,
                                                 const std::map<Addr, Word>& initial);

/// Issues one access and advances the system until it completes. Returns the
/// value and the latency; `now` is advanced past the completion.
Completion access_blocking(MemorySystem& mem, CoreId core, AccessKind kind, Addr addr, Word value, Cycle& now);

// ---------------------------------------------------------------------------
// Trace-driven mode
// ---------------------------------------------------------------------------

struct TraceOp {
  CoreId core = 0;
  AccessKind kind = AccessKind::Read;
  Addr addr = 0;
  Word value = 0;
};

/// Lines of `core r|w addr [value]` with `#` comments; addresses in decimal or 0x hex.
std::vector<TraceOp> parse_mem_trace(std::string_view text);

struct TraceResult {
  std::vector<Word> values;  // per op: the loaded value, or the value written
  Cycle cycles = 0;
  std::map<Addr, Word> final_memory;
  MemStats stats;
};

struct TraceOptions {
  // Also wait for every earlier op (in trace order) to the same block, which
  // makes the loaded values a function of the trace alone.
  bool serialize_blocks = true;
  Cycle budget = 10'000'000;
};

/// Each core issues its ops in order with one outstanding access at a time.
TraceResult run_trace(MemorySystem& mem, const std::vector<TraceOp>& ops, const TraceOptions& options = {});

}  // namespace mcsim::memhier
