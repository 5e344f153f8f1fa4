#include "mcsim/memhier.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace mcsim::memhier {

using coherence::CoreOp;
using coherence::MsgKind;
using coherence::RequestResult;
using coherence::State;

namespace {

bool pow2(std::uint64_t x) { return x != 0 && (x & (x - 1)) == 0; }

using Block = std::vector<Word>;
using CohLine = coherence::Line<Block>;
using Msg = coherence::Message<Block>;
using DirEntry = coherence::DirEntry<Block>;

struct Empty {};

template <class P>
class SetAssoc {
 public:
  struct Way {
    bool valid = false;
    Addr block = 0;
    std::uint64_t stamp = 0;
    P payload{};
  };

  SetAssoc() = default;
  explicit SetAssoc(const CacheGeometry& g) : g_(g), ways_(static_cast<std::size_t>(g.sets()) * g.assoc) {}

  Way* find(Addr block) {
    for (auto* w = first(block); w != first(block) + g_.assoc; ++w)
      if (w->valid && w->block == block) return w;
    return nullptr;
  }
  const Way* find(Addr block) const { return const_cast<SetAssoc*>(this)->find(block); }

  void touch(Way& w) { w.stamp = ++clock_; }

  // Invalid way first, else the least recently used way accepted by `evictable`.
  template <class Pred>
  Way* victim(Addr block, Pred&& evictable) {
    Way* best = nullptr;
    for (auto* w = first(block); w != first(block) + g_.assoc; ++w) {
      if (!w->valid) return w;
      if (evictable(*w) && (!best || w->stamp < best->stamp)) best = w;
    }
    return best;
  }

  // Tag-only access: hit refreshes LRU, miss installs. Returns hit.
  bool access(Addr block) {
    if (auto* w = find(block)) {
      touch(*w);
      return true;
    }
    auto* v = victim(block, [](const Way&) { return true; });
    v->valid = true;
    v->block = block;
    touch(*v);
    return false;
  }

  void invalidate(Addr block) {
    if (auto* w = find(block)) w->valid = false;
  }

  std::vector<Way>& ways() { return ways_; }
  const std::vector<Way>& ways() const { return ways_; }

 private:
  Way* first(Addr block) {
    const auto set = (block / g_.block) % g_.sets();
    return ways_.data() + static_cast<std::size_t>(set) * g_.assoc;
  }

  CacheGeometry g_;
  std::vector<Way> ways_;
  std::uint64_t clock_ = 0;
};

struct Request {
  CoreId core = 0;
  AccessKind kind = AccessKind::Read;
  Addr addr = 0;
  Word value = 0;
  Cycle issued = 0;
  bool done = false;
  bool discarded = false;
  Cycle done_cycle = 0;
  Word result = 0;
};

// ---------------------------------------------------------------------------

class FlatMemory final : public MemorySystem {
 public:
  FlatMemory(int cores, int latency, const std::map<Addr, Word>& initial)
      : cores_(cores), latency_(latency), memory_(initial) {}

  int ifetch(CoreId, Addr, Cycle) override { return 0; }

  ReqId issue(CoreId core, AccessKind kind, Addr addr, Word value, Cycle now) override {
    Request r;
    r.core = core;
    r.kind = kind;
    r.addr = addr;
    r.issued = now;
    r.done = true;
    r.done_cycle = now + static_cast<Cycle>(latency_);
    if (kind == AccessKind::Read) {
      auto it = memory_.find(addr);
      r.result = it == memory_.end() ? 0 : it->second;
      ++counters_["reads"];
    } else {
      memory_[addr] = value;
      r.result = value;
      ++counters_["writes"];
    }
    reqs_[++next_] = r;
    return next_;
  }

  std::optional<Completion> poll(ReqId id, Cycle now) override {
    auto it = reqs_.find(id);
    if (it == reqs_.end() || it->second.done_cycle > now) return std::nullopt;
    Completion c{it->second.result, it->second.done_cycle - it->second.issued};
    reqs_.erase(it);
    return c;
  }

  void discard(ReqId id) override { reqs_.erase(id); }

  std::optional<Word> peek(CoreId, Addr addr) const override {
    auto it = memory_.find(addr);
    return it == memory_.end() ? 0 : it->second;
  }

  void tick(Cycle) override {}
  bool quiescent() const override { return true; }

  std::map<Addr, Word> snapshot() const override {
    std::map<Addr, Word> out;
    for (const auto& [a, v] : memory_)
      if (v != 0) out[a] = v;
    return out;
  }

  MemStats stats() const override { return {counters_, {}}; }
  int cores() const override { return cores_; }

 private:
  int cores_;
  int latency_;
  std::map<Addr, Word> memory_;
  std::unordered_map<ReqId, Request> reqs_;
  ReqId next_ = 0;
  std::map<std::string, std::uint64_t> counters_;
};

// ---------------------------------------------------------------------------

class CoherentSystem final : public MemorySystem {
 public:
  CoherentSystem(const MemConfig& cfg, int cores, const std::map<Addr, Word>& initial);

  int ifetch(CoreId core, Addr addr, Cycle now) override;
  ReqId issue(CoreId core, AccessKind kind, Addr addr, Word value, Cycle now) override;
  std::optional<Completion> poll(ReqId id, Cycle now) override;
  void discard(ReqId id) override;
  std::optional<Word> peek(CoreId core, Addr addr) const override;
  void tick(Cycle now) override;
  bool quiescent() const override;
  std::map<Addr, Word> snapshot() const override;
  MemStats stats() const override { return {counters_, network_.stats()}; }
  int cores() const override { return n_; }

 private:
  struct Mshr {
    std::deque<ReqId> waiting;
  };
  struct Incoming {
    Addr block;
    Msg msg;
  };
  struct PrivateCaches {
    SetAssoc<CohLine> coh;  // L1D, or L2 when present (L1D is then a tag filter)
    std::optional<SetAssoc<Empty>> filter;
    SetAssoc<Empty> l1i;
    std::optional<SetAssoc<Empty>> l2i;
    std::map<Addr, CohLine> writeback;  // evicted lines awaiting their writeback
    std::map<Addr, Mshr> mshr;
    std::deque<ReqId> retry;
    std::deque<Incoming> fwd_in, resp_in;
  };
  struct Bank {
    SetAssoc<Empty> tags;
    std::map<Addr, DirEntry> entries;
    std::deque<Incoming> req_in, resp_in;
  };
  struct BusRequest {
    CoreId core;
    Addr block;
    MsgKind kind;
    bool cancelled = false;
  };
  struct Pending {
    Cycle ready;
    noc::Packet packet;
  };

  bool directory() const { return cfg_.kind == MemKind::Directory; }
  Addr block_of(Addr a) const { return a & ~(block_bytes_ - 1); }
  std::size_t word_of(Addr a) const { return (a & (block_bytes_ - 1)) / kWordBytes; }
  int bank_of(Addr block) const { return static_cast<int>((block / block_bytes_) % banks_.size()); }
  Cycle now() const { return now_; }

  DirEntry& entry(Addr block);
  CohLine* find_line(CoreId core, Addr block);

  bool try_start(ReqId id);
  RequestResult request(CoreId core, Addr block, CohLine& line, CoreOp op);
  void perform(ReqId id, CohLine& line, Cycle done_cycle);
  void evict(CoreId core, SetAssoc<CohLine>::Way& way);
  void complete_mshr(CoreId core, Addr block, coherence::Completion completion, const std::optional<Block>& once,
                     Cycle done_cycle);
  int private_hit_latency(CoreId core, Addr block);
  int llc_latency(Addr block);
  void note_invalid(CoreId core, Addr block);

  void send(Addr block, const Msg& m);
  void inject_later(Cycle ready, noc::Packet p);
  bool handle_at_cache(CoreId core, const Incoming& in);
  bool handle_at_bank(const Incoming& in);
  template <class Handler>
  void drain(std::deque<Incoming>& q, Handler&& handler);

  void bus_request(CoreId core, Addr block, MsgKind kind);
  void bus_observe(std::uint64_t id);

  void check_swmr();

  MemConfig cfg_;
  int n_;
  Addr block_bytes_;
  std::map<Addr, Word> initial_;
  std::map<Addr, Word> ghost_;  // latest value written to every address, for the data-value check
  std::vector<PrivateCaches> caches_;
  std::vector<Bank> banks_;
  noc::Network network_;
  noc::NodeMap nodes_;
  std::unordered_map<ReqId, Request> reqs_;
  ReqId next_req_ = 0;
  std::uint64_t next_payload_ = 0;
  std::unordered_map<std::uint64_t, Incoming> envelopes_;
  std::unordered_map<std::uint64_t, BusRequest> bus_reqs_;
  std::map<std::pair<CoreId, Addr>, std::uint64_t> pending_putm_;
  std::vector<Pending> pending_;
  std::map<std::tuple<int, int, int>, Cycle> last_ready_;
  std::set<Addr> touched_;
  std::map<std::string, std::uint64_t> counters_;
  Cycle now_ = 0;
};

noc::Topology make_topology(const MemConfig& cfg, int cores) {
  if (cfg.kind == MemKind::Snoopy) return noc::Topology::build(noc::TopologyKind::Bus, cores + 1);
  return noc::Topology::build(cfg.topology, cfg.topo_cols, cfg.topo_rows);
}

CoherentSystem::CoherentSystem(const MemConfig& cfg, int cores, const std::map<Addr, Word>& initial)
    : cfg_(cfg),
      n_(cores),
      block_bytes_(cfg.l1d.block),
      initial_(initial),
      ghost_(initial),
      network_(make_topology(cfg, cores), cfg.network) {
  cfg_.validate(cores);
  if (directory()) {
    nodes_ = noc::default_node_map(network_.topology(), cores, cfg.llc_banks);
  } else {
    for (int c = 0; c < cores; ++c) nodes_.core_node.push_back(c);
    const int banks = cfg.llc_banks > 0 ? cfg.llc_banks : 1;
    nodes_.bank_node.assign(static_cast<std::size_t>(banks), cores);
  }
  for (int c = 0; c < cores; ++c) {
    PrivateCaches pc;
    pc.coh = SetAssoc<CohLine>(cfg.l2_enabled ? cfg.l2 : cfg.l1d);
    if (cfg.l2_enabled) {
      pc.filter.emplace(cfg.l1d);
      pc.l2i.emplace(cfg.l2);
    }
    pc.l1i = SetAssoc<Empty>(cfg.l1i);
    caches_.push_back(std::move(pc));
  }
  for (std::size_t b = 0; b < nodes_.bank_node.size(); ++b) {
    Bank bank;
    bank.tags = SetAssoc<Empty>(cfg.llc_bank);
    banks_.push_back(std::move(bank));
  }
}

DirEntry& CoherentSystem::entry(Addr block) {
  auto& bank = banks_[static_cast<std::size_t>(bank_of(block))];
  auto it = bank.entries.find(block);
  if (it != bank.entries.end()) return it->second;
  DirEntry e;
  e.home.assign(block_bytes_ / kWordBytes, 0);
  for (auto i = initial_.lower_bound(block); i != initial_.end() && i->first < block + block_bytes_; ++i)
    e.home[word_of(i->first)] = i->second;
  return bank.entries.emplace(block, std::move(e)).first->second;
}

CohLine* CoherentSystem::find_line(CoreId core, Addr block) {
  auto& pc = caches_[static_cast<std::size_t>(core)];
  if (auto* w = pc.coh.find(block)) return &w->payload;
  auto it = pc.writeback.find(block);
  return it == pc.writeback.end() ? nullptr : &it->second;
}

int CoherentSystem::private_hit_latency(CoreId core, Addr block) {
  auto& pc = caches_[static_cast<std::size_t>(core)];
  if (!pc.filter) {
    ++counters_["l1d.hits"];
    return cfg_.l1d.hit_latency;
  }
  if (pc.filter->access(block)) {
    ++counters_["l1d.hits"];
    return cfg_.l1d.hit_latency;
  }
  ++counters_["l1d.misses"];
  ++counters_["l2.hits"];
  return cfg_.l2.hit_latency;
}

int CoherentSystem::llc_latency(Addr block) {
  if (banks_[static_cast<std::size_t>(bank_of(block))].tags.access(block)) {
    ++counters_["llc.hits"];
    return cfg_.llc_bank.hit_latency;
  }
  ++counters_["llc.misses"];
  return cfg_.llc_bank.hit_latency + cfg_.memory_latency;
}

void CoherentSystem::note_invalid(CoreId core, Addr block) {
  auto& pc = caches_[static_cast<std::size_t>(core)];
  if (pc.filter) pc.filter->invalidate(block);
}

int CoherentSystem::ifetch(CoreId core, Addr addr, Cycle) {
  auto& pc = caches_.at(static_cast<std::size_t>(core));
  const Addr block = addr & ~(cfg_.l1i.block - 1);
  if (pc.l1i.access(block)) {
    ++counters_["l1i.hits"];
    return 0;
  }
  ++counters_["l1i.misses"];
  if (pc.l2i && pc.l2i->access(block)) return cfg_.l2.hit_latency;
  int lat = pc.l2i ? cfg_.l2.hit_latency : 0;
  const auto& topo = network_.topology();
  const int hops = directory() ? static_cast<int>(
                                     topo.route(nodes_.core_node[static_cast<std::size_t>(core)],
                                                nodes_.bank_node[static_cast<std::size_t>(bank_of(block))])
                                         .size())
                               : 1;
  lat += llc_latency(block) + 2 * hops * cfg_.network.link_latency;
  return lat;
}

ReqId CoherentSystem::issue(CoreId core, AccessKind kind, Addr addr, Word value, Cycle now) {
  if (core < 0 || core >= n_) throw Error("memory access from unknown core");
  if (addr % kWordBytes != 0) throw Error("misaligned memory access");
  now_ = std::max(now_, now);
  Request r;
  r.core = core;
  r.kind = kind;
  r.addr = addr;
  r.value = value;
  r.issued = now;
  const ReqId id = ++next_req_;
  reqs_[id] = r;
  ++counters_[kind == AccessKind::Read ? "reads" : "writes"];
  if (!try_start(id)) caches_[static_cast<std::size_t>(core)].retry.push_back(id);
  return id;
}

bool CoherentSystem::try_start(ReqId id) {
  const Request& r = reqs_.at(id);
  auto& pc = caches_[static_cast<std::size_t>(r.core)];
  const Addr block = block_of(r.addr);
  if (auto m = pc.mshr.find(block); m != pc.mshr.end()) {
    m->second.waiting.push_back(id);
    return true;
  }
  if (pc.writeback.count(block)) return false;
  auto* way = pc.coh.find(block);
  if (!way) {
    way = pc.coh.victim(block, [](const auto& w) { return coherence::is_stable(w.payload.state); });
    if (!way) return false;
    if (way->valid) evict(r.core, *way);
    way->valid = true;
    way->block = block;
    way->payload = CohLine{};
    way->payload.data.assign(block_bytes_ / kWordBytes, 0);
  }
  pc.coh.touch(*way);
  auto& line = way->payload;
  const CoreOp op = r.kind == AccessKind::Read ? CoreOp::Read : CoreOp::Write;
  switch (request(r.core, block, line, op)) {
    case RequestResult::Hit:
      perform(id, line, now_ + static_cast<Cycle>(private_hit_latency(r.core, block)));
      return true;
    case RequestResult::Issued:
      pc.mshr[block].waiting.push_back(id);
      ++counters_[cfg_.l2_enabled ? "l2.misses" : "l1d.misses"];
      if (cfg_.l2_enabled) ++counters_["l1d.misses"];
      return true;
    default:
      return false;
  }
}

RequestResult CoherentSystem::request(CoreId core, Addr block, CohLine& line, CoreOp op) {
  if (directory())
    return coherence::dir_cache_request(line, op, core, [&](const Msg& m) { send(block, m); });
  const auto res = coherence::snoopy_cache_request(line, op);
  if (res == RequestResult::Issued) bus_request(core, block, coherence::bus_kind_for(line.state));
  return res;
}

void CoherentSystem::perform(ReqId id, CohLine& line, Cycle done_cycle) {
  auto it = reqs_.find(id);
  Request& r = it->second;
  const Addr block = block_of(r.addr);
  auto& word = line.data[word_of(r.addr)];
  if (r.kind == AccessKind::Read) {
    r.result = word;
    auto g = ghost_.find(r.addr);
    if (word != (g == ghost_.end() ? 0 : g->second)) ++counters_["data_value_violations"];
  } else {
    if (line.state != State::M) throw Error("coherence: write performed without write permission");
    word = r.value;
    ghost_[r.addr] = r.value;
    r.result = r.value;
  }
  r.done = true;
  r.done_cycle = done_cycle;
  touched_.insert(block);
  if (r.discarded) reqs_.erase(it);
}

void CoherentSystem::evict(CoreId core, SetAssoc<CohLine>::Way& way) {
  auto& pc = caches_[static_cast<std::size_t>(core)];
  const Addr block = way.block;
  auto& line = way.payload;
  note_invalid(core, block);
  touched_.insert(block);
  way.valid = false;
  if (line.state == State::I) return;
  ++counters_["evictions"];
  if (request(core, block, line, CoreOp::Evict) == RequestResult::Issued) {
    ++counters_["writebacks"];
    pc.writeback.emplace(block, std::move(line));
  }
}

void CoherentSystem::complete_mshr(CoreId core, Addr block, coherence::Completion completion,
                                   const std::optional<Block>& once, Cycle done_cycle) {
  auto& pc = caches_[static_cast<std::size_t>(core)];
  auto mit = pc.mshr.find(block);
  if (mit == pc.mshr.end()) throw Error("coherence: completion without an outstanding miss");
  CohLine* line = find_line(core, block);
  auto& waiting = mit->second.waiting;
  while (!waiting.empty()) {
    const ReqId id = waiting.front();
    Request& r = reqs_.at(id);
    if (completion == coherence::Completion::ReadOnce) {
      // Data usable for the reads that were waiting, but the copy is already gone.
      if (r.kind != AccessKind::Read) break;
      r.result = (*once)[word_of(r.addr)];
      r.done = true;
      r.done_cycle = done_cycle;
      if (r.discarded) reqs_.erase(id);
      waiting.pop_front();
      continue;
    }
    if (r.kind == AccessKind::Read && coherence::is_readable(line->state)) {
      perform(id, *line, done_cycle);
    } else if (r.kind == AccessKind::Write && (line->state == State::M || line->state == State::E)) {
      line->state = State::M;
      perform(id, *line, done_cycle);
    } else {
      break;
    }
    waiting.pop_front();
  }
  if (waiting.empty()) {
    pc.mshr.erase(mit);
    return;
  }
  const CoreOp op = reqs_.at(waiting.front()).kind == AccessKind::Read ? CoreOp::Read : CoreOp::Write;
  if (request(core, block, *line, op) != RequestResult::Issued)
    throw Error("coherence: could not restart a waiting access");
}

void CoherentSystem::inject_later(Cycle ready, noc::Packet p) { pending_.push_back({ready, p}); }

void CoherentSystem::send(Addr block, const Msg& m) {
  auto node_of = [&](int endpoint) {
    return endpoint == coherence::kDirectory ? nodes_.bank_node[static_cast<std::size_t>(bank_of(block))]
                                             : nodes_.core_node[static_cast<std::size_t>(endpoint)];
  };
  Cycle ready = now_;
  if (m.kind == MsgKind::Data)
    ready += static_cast<Cycle>(m.src == coherence::kDirectory ? llc_latency(block)
                                                                : private_hit_latency(m.src, block));
  noc::Packet p;
  p.src = node_of(m.src);
  p.dst = node_of(m.dst);
  p.size = coherence::carries_data(m.kind) ? cfg_.data_packet_size : 1;
  p.payload = ++next_payload_;
  // Keep per-(source, destination, vnet) order despite the extra delays.
  auto& last = last_ready_[{p.src, p.dst, static_cast<int>(coherence::vnet_of(m.kind))}];
  ready = std::max(ready, last);
  last = ready;
  envelopes_[p.payload] = Incoming{block, m};
  ++counters_["msg." + std::string(coherence::to_string(m.kind))];
  inject_later(ready, p);
}

void CoherentSystem::bus_request(CoreId core, Addr block, MsgKind kind) {
  noc::Packet p;
  p.src = nodes_.core_node[static_cast<std::size_t>(core)];
  p.dst = p.src;
  p.size = kind == MsgKind::PutM ? cfg_.data_packet_size : 1;
  p.payload = ++next_payload_;
  bus_reqs_[p.payload] = BusRequest{core, block, kind};
  if (kind == MsgKind::PutM) pending_putm_[{core, block}] = p.payload;
  ++counters_["bus." + std::string(coherence::to_string(kind))];
  inject_later(now_, p);
}

void CoherentSystem::bus_observe(std::uint64_t id) {
  auto node = bus_reqs_.extract(id);
  const BusRequest br = node.mapped();
  if (br.kind == MsgKind::PutM) pending_putm_.erase({br.core, br.block});
  if (br.cancelled) return;
  const Addr block = br.block;
  std::optional<Block> supplied;
  CoreId supplier = -1;
  bool shared = false;
  auto& home = entry(block).home;
  for (CoreId c = 0; c < n_; ++c) {
    if (c == br.core) continue;
    CohLine* line = find_line(c, block);
    if (!line) continue;
    const State before = line->state;
    auto r = coherence::snoop_handle(*line, br.kind, cfg_.protocol);
    if (r.writeback) home = r.data;
    if (r.supplied) {
      supplied = r.data;
      supplier = c;
    }
    shared = shared || r.shared;
    if (r.cancelled_putm) {
      auto p = pending_putm_.find({c, block});
      if (p != pending_putm_.end()) {
        bus_reqs_.at(p->second).cancelled = true;
        pending_putm_.erase(p);
      }
      caches_[static_cast<std::size_t>(c)].writeback.erase(block);
    }
    if (before != State::I && line->state == State::I) {
      note_invalid(c, block);
      if (br.kind == MsgKind::GetM) ++counters_["invalidations"];
    }
  }
  CohLine* own = find_line(br.core, block);
  if (!own) throw Error("coherence: bus transaction from a core without the line");
  const bool upgrade = br.kind == MsgKind::GetM && own->state == State::SM_AD && !supplied;
  auto o = coherence::snoopy_own_transaction(*own, br.kind, home, supplied, shared);
  if (br.kind == MsgKind::PutM) caches_[static_cast<std::size_t>(br.core)].writeback.erase(block);
  int data_latency = 0;
  if (br.kind != MsgKind::PutM && !upgrade)
    data_latency = supplied ? private_hit_latency(supplier, block) : llc_latency(block);
  if (data_latency > 0) network_.hold_bus(data_latency);
  touched_.insert(block);
  if (o.completion != coherence::Completion::None)
    complete_mshr(br.core, block, o.completion, o.read_data, now_ + static_cast<Cycle>(data_latency));
}

bool CoherentSystem::handle_at_cache(CoreId core, const Incoming& in) {
  auto& pc = caches_[static_cast<std::size_t>(core)];
  CohLine* line = find_line(core, in.block);
  CohLine absent;
  if (!line) {
    if (in.msg.kind != MsgKind::Inv) throw Error("coherence: message for a block the cache never requested");
    line = &absent;
  }
  const State before = line->state;
  auto r = coherence::dir_cache_receive(*line, in.msg, core, [&](const Msg& m) { send(in.block, m); });
  if (r.stalled) return false;
  if (r.error) throw Error(std::string("coherence protocol error: ") + r.error);
  if (in.msg.kind == MsgKind::Inv && before != State::I) ++counters_["invalidations"];
  if (line != &absent && line->state == State::I) {
    note_invalid(core, in.block);
    if (pc.writeback.count(in.block) && !pc.mshr.count(in.block)) pc.writeback.erase(in.block);
  }
  touched_.insert(in.block);
  if (r.completion != coherence::Completion::None)
    complete_mshr(core, in.block, r.completion, r.read_data, now_);
  return true;
}

bool CoherentSystem::handle_at_bank(const Incoming& in) {
  auto r = coherence::directory_handle(entry(in.block), in.msg, [&](const Msg& m) { send(in.block, m); },
                                       cfg_.protocol);
  if (r.stalled) return false;
  if (r.error) throw Error(std::string("coherence protocol error: ") + r.error);
  return true;
}

template <class Handler>
void CoherentSystem::drain(std::deque<Incoming>& q, Handler&& handler) {
  std::set<Addr> blocked;
  for (auto it = q.begin(); it != q.end();) {
    if (blocked.count(it->block) || !handler(*it)) {
      blocked.insert(it->block);
      ++it;
    } else {
      it = q.erase(it);
    }
  }
}

void CoherentSystem::tick(Cycle now) {
  now_ = now;
  check_swmr();
  std::vector<Pending> later;
  for (auto& p : pending_) {
    if (p.ready <= now_) {
      network_.inject(p.packet);
    } else {
      later.push_back(p);
    }
  }
  pending_.swap(later);

  for (const auto& d : network_.deliver_cycle()) {
    if (!directory()) {
      bus_observe(d.packet.payload);
      continue;
    }
    auto node = envelopes_.extract(d.packet.payload);
    Incoming in = std::move(node.mapped());
    const auto vnet = coherence::vnet_of(in.msg.kind);
    if (in.msg.dst == coherence::kDirectory) {
      auto& bank = banks_[static_cast<std::size_t>(bank_of(in.block))];
      (vnet == coherence::VNet::Request ? bank.req_in : bank.resp_in).push_back(std::move(in));
    } else {
      auto& pc = caches_[static_cast<std::size_t>(in.msg.dst)];
      (vnet == coherence::VNet::Forward ? pc.fwd_in : pc.resp_in).push_back(std::move(in));
    }
  }
  if (directory()) {
    for (CoreId c = 0; c < n_; ++c) {
      auto& pc = caches_[static_cast<std::size_t>(c)];
      drain(pc.resp_in, [&](const Incoming& in) { return handle_at_cache(c, in); });
      drain(pc.fwd_in, [&](const Incoming& in) { return handle_at_cache(c, in); });
    }
    for (auto& bank : banks_) {
      drain(bank.resp_in, [&](const Incoming& in) { return handle_at_bank(in); });
      drain(bank.req_in, [&](const Incoming& in) { return handle_at_bank(in); });
    }
  }
  for (CoreId c = 0; c < n_; ++c) {
    auto& retry = caches_[static_cast<std::size_t>(c)].retry;
    const std::size_t n = retry.size();
    for (std::size_t i = 0; i < n; ++i) {
      const ReqId id = retry.front();
      retry.pop_front();
      if (!try_start(id)) retry.push_back(id);
    }
  }
}

void CoherentSystem::check_swmr() {
  for (Addr block : touched_) {
    int owners = 0, readers = 0;
    for (CoreId c = 0; c < n_; ++c) {
      const CohLine* l = find_line(c, block);
      if (!l) continue;
      if (l->state == State::E || l->state == State::M) ++owners;
      if (l->state == State::S) ++readers;
    }
    if (owners > 1 || (owners == 1 && readers > 0)) ++counters_["swmr_violations"];
  }
  touched_.clear();
}

std::optional<Completion> CoherentSystem::poll(ReqId id, Cycle now) {
  auto it = reqs_.find(id);
  if (it == reqs_.end() || !it->second.done || it->second.done_cycle > now) return std::nullopt;
  Completion c{it->second.result, it->second.done_cycle - it->second.issued};
  reqs_.erase(it);
  return c;
}

void CoherentSystem::discard(ReqId id) {
  auto it = reqs_.find(id);
  if (it == reqs_.end()) return;
  if (it->second.done) {
    reqs_.erase(it);
  } else {
    it->second.discarded = true;
  }
}

std::optional<Word> CoherentSystem::peek(CoreId core, Addr addr) const {
  const auto& pc = caches_.at(static_cast<std::size_t>(core));
  const auto* w = pc.coh.find(block_of(addr));
  if (!w || !coherence::is_readable(w->payload.state)) return std::nullopt;
  return w->payload.data[word_of(addr)];
}

bool CoherentSystem::quiescent() const {
  if (!pending_.empty() || !network_.idle() || !bus_reqs_.empty()) return false;
  for (const auto& pc : caches_)
    if (!pc.mshr.empty() || !pc.retry.empty() || !pc.writeback.empty() || !pc.fwd_in.empty() ||
        !pc.resp_in.empty())
      return false;
  for (const auto& b : banks_)
    if (!b.req_in.empty() || !b.resp_in.empty()) return false;
  return true;
}

std::map<Addr, Word> CoherentSystem::snapshot() const {
  std::map<Addr, Word> mem = initial_;
  auto overlay = [&](Addr block, const Block& data) {
    for (std::size_t i = 0; i < data.size(); ++i) mem[block + static_cast<Addr>(i) * kWordBytes] = data[i];
  };
  for (const auto& bank : banks_)
    for (const auto& [block, e] : bank.entries) overlay(block, e.home);
  for (const auto& pc : caches_) {
    for (const auto& w : pc.coh.ways())
      if (w.valid && w.payload.state == State::M) overlay(w.block, w.payload.data);
    for (const auto& [block, line] : pc.writeback) overlay(block, line.data);
  }
  std::map<Addr, Word> out;
  for (const auto& [a, v] : mem)
    if (v != 0) out[a] = v;
  return out;
}

}  // namespace

std::string_view to_string(MemKind k) {
  switch (k) {
    case MemKind::Perfect: return "none";
    case MemKind::Snoopy: return "snoopy";
    case MemKind::Directory: return "directory";
  }
  return "?";
}

void CacheGeometry::validate(const std::string& name) const {
  if (!pow2(capacity) || !pow2(assoc) || !pow2(block))
    throw Error(name + ": capacity, associativity and block size must be powers of two");
  if (block < kWordBytes || capacity < assoc * block)
    throw Error(name + ": capacity must hold at least one set of " + std::to_string(assoc) + " blocks");
  if (hit_latency < 1) throw Error(name + ": hit latency must be >= 1");
}

void MemConfig::validate(int cores) const {
  if (cores < 1 || cores > 32) throw Error("core count must be in [1, 32]");
  if (kind == MemKind::Perfect) {
    if (flat_latency < 1) throw Error("flat memory latency must be >= 1");
    return;
  }
  l1i.validate("l1i");
  l1d.validate("l1d");
  llc_bank.validate("llc");
  if (l2_enabled) {
    l2.validate("l2");
    if (l2.block != l1d.block) throw Error("l2 block size must match l1d");
  }
  if (llc_bank.block != l1d.block) throw Error("llc block size must match l1d");
  if (memory_latency < 0) throw Error("memory latency must be >= 0");
  if (data_packet_size < 1) throw Error("data packet size must be >= 1");
}

std::unique_ptr<MemorySystem> make_memory_system(const MemConfig& config, int cores,
                                                 const std::map<Addr, Word>& initial) {
  config.validate(cores);
  if (config.kind == MemKind::Perfect) return std::make_unique<FlatMemory>(cores, config.flat_latency, initial);
  return std::make_unique<CoherentSystem>(config, cores, initial);
}

Completion access_blocking(MemorySystem& mem, CoreId core, AccessKind kind, Addr addr, Word value, Cycle& now) {
  const ReqId id = mem.issue(core, kind, addr, value, now);
  for (int guard = 0; guard < 1'000'000; ++guard) {
    if (auto c = mem.poll(id, now)) return *c;
    mem.tick(++now);
  }
  throw Error("access_blocking: access never completed");
}

std::vector<TraceOp> parse_mem_trace(std::string_view text) {
  std::vector<TraceOp> ops;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string core_s, op_s, addr_s, value_s, extra;
    if (!(ls >> core_s)) continue;
    auto fail = [&](const std::string& what) { return Error("trace line " + std::to_string(n) + ": " + what); };
    if (!(ls >> op_s >> addr_s)) throw fail("expected 'core r|w addr [value]'");
    TraceOp op;
    try {
      std::size_t used = 0;
      op.core = std::stoi(core_s, &used);
      if (used != core_s.size()) throw fail("bad core");
      op.addr = static_cast<Addr>(std::stoul(addr_s, &used, 0));
      if (used != addr_s.size()) throw fail("bad address");
      if (ls >> value_s) {
        op.value = static_cast<Word>(std::stol(value_s, &used, 0));
        if (used != value_s.size()) throw fail("bad value");
      }
    } catch (const std::logic_error&) {
      throw fail("bad number");
    }
    if (ls >> extra) throw fail("trailing text");
    if (op_s == "r" || op_s == "R") {
      op.kind = AccessKind::Read;
    } else if (op_s == "w" || op_s == "W") {
      op.kind = AccessKind::Write;
    } else {
      throw fail("op must be r or w");
    }
    if (op.addr % kWordBytes != 0) throw fail("address not word-aligned");
    ops.push_back(op);
  }
  return ops;
}

TraceResult run_trace(MemorySystem& mem, const std::vector<TraceOp>& ops, const TraceOptions& options) {
  const int cores = mem.cores();
  std::vector<std::vector<std::size_t>> per_core(static_cast<std::size_t>(cores));
  std::map<Addr, std::deque<std::size_t>> per_block;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (ops[i].core < 0 || ops[i].core >= cores) throw Error("trace op for core " + std::to_string(ops[i].core));
    per_core[static_cast<std::size_t>(ops[i].core)].push_back(i);
    per_block[ops[i].addr & ~Addr{63}].push_back(i);
  }
  std::vector<std::size_t> next(static_cast<std::size_t>(cores), 0);
  std::vector<std::optional<std::pair<std::size_t, ReqId>>> busy(static_cast<std::size_t>(cores));
  TraceResult res;
  res.values.assign(ops.size(), 0);
  std::size_t finished = 0;
  Cycle now = 0;
  while (finished < ops.size() || !mem.quiescent()) {
    if (++now > options.budget) throw Error("trace: cycle budget exhausted");
    mem.tick(now);
    for (int c = 0; c < cores; ++c) {
      auto& b = busy[static_cast<std::size_t>(c)];
      if (b) {
        auto done = mem.poll(b->second, now);
        if (!done) continue;
        res.values[b->first] = done->value;
        per_block[ops[b->first].addr & ~Addr{63}].pop_front();
        ++finished;
        b.reset();
      }
      auto& idx = next[static_cast<std::size_t>(c)];
      const auto& mine = per_core[static_cast<std::size_t>(c)];
      if (idx >= mine.size()) continue;
      const std::size_t i = mine[idx];
      if (options.serialize_blocks && per_block[ops[i].addr & ~Addr{63}].front() != i) continue;
      b = std::make_pair(i, mem.issue(c, ops[i].kind, ops[i].addr, ops[i].value, now));
      ++idx;
    }
  }
  res.cycles = now;
  res.final_memory = mem.snapshot();
  res.stats = mem.stats();
  return res;
}

}  // namespace mcsim::memhier
