#pragma once

// MESI write-invalidate protocol tables shared by the timed memory system
// and the exhaustive protocol checker. Controllers are templated on the
// block payload so the checker can run them over small abstract values.

#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "mcsim/types.hpp"

namespace mcsim::coherence {

enum class State : std::uint8_t {
  I, S, E, M,
  // directory transients
  IS_D, IS_D_I, IM_AD, IM_A, SM_AD, SM_A, MI_A, SI_A, II_A,
  // snoopy transient (shares IM_AD, SM_AD, MI_A with the directory set)
  IS_AD,
};

std::string_view to_string(State s);

inline bool is_stable(State s) { return s == State::I || s == State::S || s == State::E || s == State::M; }
inline bool is_readable(State s) { return s == State::S || s == State::E || s == State::M; }
inline bool is_writable(State s) { return s == State::M; }

enum class Variant { Snoopy, Directory };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

enum class MsgKind : std::uint8_t { GetS, GetM, PutM, Inv, InvAck, Data, FwdGetS, FwdGetM, WBAck };

std::string_view to_string(MsgKind k);

/// Virtual networks; each is FIFO per (source, destination) pair and a stalled
/// message only blocks its own network.
enum class VNet : std::uint8_t { Request, Forward, Response };

inline VNet vnet_of(MsgKind k) {
  switch (k) {
    case MsgKind::GetS: case MsgKind::GetM: case MsgKind::PutM: return VNet::Request;
    case MsgKind::Inv: case MsgKind::FwdGetS: case MsgKind::FwdGetM: case MsgKind::WBAck: return VNet::Forward;
    case MsgKind::Data: case MsgKind::InvAck: return VNet::Response;
  }
  return VNet::Request;
}

inline bool carries_data(MsgKind k) { return k == MsgKind::Data || k == MsgKind::PutM; }

/// Endpoint id of the block's home directory; caches are 0..n-1.
inline constexpr int kDirectory = -1;

template <class Data>
struct Message {
  MsgKind kind = MsgKind::GetS;
  int src = 0;
  int dst = 0;
  int requester = 0;  // Inv/Fwd: who receives the ack or data
  int acks = 0;       // Data from the directory: invalidations to collect
  bool exclusive = false;
  Data data{};
};

template <class Data>
struct Line {
  State state = State::I;
  Data data{};
  int acks = 0;  // outstanding invalidation acks (may dip below zero)
};

template <class Data>
struct DirEntry {
  enum class Status : std::uint8_t { Uncached, Shared, Modified, SharedAwaitData };
  Status status = Status::Uncached;
  std::uint32_t sharers = 0;
  int owner = -1;
  Data home{};
};

std::string_view dir_status_name(int status);

struct ProtocolOptions {
  // Mutation used to validate the checker: a GetM to a shared block is
  // granted without invalidating the other sharers.
  bool suppress_invalidation = false;
};

enum class CoreOp { Read, Write, Evict };

enum class RequestResult {
  Hit,     // access may be performed on the line now
  Issued,  // a transaction was started; the line is transient
  Stall,   // a transaction is already in flight; retry later
  Silent,  // eviction finished with no message
};

enum class Completion { None, ReadDone, ReadOnce, WriteReady };

template <class Data>
struct Reaction {
  bool stalled = false;
  Completion completion = Completion::None;
  std::optional<Data> read_data;  // ReadDone / ReadOnce payload
  const char* error = nullptr;    // unexpected message for the current state
};

// ---------------------------------------------------------------------------
// Directory variant: cache controller
// ---------------------------------------------------------------------------

template <class Data, class Send>
RequestResult dir_cache_request(Line<Data>& line, CoreOp op, int self, Send&& send) {
  auto request = [&](MsgKind k) {
    Message<Data> m;
    m.kind = k;
    m.src = self;
    m.dst = kDirectory;
    m.requester = self;
    if (k == MsgKind::PutM) m.data = line.data;
    send(m);
  };
  const State s = line.state;
  if (!is_stable(s)) return RequestResult::Stall;
  switch (op) {
    case CoreOp::Read:
      if (is_readable(s)) return RequestResult::Hit;
      request(MsgKind::GetS);
      line.state = State::IS_D;
      return RequestResult::Issued;
    case CoreOp::Write:
      if (s == State::M) return RequestResult::Hit;
      if (s == State::E) {
        line.state = State::M;  // silent upgrade
        return RequestResult::Hit;
      }
      request(MsgKind::GetM);
      line.acks = 0;
      line.state = s == State::S ? State::SM_AD : State::IM_AD;
      return RequestResult::Issued;
    case CoreOp::Evict:
      if (s == State::I) return RequestResult::Silent;
      if (s == State::S) {
        line.state = State::I;
        return RequestResult::Silent;
      }
      // E and M both write back so the directory never forwards to a cache
      // that silently dropped ownership.
      request(MsgKind::PutM);
      line.state = State::MI_A;
      return RequestResult::Issued;
  }
  return RequestResult::Stall;
}

template <class Data, class Send>
Reaction<Data> dir_cache_receive(Line<Data>& line, const Message<Data>& m, int self, Send&& send) {
  Reaction<Data> r;
  auto reply = [&](MsgKind k, int dst, bool with_data) {
    Message<Data> out;
    out.kind = k;
    out.src = self;
    out.dst = dst;
    out.requester = m.requester;
    if (with_data) out.data = line.data;
    send(out);
  };
  const State s = line.state;
  switch (m.kind) {
    case MsgKind::Inv:
      switch (s) {
        case State::S: line.state = State::I; break;
        case State::IS_D: line.state = State::IS_D_I; break;
        case State::SM_AD: line.state = State::IM_AD; break;
        case State::SI_A: line.state = State::II_A; break;
        case State::I: case State::IM_AD: case State::IS_D_I: case State::II_A: break;  // stale sharer
        default: r.error = "Inv in owner state"; return r;
      }
      reply(MsgKind::InvAck, m.requester, false);
      return r;
    case MsgKind::FwdGetS:
      switch (s) {
        case State::M: case State::E: line.state = State::S; break;
        case State::MI_A: line.state = State::SI_A; break;
        // IS_D: an exclusive grant whose data has not arrived yet.
        case State::IS_D: case State::IS_D_I: case State::IM_AD: case State::IM_A: case State::SM_AD:
        case State::SM_A:
          r.stalled = true;
          return r;
        default: r.error = "FwdGetS to non-owner"; return r;
      }
      reply(MsgKind::Data, m.requester, true);
      reply(MsgKind::Data, kDirectory, true);
      return r;
    case MsgKind::FwdGetM:
      switch (s) {
        case State::M: case State::E: line.state = State::I; break;
        case State::MI_A: line.state = State::II_A; break;
        case State::IS_D: case State::IS_D_I: case State::IM_AD: case State::IM_A: case State::SM_AD:
        case State::SM_A:
          r.stalled = true;
          return r;
        default: r.error = "FwdGetM to non-owner"; return r;
      }
      reply(MsgKind::Data, m.requester, true);
      return r;
    case MsgKind::WBAck:
      if (s != State::MI_A && s != State::SI_A && s != State::II_A) {
        r.error = "WBAck without writeback";
        return r;
      }
      line.state = State::I;
      return r;
    case MsgKind::Data:
      switch (s) {
        case State::IS_D_I:
          if (!m.exclusive) {
            line.state = State::I;
            r.completion = Completion::ReadOnce;
            r.read_data = m.data;
            return r;
          }
          // An exclusive grant postdates any invalidation seen while waiting:
          // that Inv targeted a copy this cache had already dropped.
          [[fallthrough]];
        case State::IS_D:
          line.data = m.data;
          line.state = m.exclusive ? State::E : State::S;
          r.completion = Completion::ReadDone;
          r.read_data = line.data;
          return r;
        case State::IM_AD: case State::SM_AD:
          line.data = m.data;
          line.acks += m.acks;
          if (line.acks == 0) {
            line.state = State::M;
            r.completion = Completion::WriteReady;
          } else {
            line.state = s == State::IM_AD ? State::IM_A : State::SM_A;
          }
          return r;
        default: r.error = "unexpected Data"; return r;
      }
    case MsgKind::InvAck:
      switch (s) {
        case State::IM_AD: case State::SM_AD: --line.acks; return r;
        case State::IM_A: case State::SM_A:
          if (--line.acks == 0) {
            line.state = State::M;
            r.completion = Completion::WriteReady;
          }
          return r;
        default: r.error = "unexpected InvAck"; return r;
      }
    default:
      r.error = "request delivered to a cache";
      return r;
  }
}

// ---------------------------------------------------------------------------
// Directory variant: directory controller (blocking while awaiting data)
// ---------------------------------------------------------------------------

template <class Data, class Send>
Reaction<Data> directory_handle(DirEntry<Data>& e, const Message<Data>& m, Send&& send,
                                const ProtocolOptions& opt = {}) {
  using St = typename DirEntry<Data>::Status;
  Reaction<Data> r;
  auto out = [](MsgKind k, int dst, int requester) {
    Message<Data> msg;
    msg.kind = k;
    msg.src = kDirectory;
    msg.dst = dst;
    msg.requester = requester;
    return msg;
  };
  const int req = m.src;
  const std::uint32_t bit = 1u << req;
  switch (m.kind) {
    case MsgKind::GetS:
      switch (e.status) {
        case St::Uncached: {
          auto d = out(MsgKind::Data, req, req);
          d.exclusive = true;
          d.data = e.home;
          send(d);
          e.status = St::Modified;
          e.owner = req;
          return r;
        }
        case St::Shared: {
          auto d = out(MsgKind::Data, req, req);
          d.data = e.home;
          send(d);
          e.sharers |= bit;
          return r;
        }
        case St::Modified:
          if (e.owner == req) {
            r.error = "GetS from current owner";
            return r;
          }
          send(out(MsgKind::FwdGetS, e.owner, req));
          e.sharers = bit | (1u << e.owner);
          e.owner = -1;
          e.status = St::SharedAwaitData;
          return r;
        case St::SharedAwaitData:
          r.stalled = true;
          return r;
      }
      break;
    case MsgKind::GetM:
      switch (e.status) {
        case St::Uncached: {
          auto d = out(MsgKind::Data, req, req);
          d.data = e.home;
          send(d);
          e.status = St::Modified;
          e.owner = req;
          return r;
        }
        case St::Shared: {
          const std::uint32_t others = opt.suppress_invalidation ? 0 : (e.sharers & ~bit);
          auto d = out(MsgKind::Data, req, req);
          d.data = e.home;
          d.acks = std::popcount(others);
          send(d);
          for (int c = 0; c < 32; ++c)
            if (others & (1u << c)) send(out(MsgKind::Inv, c, req));
          e.sharers = 0;
          e.owner = req;
          e.status = St::Modified;
          return r;
        }
        case St::Modified:
          if (e.owner == req) {
            r.error = "GetM from current owner";
            return r;
          }
          send(out(MsgKind::FwdGetM, e.owner, req));
          e.owner = req;
          return r;
        case St::SharedAwaitData:
          r.stalled = true;
          return r;
      }
      break;
    case MsgKind::PutM:
      if (e.status == St::Modified && e.owner == req) {
        e.home = m.data;
        e.status = St::Uncached;
        e.owner = -1;
      } else {
        e.sharers &= ~bit;  // stale writeback from a former owner
      }
      send(out(MsgKind::WBAck, req, req));
      return r;
    case MsgKind::Data:
      if (e.status != St::SharedAwaitData) {
        r.error = "unexpected Data at directory";
        return r;
      }
      e.home = m.data;
      e.status = St::Shared;
      return r;
    default:
      r.error = "forward-class message delivered to directory";
      return r;
  }
  return r;
}

/// Directory-entry invariants: Modified has exactly one owner and no sharers;
/// Shared has at least one sharer.
template <class Data>
bool directory_entry_valid(const DirEntry<Data>& e) {
  using St = typename DirEntry<Data>::Status;
  switch (e.status) {
    case St::Uncached: return e.owner < 0 && e.sharers == 0;
    case St::Shared: return e.owner < 0 && e.sharers != 0;
    case St::Modified: return e.owner >= 0 && e.sharers == 0;
    case St::SharedAwaitData: return e.owner < 0 && e.sharers != 0;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Snoopy variant: atomic ordered bus
// ---------------------------------------------------------------------------

/// Core-side request; on Issued the caller queues a bus transaction of kind
/// `bus_kind_for(line.state)`.
template <class Data>
RequestResult snoopy_cache_request(Line<Data>& line, CoreOp op) {
  const State s = line.state;
  if (!is_stable(s)) return RequestResult::Stall;
  switch (op) {
    case CoreOp::Read:
      if (is_readable(s)) return RequestResult::Hit;
      line.state = State::IS_AD;
      return RequestResult::Issued;
    case CoreOp::Write:
      if (s == State::M) return RequestResult::Hit;
      if (s == State::E) {
        line.state = State::M;
        return RequestResult::Hit;
      }
      line.state = s == State::S ? State::SM_AD : State::IM_AD;
      return RequestResult::Issued;
    case CoreOp::Evict:
      if (s == State::M) {
        line.state = State::MI_A;
        return RequestResult::Issued;
      }
      line.state = State::I;
      return RequestResult::Silent;
  }
  return RequestResult::Stall;
}

inline MsgKind bus_kind_for(State s) {
  switch (s) {
    case State::IS_AD: return MsgKind::GetS;
    case State::IM_AD: case State::SM_AD: return MsgKind::GetM;
    default: return MsgKind::PutM;
  }
}

template <class Data>
struct SnoopResult {
  bool supplied = false;    // this controller provided the block
  bool shared = false;      // asserts the shared line: keeps a valid copy
  bool writeback = false;   // home must be updated with the supplied data
  bool cancelled_putm = false;  // its own queued PutM is now void
  Data data{};
};

/// A controller observes another controller's bus transaction.
template <class Data>
SnoopResult<Data> snoop_handle(Line<Data>& line, MsgKind kind, const ProtocolOptions& opt = {}) {
  SnoopResult<Data> r;
  const State s = line.state;
  if (kind == MsgKind::GetS) {
    switch (s) {
      case State::S: case State::SM_AD: r.shared = true; break;
      case State::E: line.state = State::S; r.shared = true; break;
      case State::M:
        r.supplied = r.writeback = r.shared = true;
        r.data = line.data;
        line.state = State::S;
        break;
      case State::MI_A:
        r.supplied = r.writeback = r.cancelled_putm = true;
        r.data = line.data;
        line.state = State::I;
        break;
      default: break;
    }
  } else if (kind == MsgKind::GetM) {
    switch (s) {
      case State::S:
        if (!opt.suppress_invalidation) line.state = State::I;
        break;
      case State::SM_AD:
        if (!opt.suppress_invalidation) line.state = State::IM_AD;
        break;
      case State::E: line.state = State::I; break;
      case State::M:
        r.supplied = true;
        r.data = line.data;
        line.state = State::I;
        break;
      case State::MI_A:
        r.supplied = r.cancelled_putm = true;
        r.data = line.data;
        line.state = State::I;
        break;
      default: break;
    }
  }
  return r;
}

template <class Data>
struct BusOutcome {
  Completion completion = Completion::None;
  std::optional<Data> read_data;
  bool from_cache = false;  // data came from another controller
};

/// Requester side of an atomic bus transaction once every other controller
/// has snooped. `supplied` is the data provided by a peer, if any.
template <class Data>
BusOutcome<Data> snoopy_own_transaction(Line<Data>& line, MsgKind kind, Data& home,
                                        const std::optional<Data>& supplied, bool any_shared) {
  BusOutcome<Data> o;
  o.from_cache = supplied.has_value();
  switch (kind) {
    case MsgKind::GetS:
      if (line.state != State::IS_AD) return o;
      line.data = supplied ? *supplied : home;
      line.state = any_shared ? State::S : State::E;
      o.completion = Completion::ReadDone;
      o.read_data = line.data;
      return o;
    case MsgKind::GetM:
      if (line.state != State::IM_AD && line.state != State::SM_AD) return o;
      line.data = supplied ? *supplied : (line.state == State::SM_AD ? line.data : home);
      line.state = State::M;
      o.completion = Completion::WriteReady;
      return o;
    case MsgKind::PutM:
      if (line.state == State::MI_A) {
        home = line.data;
        line.state = State::I;
      }
      return o;
    default:
      return o;
  }
}

}  // namespace mcsim::coherence
