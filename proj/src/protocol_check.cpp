#include "mcsim/protocol_check.hpp"

#include <algorithm>
#include <deque>
#include <unordered_map>

namespace mcsim::coherence {

std::string_view to_string(State s) {
  switch (s) {
    case State::I: return "I";
    case State::S: return "S";
    case State::E: return "E";
    case State::M: return "M";
    case State::IS_D: return "IS_D";
    case State::IS_D_I: return "IS_D_I";
    case State::IM_AD: return "IM_AD";
    case State::IM_A: return "IM_A";
    case State::SM_AD: return "SM_AD";
    case State::SM_A: return "SM_A";
    case State::MI_A: return "MI_A";
    case State::SI_A: return "SI_A";
    case State::II_A: return "II_A";
    case State::IS_AD: return "IS_AD";
  }
  return "?";
}

std::string_view to_string(Variant v) { return v == Variant::Snoopy ? "snoopy" : "directory"; }

Variant parse_variant(std::string_view s) {
  if (s == "snoopy") return Variant::Snoopy;
  if (s == "directory") return Variant::Directory;
  throw Error("unknown coherence variant '" + std::string(s) + "'");
}

std::string_view to_string(MsgKind k) {
  switch (k) {
    case MsgKind::GetS: return "GetS";
    case MsgKind::GetM: return "GetM";
    case MsgKind::PutM: return "PutM";
    case MsgKind::Inv: return "Inv";
    case MsgKind::InvAck: return "InvAck";
    case MsgKind::Data: return "Data";
    case MsgKind::FwdGetS: return "FwdGetS";
    case MsgKind::FwdGetM: return "FwdGetM";
    case MsgKind::WBAck: return "WBAck";
  }
  return "?";
}

std::string_view dir_status_name(int status) {
  static constexpr std::string_view names[] = {"Uncached", "Shared", "Modified", "Shared_D"};
  return status >= 0 && status < 4 ? names[status] : "?";
}

namespace {

using Val = std::uint8_t;
using Msg = Message<Val>;

struct Sys {
  std::vector<Line<Val>> lines;
  DirEntry<Val> dir;
  Val ghost = 0;
  std::vector<std::vector<Msg>> channels;  // directory variant only
};

class Explorer {
 public:
  explicit Explorer(const CheckConfig& cfg) : cfg_(cfg), n_(cfg.cores) {
    if (n_ < 1 || n_ > 3) throw Error("check_protocol: cores must be in [1, 3]");
    if (cfg.value_domain < 2 || cfg.value_domain > 16) throw Error("check_protocol: value domain must be in [2, 16]");
  }

  CheckReport run();

 private:
  struct Event {
    enum Kind : std::uint8_t { Read, Write, Evict, Deliver, Grant } kind;
    std::uint8_t core = 0;
    std::uint16_t channel = 0;
  };

  int endpoint(int id) const { return id == kDirectory ? n_ : id; }
  int channel_of(const Msg& m) const {
    return (endpoint(m.src) * (n_ + 1) + endpoint(m.dst)) * 3 + static_cast<int>(vnet_of(m.kind));
  }
  int num_channels() const { return (n_ + 1) * (n_ + 1) * 3; }

  std::string encode(const Sys& s) const;
  Sys decode(const std::string& key) const;
  Sys initial() const;

  // Applies the event; returns false when it is not enabled.
  bool apply(Sys& s, const Event& e, std::string& error) const;
  void write_value(Sys& s, Line<Val>& line) const {
    s.ghost = static_cast<Val>((s.ghost + 1) % cfg_.value_domain);
    line.data = s.ghost;
  }
  void check(const Sys& s, std::vector<std::string>& found) const;
  bool quiescent(const Sys& s) const;
  std::string describe(const Sys& before, const Event& e) const;
  std::string render(const Sys& s) const;

  CheckConfig cfg_;
  int n_;
};

std::string Explorer::encode(const Sys& s) const {
  std::string k;
  k.push_back(static_cast<char>(s.ghost));
  k.push_back(static_cast<char>(s.dir.status));
  k.push_back(static_cast<char>(s.dir.sharers));
  k.push_back(static_cast<char>(s.dir.owner + 1));
  k.push_back(static_cast<char>(s.dir.home));
  for (const auto& l : s.lines) {
    k.push_back(static_cast<char>(l.state));
    k.push_back(static_cast<char>(l.data));
    k.push_back(static_cast<char>(l.acks + 64));
  }
  for (std::size_t c = 0; c < s.channels.size(); ++c) {
    if (s.channels[c].empty()) continue;
    k.push_back(static_cast<char>(c));
    k.push_back(static_cast<char>(s.channels[c].size()));
    for (const auto& m : s.channels[c]) {
      k.push_back(static_cast<char>(m.kind));
      k.push_back(static_cast<char>(m.src + 1));
      k.push_back(static_cast<char>(m.dst + 1));
      k.push_back(static_cast<char>(m.requester + 1));
      k.push_back(static_cast<char>(m.acks));
      k.push_back(static_cast<char>(m.exclusive));
      k.push_back(static_cast<char>(m.data));
    }
  }
  return k;
}

Sys Explorer::decode(const std::string& k) const {
  auto at = [&](std::size_t i) { return static_cast<unsigned char>(k[i]); };
  Sys s;
  std::size_t i = 0;
  s.ghost = at(i++);
  s.dir.status = static_cast<DirEntry<Val>::Status>(at(i++));
  s.dir.sharers = at(i++);
  s.dir.owner = at(i++) - 1;
  s.dir.home = at(i++);
  s.lines.resize(static_cast<std::size_t>(n_));
  for (auto& l : s.lines) {
    l.state = static_cast<State>(at(i++));
    l.data = at(i++);
    l.acks = at(i++) - 64;
  }
  if (cfg_.variant == Variant::Directory) s.channels.resize(static_cast<std::size_t>(num_channels()));
  while (i < k.size()) {
    auto& ch = s.channels[at(i++)];
    const int count = at(i++);
    for (int j = 0; j < count; ++j) {
      Msg m;
      m.kind = static_cast<MsgKind>(at(i++));
      m.src = at(i++) - 1;
      m.dst = at(i++) - 1;
      m.requester = at(i++) - 1;
      m.acks = at(i++);
      m.exclusive = at(i++) != 0;
      m.data = at(i++);
      ch.push_back(m);
    }
  }
  return s;
}

Sys Explorer::initial() const {
  Sys s;
  s.lines.resize(static_cast<std::size_t>(n_));
  if (cfg_.variant == Variant::Directory) s.channels.resize(static_cast<std::size_t>(num_channels()));
  return s;
}

bool Explorer::apply(Sys& s, const Event& e, std::string& error) const {
  auto send = [&](const Msg& m) { s.channels[static_cast<std::size_t>(channel_of(m))].push_back(m); };
  auto complete = [&](Line<Val>& line, const Reaction<Val>& r) {
    if (r.error) error = r.error;
    if (r.completion == Completion::ReadDone && r.read_data && *r.read_data != s.ghost)
      error = "data-value: read returned a stale value";
    if (r.completion == Completion::WriteReady) write_value(s, line);
  };

  if (e.kind == Event::Deliver) {
    auto& ch = s.channels[e.channel];
    if (ch.empty()) return false;
    const Msg m = ch.front();
    if (m.dst == kDirectory) {
      auto r = directory_handle(s.dir, m, send, cfg_.options);
      if (r.stalled) return false;
      if (r.error) error = r.error;
    } else {
      auto& line = s.lines[static_cast<std::size_t>(m.dst)];
      const Line<Val> before = line;
      auto r = dir_cache_receive(line, m, m.dst, send);
      if (r.stalled) {
        line = before;
        return false;
      }
      complete(line, r);
    }
    ch.erase(ch.begin());
    return true;
  }

  auto& line = s.lines[e.core];
  if (e.kind == Event::Grant) {
    if (cfg_.variant != Variant::Snoopy || is_stable(line.state)) return false;
    const MsgKind kind = bus_kind_for(line.state);
    std::optional<Val> supplied;
    bool shared = false;
    for (int c = 0; c < n_; ++c) {
      if (c == e.core) continue;
      auto r = snoop_handle(s.lines[static_cast<std::size_t>(c)], kind, cfg_.options);
      if (r.supplied) supplied = r.data;
      if (r.writeback) s.dir.home = r.data;
      shared = shared || r.shared;
    }
    auto o = snoopy_own_transaction(line, kind, s.dir.home, supplied, shared);
    if (o.completion == Completion::ReadDone && o.read_data && *o.read_data != s.ghost)
      error = "data-value: read returned a stale value";
    if (o.completion == Completion::WriteReady) write_value(s, line);
    return true;
  }

  const CoreOp op = e.kind == Event::Read ? CoreOp::Read : e.kind == Event::Write ? CoreOp::Write : CoreOp::Evict;
  const Line<Val> before = line;
  RequestResult res;
  if (cfg_.variant == Variant::Directory) {
    res = dir_cache_request(line, op, e.core, send);
  } else {
    res = snoopy_cache_request(line, op);
  }
  switch (res) {
    case RequestResult::Stall: return false;
    case RequestResult::Hit:
      if (op == CoreOp::Read) {
        if (line.data != s.ghost) error = "data-value: hit returned a stale value";
        return false;  // no state change worth exploring
      }
      write_value(s, line);
      return true;
    case RequestResult::Silent: return line.state != before.state;
    case RequestResult::Issued: return true;
  }
  return false;
}

void Explorer::check(const Sys& s, std::vector<std::string>& found) const {
  int owners = 0, readers = 0;
  for (const auto& l : s.lines) {
    if (l.state == State::E || l.state == State::M) ++owners;
    if (l.state == State::S) ++readers;
    if (is_readable(l.state) && l.data != s.ghost) found.push_back("data-value: stable copy differs from latest write");
  }
  if (owners > 1 || (owners == 1 && readers > 0)) found.push_back("SWMR: concurrent writer and other valid copy");
  if (cfg_.variant == Variant::Directory && !directory_entry_valid(s.dir)) found.push_back("directory entry invariant");
}

bool Explorer::quiescent(const Sys& s) const {
  for (const auto& l : s.lines)
    if (!is_stable(l.state)) return false;
  for (const auto& ch : s.channels)
    if (!ch.empty()) return false;
  return s.dir.status != DirEntry<Val>::Status::SharedAwaitData;
}

std::string Explorer::render(const Sys& s) const {
  std::string out = "[";
  for (int c = 0; c < n_; ++c) {
    if (c) out += ' ';
    out += "c" + std::to_string(c) + "=" + std::string(to_string(s.lines[static_cast<std::size_t>(c)].state));
  }
  if (cfg_.variant == Variant::Directory) out += " dir=" + std::string(dir_status_name(static_cast<int>(s.dir.status)));
  return out + "]";
}

std::string Explorer::describe(const Sys& before, const Event& e) const {
  switch (e.kind) {
    case Event::Read: return "core " + std::to_string(e.core) + " read";
    case Event::Write: return "core " + std::to_string(e.core) + " write";
    case Event::Evict: return "core " + std::to_string(e.core) + " evict";
    case Event::Grant:
      return "bus grant " + std::string(to_string(bus_kind_for(before.lines[e.core].state))) + " from core " +
             std::to_string(e.core);
    case Event::Deliver: {
      const auto& m = before.channels[e.channel].front();
      auto name = [](int id) { return id == kDirectory ? std::string("dir") : "core " + std::to_string(id); };
      return "deliver " + std::string(to_string(m.kind)) + " " + name(m.src) + " -> " + name(m.dst);
    }
  }
  return "?";
}

CheckReport Explorer::run() {
  CheckReport rep;
  std::vector<std::string> keys;
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::uint32_t> parent;
  std::vector<Event> via;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::vector<bool> is_quiescent;

  auto add = [&](const Sys& s, std::uint32_t from, const Event& e) -> std::pair<std::uint32_t, bool> {
    std::string k = encode(s);
    auto [it, fresh] = index.try_emplace(k, static_cast<std::uint32_t>(keys.size()));
    if (fresh) {
      keys.push_back(std::move(k));
      parent.push_back(from);
      via.push_back(e);
      is_quiescent.push_back(quiescent(s));
    }
    return {it->second, fresh};
  };

  std::optional<std::uint32_t> bad_state;
  auto trace_to = [&](std::uint32_t id, const std::string& last) {
    std::vector<std::string> steps;
    if (!last.empty()) steps.push_back(last);
    while (id != 0) {
      const std::uint32_t p = parent[id];
      steps.push_back(describe(decode(keys[p]), via[id]) + " " + render(decode(keys[id])));
      id = p;
    }
    std::reverse(steps.begin(), steps.end());
    return steps;
  };
  auto report = [&](const std::string& what, std::uint32_t state, const std::string& last) {
    if (std::find(rep.violations.begin(), rep.violations.end(), what) != rep.violations.end()) return;
    rep.violations.push_back(what);
    if (!bad_state) {
      bad_state = state;
      rep.counterexample = trace_to(state, last);
    }
  };

  add(initial(), 0, Event{Event::Read, 0, 0});
  std::deque<std::uint32_t> frontier{0};
  while (!frontier.empty()) {
    const std::uint32_t id = frontier.front();
    frontier.pop_front();
    const Sys cur = decode(keys[id]);
    for (const auto& l : cur.lines) rep.reachable_states.insert(l.state);
    std::vector<std::string> found;
    check(cur, found);
    for (const auto& f : found) report(f, id, "");

    std::vector<Event> events;
    for (int c = 0; c < n_; ++c) {
      const auto core = static_cast<std::uint8_t>(c);
      events.push_back({Event::Read, core, 0});
      events.push_back({Event::Write, core, 0});
      events.push_back({Event::Evict, core, 0});
      if (cfg_.variant == Variant::Snoopy) events.push_back({Event::Grant, core, 0});
    }
    for (std::size_t ch = 0; ch < cur.channels.size(); ++ch)
      if (!cur.channels[ch].empty()) events.push_back({Event::Deliver, 0, static_cast<std::uint16_t>(ch)});

    for (const auto& e : events) {
      Sys next = cur;
      std::string error;
      const bool enabled = apply(next, e, error);
      if (!error.empty()) {
        report(error, id, describe(cur, e));
        continue;
      }
      if (!enabled) continue;
      ++rep.transitions;
      if (keys.size() >= cfg_.max_states && !index.count(encode(next))) {
        rep.complete = false;
        continue;
      }
      auto [to, fresh] = add(next, id, e);
      edges.emplace_back(id, to);
      if (fresh) frontier.push_back(to);
    }
  }
  rep.states = keys.size();

  // Every state must be able to reach a quiescent state.
  std::vector<std::vector<std::uint32_t>> reverse(keys.size());
  for (const auto& [a, b] : edges) reverse[b].push_back(a);
  std::vector<bool> good(keys.size(), false);
  std::deque<std::uint32_t> work;
  for (std::uint32_t i = 0; i < keys.size(); ++i)
    if (is_quiescent[i]) {
      good[i] = true;
      work.push_back(i);
    }
  while (!work.empty()) {
    const auto v = work.front();
    work.pop_front();
    for (auto p : reverse[v])
      if (!good[p]) {
        good[p] = true;
        work.push_back(p);
      }
  }
  for (std::uint32_t i = 0; i < keys.size(); ++i) {
    if (good[i]) continue;
    ++rep.deadlock_states;
    if (rep.deadlock_states == 1) {
      rep.violations.push_back("deadlock: state cannot reach quiescence " + render(decode(keys[i])));
      if (!bad_state) {
        bad_state = i;
        rep.counterexample = trace_to(i, "");
      }
    }
  }
  return rep;
}

}  // namespace

CheckReport check_protocol(const CheckConfig& config) { return Explorer(config).run(); }

}  // namespace mcsim::coherence
