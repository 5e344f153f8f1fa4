#include <algorithm>
#include <vector>

#include "doctest.h"
#include "mcsim/protocol_check.hpp"

using namespace mcsim;
using namespace mcsim::coherence;

namespace {

using Msg = Message<int>;

struct Outbox {
  std::vector<Msg> sent;
  void operator()(const Msg& m) { sent.push_back(m); }
  int count(MsgKind k) const {
    return static_cast<int>(std::count_if(sent.begin(), sent.end(), [&](const Msg& m) { return m.kind == k; }));
  }
};

Msg msg(MsgKind k, int src, int dst, int requester = 0) {
  Msg m;
  m.kind = k;
  m.src = src;
  m.dst = dst;
  m.requester = requester;
  return m;
}

}  // namespace

TEST_CASE("snooping controller") {
  Line<int> s{State::S, 5, 0};
  snoop_handle(s, MsgKind::GetM);
  CHECK(s.state == State::I);

  Line<int> m{State::M, 9, 0};
  auto r = snoop_handle(m, MsgKind::GetS);
  CHECK(m.state == State::S);
  CHECK(r.supplied);
  CHECK(r.writeback);
  CHECK(r.data == 9);

  for (auto k : {MsgKind::GetS, MsgKind::GetM, MsgKind::PutM}) {
    Line<int> i;
    auto ri = snoop_handle(i, k);
    CHECK(i.state == State::I);
    CHECK_FALSE(ri.supplied);
    CHECK_FALSE(ri.shared);
  }
}

TEST_CASE("snoopy requester side") {
  Line<int> l;
  CHECK(snoopy_cache_request(l, CoreOp::Read) == RequestResult::Issued);
  CHECK(l.state == State::IS_AD);
  int home = 4;
  auto o = snoopy_own_transaction<int>(l, MsgKind::GetS, home, std::nullopt, false);
  CHECK(l.state == State::E);  // only valid copy
  CHECK(o.completion == Completion::ReadDone);
  CHECK(*o.read_data == 4);
  CHECK(snoopy_cache_request(l, CoreOp::Write) == RequestResult::Hit);
  CHECK(l.state == State::M);
  CHECK(snoopy_cache_request(l, CoreOp::Evict) == RequestResult::Issued);
  CHECK(l.state == State::MI_A);
}

TEST_CASE("directory handling") {
  using St = DirEntry<int>::Status;
  SUBCASE("first touch") {
    DirEntry<int> e;
    e.home = 3;
    Outbox out;
    directory_handle(e, msg(MsgKind::GetS, 2, kDirectory), out);
    REQUIRE(out.sent.size() == 1);
    CHECK(out.sent[0].kind == MsgKind::Data);
    CHECK(out.sent[0].dst == 2);
    CHECK(out.sent[0].exclusive);
    CHECK(out.sent[0].data == 3);
    CHECK(e.owner == 2);  // tracked as the exclusive holder
    CHECK(directory_entry_valid(e));
  }
  SUBCASE("GetM to a shared block") {
    DirEntry<int> e;
    e.status = St::Shared;
    e.sharers = (1u << 1) | (1u << 3);
    Outbox out;
    directory_handle(e, msg(MsgKind::GetM, 0, kDirectory), out);
    CHECK(out.count(MsgKind::Inv) == 2);
    CHECK(out.count(MsgKind::Data) == 1);
    for (const auto& m : out.sent) {
      if (m.kind == MsgKind::Inv) CHECK((m.dst == 1 || m.dst == 3));
      if (m.kind == MsgKind::Data) {
        CHECK(m.dst == 0);
        CHECK(m.acks == 2);
      }
    }
    CHECK(e.status == St::Modified);
    CHECK(e.owner == 0);
    CHECK(e.sharers == 0);

    // Requester waits for both acknowledgements before writing.
    Line<int> req{State::IM_AD, 0, 0};
    Outbox unused;
    Msg data = msg(MsgKind::Data, kDirectory, 0);
    data.acks = 2;
    CHECK(dir_cache_receive(req, data, 0, unused).completion == Completion::None);
    CHECK(req.state == State::IM_A);
    CHECK(dir_cache_receive(req, msg(MsgKind::InvAck, 1, 0), 0, unused).completion == Completion::None);
    CHECK(dir_cache_receive(req, msg(MsgKind::InvAck, 3, 0), 0, unused).completion == Completion::WriteReady);
    CHECK(req.state == State::M);
  }
  SUBCASE("GetM to a modified block") {
    DirEntry<int> e;
    e.status = St::Modified;
    e.owner = 1;
    Outbox out;
    directory_handle(e, msg(MsgKind::GetM, 0, kDirectory), out);
    REQUIRE(out.sent.size() == 1);
    CHECK(out.sent[0].kind == MsgKind::FwdGetM);
    CHECK(out.sent[0].dst == 1);
    CHECK(e.owner == 0);

    Line<int> owner{State::M, 77, 0};
    Outbox o2;
    dir_cache_receive(owner, out.sent[0], 1, o2);
    CHECK(owner.state == State::I);
    REQUIRE(o2.sent.size() == 1);
    CHECK(o2.sent[0].kind == MsgKind::Data);
    CHECK(o2.sent[0].dst == 0);
    CHECK(o2.sent[0].data == 77);
  }
  SUBCASE("requests wait while data is outstanding") {
    DirEntry<int> e;
    e.status = St::Modified;
    e.owner = 1;
    Outbox out;
    directory_handle(e, msg(MsgKind::GetS, 0, kDirectory), out);
    CHECK(e.status == St::SharedAwaitData);
    CHECK(directory_handle(e, msg(MsgKind::GetM, 2, kDirectory), out).stalled);
    Msg wb = msg(MsgKind::Data, 1, kDirectory);
    wb.data = 8;
    directory_handle(e, wb, out);
    CHECK(e.status == St::Shared);
    CHECK(e.home == 8);
    CHECK(e.sharers == 3u);
  }
}

TEST_CASE("evictions") {
  Outbox out;
  Line<int> m{State::M, 6, 0};
  CHECK(dir_cache_request(m, CoreOp::Evict, 0, out) == RequestResult::Issued);
  REQUIRE(out.sent.size() == 1);
  CHECK(out.sent[0].kind == MsgKind::PutM);
  CHECK(out.sent[0].data == 6);

  Outbox none;
  Line<int> s{State::S, 6, 0};
  CHECK(dir_cache_request(s, CoreOp::Evict, 0, none) == RequestResult::Silent);
  CHECK(none.sent.empty());
  CHECK(s.state == State::I);

  // Stale invalidation for the silently dropped copy is still acknowledged.
  dir_cache_receive(s, msg(MsgKind::Inv, kDirectory, 0, 2), 0, none);
  REQUIRE(none.sent.size() == 1);
  CHECK(none.sent[0].kind == MsgKind::InvAck);
  CHECK(none.sent[0].dst == 2);
}

TEST_CASE("exhaustive check, one core") {
  for (auto v : {Variant::Snoopy, Variant::Directory}) {
    CheckConfig c;
    c.variant = v;
    c.cores = 1;
    auto r = check_protocol(c);
    CHECK(r.ok());
    // A lone reader is always granted E, so S never appears with one cache.
    for (auto s : {State::I, State::E, State::M}) CHECK(r.reachable_states.count(s) == 1);
    CHECK(r.reachable_states.count(State::S) == 0);
  }
}

TEST_CASE("exhaustive check, two cores") {
  for (auto v : {Variant::Snoopy, Variant::Directory}) {
    CAPTURE(to_string(v));
    CheckConfig c;
    c.variant = v;
    c.cores = 2;
    auto r = check_protocol(c);
    for (const auto& s : r.violations) MESSAGE(s);
    for (const auto& s : r.counterexample) MESSAGE(s);
    CHECK(r.ok());
    CHECK(r.states > 10);
    for (auto s : {State::I, State::S, State::E, State::M}) CHECK(r.reachable_states.count(s) == 1);
  }
}

TEST_CASE("mutated table is caught") {
  for (auto v : {Variant::Snoopy, Variant::Directory}) {
    CheckConfig c;
    c.variant = v;
    c.cores = 2;
    c.options.suppress_invalidation = true;
    auto r = check_protocol(c);
    CHECK_FALSE(r.ok());
    const bool swmr = std::any_of(r.violations.begin(), r.violations.end(),
                                  [](const std::string& s) { return s.rfind("SWMR", 0) == 0; });
    CHECK(swmr);
    CHECK_FALSE(r.counterexample.empty());
  }
}
