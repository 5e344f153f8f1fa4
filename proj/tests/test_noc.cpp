#include <cstdlib>
#include <map>
#include <set>

#include "doctest.h"
#include "mcsim/noc.hpp"
#include "mcsim/rng.hpp"

using namespace mcsim;
using namespace mcsim::noc;

namespace {

std::set<std::pair<int, int>> link_set(const Topology& t) {
  std::set<std::pair<int, int>> s;
  for (const auto& l : t.links()) s.insert({l.from, l.to});
  return s;
}

// Runs until `id` is delivered; returns the delivery cycle.
Cycle run_until(Network& net, std::uint64_t id, std::map<std::uint64_t, Cycle>& seen) {
  for (int i = 0; i < 1000 && !seen.count(id); ++i)
    for (const auto& d : net.deliver_cycle()) seen[d.packet.payload] = d.cycle;
  return seen.at(id);
}

}  // namespace

TEST_CASE("topology construction") {
  auto mesh = Topology::build(TopologyKind::Mesh, 2, 2);
  CHECK(mesh.num_nodes() == 4);
  CHECK(mesh.links().size() == 8);

  auto ring1 = Topology::build(TopologyKind::Ring, 1);
  CHECK(ring1.links().empty());

  auto torus = Topology::build(TopologyKind::Torus, 4, 1);
  auto ring = Topology::build(TopologyKind::Ring, 4);
  CHECK(link_set(torus) == link_set(ring));
  CHECK(ring.links().size() == 8);

  auto line = Topology::build(TopologyKind::Line, 5);
  CHECK(line.links().size() == 8);
  CHECK_THROWS_AS(Topology::build(TopologyKind::Ring, 2, 2), Error);
  CHECK_THROWS_AS(Topology::build(TopologyKind::Mesh, 0, 2), Error);
}

TEST_CASE("routing") {
  auto mesh = Topology::build(TopologyKind::Mesh, 4, 4);
  // (0,0) -> (2,1): node 6. X, X, then Y.
  CHECK(mesh.route(0, 6) == std::vector<NodeId>{1, 2, 6});
  CHECK(mesh.route(5, 5).empty());

  auto ring = Topology::build(TopologyKind::Ring, 8);
  CHECK(ring.route(0, 5) == std::vector<NodeId>{7, 6, 5});
  CHECK(ring.route(0, 4) == std::vector<NodeId>{1, 2, 3, 4});  // tie goes positive

  auto bus = Topology::build(TopologyKind::Bus, 4);
  CHECK(bus.route(0, 3) == std::vector<NodeId>{3});
  CHECK_THROWS_AS(mesh.route(0, 16), Error);
}

TEST_CASE("route length bounds") {
  for (auto kind : {TopologyKind::Mesh, TopologyKind::Torus}) {
    auto t = Topology::build(kind, 4, 3);
    for (int s = 0; s < t.num_nodes(); ++s)
      for (int d = 0; d < t.num_nodes(); ++d) {
        const auto path = t.route(s, d);
        CHECK(static_cast<int>(path.size()) <= t.diameter());
        if (kind == TopologyKind::Mesh)
          CHECK(static_cast<int>(path.size()) == std::abs(s % 4 - d % 4) + std::abs(s / 4 - d / 4));
      }
  }
}

TEST_CASE("node assignment") {
  auto mesh = Topology::build(TopologyKind::Mesh, 2, 2);
  auto m = default_node_map(mesh, 4);
  CHECK(m.core_node == std::vector<NodeId>{0, 1, 2, 3});
  CHECK(m.bank_node == std::vector<NodeId>{0, 1});
  CHECK_THROWS_AS(default_node_map(mesh, 5), Error);
}

TEST_CASE("single message latency") {
  Network net(Topology::build(TopologyKind::Mesh, 4, 4), {});
  net.inject({0, 6, 1, 42, 0});
  std::map<std::uint64_t, Cycle> seen;
  CHECK(run_until(net, 42, seen) == 3);
  CHECK(net.idle());
  CHECK(net.stats().average_latency() == 3.0);
}

TEST_CASE("contention delays one message by exactly one cycle") {
  Network net(Topology::build(TopologyKind::Mesh, 2, 2), {});
  std::map<std::uint64_t, Cycle> seen;
  net.inject({0, 3, 1, 1, 0});  // 0 -> 1 -> 3
  for (const auto& d : net.deliver_cycle()) seen[d.packet.payload] = d.cycle;
  net.inject({1, 3, 1, 2, 0});  // wants link 1 -> 3 on the same cycle as packet 1
  CHECK(run_until(net, 1, seen) == 2);
  CHECK(run_until(net, 2, seen) == 3);  // uncontended it would arrive at 2

  Network alone(Topology::build(TopologyKind::Mesh, 2, 2), {});
  alone.deliver_cycle();
  alone.inject({1, 3, 1, 2, 0});
  std::map<std::uint64_t, Cycle> s2;
  CHECK(run_until(alone, 2, s2) == 2);
}

TEST_CASE("bus grants one transaction per round, same order everywhere") {
  Network net(Topology::build(TopologyKind::Bus, 4), {});
  net.inject({2, 0, 1, 20, 0});
  net.inject({1, 0, 1, 10, 0});
  std::vector<std::uint64_t> order;
  std::vector<Cycle> when;
  for (int i = 0; i < 10; ++i)
    for (const auto& d : net.deliver_cycle()) {
      order.push_back(d.packet.payload);
      when.push_back(d.cycle);
    }
  REQUIRE(order.size() == 2);
  CHECK(order == std::vector<std::uint64_t>{10, 20});  // round-robin starts at node 0
  CHECK(when[0] < when[1]);
}

TEST_CASE("no loss and point-to-point order under random load") {
  auto topo = Topology::build(TopologyKind::Torus, 3, 3);
  Network net(topo, {2, 2, 1});
  std::mt19937_64 rng(5);
  std::map<std::pair<int, int>, std::vector<std::uint64_t>> sent, got;
  std::uint64_t id = 0;
  for (int cycle = 0; cycle < 300; ++cycle) {
    if (cycle < 200)
      for (int k = 0; k < 3; ++k) {
        Packet p;
        p.src = static_cast<int>(draw_below(rng, 9));
        p.dst = static_cast<int>(draw_below(rng, 9));
        p.size = 1 + static_cast<int>(draw_below(rng, 2));
        p.payload = ++id;
        sent[{p.src, p.dst}].push_back(id);
        net.inject(p);
      }
    for (const auto& d : net.deliver_cycle()) got[{d.packet.src, d.packet.dst}].push_back(d.packet.payload);
  }
  for (int i = 0; i < 5000 && !net.idle(); ++i)
    for (const auto& d : net.deliver_cycle()) got[{d.packet.src, d.packet.dst}].push_back(d.packet.payload);
  CHECK(net.idle());
  CHECK(net.stats().delivered == net.stats().injected);
  CHECK(got == sent);
}
