#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcsim/types.hpp"

namespace mcsim::noc {

enum class TopologyKind { Bus, Line, Ring, Mesh, Torus };

std::string_view to_string(TopologyKind k);
TopologyKind parse_topology_kind(std::string_view s);

struct Link {
  NodeId from;
  NodeId to;
};

/// Switch-level interconnect. Nodes are numbered row-major; node n sits at
/// column n % cols, row n / cols. Line and ring are single-row.
class Topology {
 public:
  static Topology build(TopologyKind kind, int cols, int rows = 1);

  TopologyKind kind() const { return kind_; }
  int cols() const { return cols_; }
  int rows() const { return rows_; }
  int num_nodes() const { return cols_ * rows_; }
  const std::vector<Link>& links() const { return links_; }
  std::optional<int> link_index(NodeId from, NodeId to) const;

  /// Nodes visited after `src`, ending at `dst`; empty when src == dst.
  /// Mesh/line: X then Y. Torus/ring: per dimension the shorter way round,
  /// ties going positive. Bus: the single hop across the medium.
  std::vector<NodeId> route(NodeId src, NodeId dst) const;

  int diameter() const;

 private:
  TopologyKind kind_ = TopologyKind::Mesh;
  int cols_ = 1;
  int rows_ = 1;
  std::vector<Link> links_;
  std::map<std::pair<NodeId, NodeId>, int> index_;

  bool wraps() const { return kind_ == TopologyKind::Ring || kind_ == TopologyKind::Torus; }
  void add_link(NodeId a, NodeId b);
};

/// Which network node hosts each core and each last-level-cache bank.
struct NodeMap {
  std::vector<NodeId> core_node;
  std::vector<NodeId> bank_node;
};

/// Cores on nodes 0..cores-1. Mesh/torus default to one bank per column,
/// placed on the first row; other kinds spread `banks` evenly.
NodeMap default_node_map(const Topology& topo, int cores, int banks = 0);
void validate_node_map(const Topology& topo, const NodeMap& map);

struct NetworkConfig {
  int link_latency = 1;
  int queue_depth = 4;
  int ni_latency = 0;  // network-interface injection delay
};

struct Packet {
  NodeId src = 0;
  NodeId dst = 0;          // ignored on the bus: every node observes
  int size = 1;            // link-width units
  std::uint64_t payload = 0;
  Cycle injected = 0;
};

struct Delivery {
  Packet packet;
  Cycle cycle;
};

struct NetworkStats {
  std::uint64_t injected = 0;
  std::uint64_t delivered = 0;
  std::uint64_t total_latency = 0;
  std::uint64_t max_latency = 0;
  std::vector<std::uint64_t> link_busy;        // cycles each link spent transmitting
  std::map<std::uint64_t, std::uint64_t> latency_histogram;  // bucket upper bound -> count
  Cycle cycles = 0;

  double average_latency() const {
    return delivered ? static_cast<double>(total_latency) / static_cast<double>(delivered) : 0.0;
  }
};

/// Message-level network: per-link FIFO queues of bounded depth, one packet
/// per link per cycle, backpressure instead of drops. In bus mode a single
/// arbiter grants one packet per round and all nodes observe it in grant order.
class Network {
 public:
  Network(Topology topo, NetworkConfig config);

  void inject(const Packet& p);
  /// Advances one cycle and returns the packets that arrived during it, in
  /// arrival order.
  std::vector<Delivery> deliver_cycle();

  /// Bus mode: keeps the medium busy for `cycles` more after the current grant.
  void hold_bus(int cycles);

  bool idle() const;
  Cycle now() const { return now_; }
  const Topology& topology() const { return topo_; }
  const NetworkConfig& config() const { return config_; }
  const NetworkStats& stats() const { return stats_; }

 private:
  struct Flight {
    Packet packet;
    std::vector<NodeId> path;
    std::size_t hop = 0;  // index into path of the node being travelled to
    Cycle arrive = 0;
    Cycle eligible = 0;
  };
  struct LinkState {
    std::deque<Flight> queue;
    std::deque<Flight> transit;
    Cycle next_free = 0;
  };

  void record(const Flight& f, std::vector<Delivery>& out);
  std::vector<Delivery> bus_cycle();

  Topology topo_;
  NetworkConfig config_;
  Cycle now_ = 0;
  std::vector<LinkState> links_;
  std::vector<std::deque<Flight>> injection_;
  std::deque<Flight> local_;  // src == dst
  // bus
  int bus_rr_ = 0;
  Cycle bus_free_ = 0;
  NetworkStats stats_;
};

}  // namespace mcsim::noc
