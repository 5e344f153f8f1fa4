#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "mcsim/coherence.hpp"

namespace mcsim::coherence {

struct CheckConfig {
  Variant variant = Variant::Directory;
  int cores = 2;
  ProtocolOptions options;
  int value_domain = 3;  // written values cycle modulo this
  std::size_t max_states = 4'000'000;
};

struct CheckReport {
  std::size_t states = 0;
  std::size_t transitions = 0;
  bool complete = true;  // false when max_states cut the search short
  std::size_t deadlock_states = 0;  // states that cannot reach quiescence
  std::vector<std::string> violations;     // first violation of each kind
  std::vector<std::string> counterexample; // event trace to the first violation
  std::set<State> reachable_states;        // over all caches

  bool ok() const { return complete && violations.empty() && deadlock_states == 0; }
};

/// Exhaustive breadth-first exploration of one block shared by `cores` caches.
/// Events: core read/write/evict, delivery of the head of any (src, dst,
/// vnet) channel (directory), or a bus grant (snoopy). Checks SWMR, the data
/// value invariant, directory-entry invariants and protocol errors in every
/// state, then verifies every state can reach a quiescent one.
CheckReport check_protocol(const CheckConfig& config);

}  // namespace mcsim::coherence
