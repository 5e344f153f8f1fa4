#pragma once

// Seeded random single-thread programs for oracle tests. Only r1..r20 carry
// data; r29 is a loop counter and r30 a fixed aligned base pointer, so every
// generated program terminates and every memory access is aligned.

#include <set>
#include <sstream>
#include <string>

#include "mcsim/rng.hpp"

namespace testgen {

inline std::string random_program(std::uint64_t seed, int blocks = 24) {
  std::mt19937_64 rng(mcsim::SeedTree(seed).stream("program"));
  auto pick = [&](std::uint64_t n) { return static_cast<int>(mcsim::draw_below(rng, n)); };
  auto reg = [&] { return "r" + std::to_string(1 + pick(20)); };
  auto dst = [&] { return pick(25) == 0 ? std::string("r0") : reg(); };
  auto off = [&] { return std::to_string(4 * pick(64)); };
  static const char* rops[] = {"add", "sub", "and", "or", "xor", "slt", "mul"};
  static const char* bops[] = {"beq", "bne", "blt"};

  std::ostringstream o;
  std::set<int> slots;
  while (slots.size() < 6) slots.insert(pick(64));
  for (int s : slots) o << ".data " << 4096 + 4 * s << ' ' << pick(2001) - 1000 << '\n';
  o << ".thread 0\n  addi r30, r0, 4096\n";
  for (int r = 1; r <= 20; ++r) o << "  addi r" << r << ", r0, " << pick(201) - 100 << '\n';

  auto simple = [&](std::ostringstream& out) {
    switch (pick(6)) {
      case 0: case 1: out << "  " << rops[pick(7)] << ' ' << dst() << ", " << reg() << ", " << reg() << '\n'; break;
      case 2: out << "  addi " << dst() << ", " << reg() << ", " << pick(65) - 32 << '\n'; break;
      case 3: out << "  lw " << dst() << ", " << off() << "(r30)\n"; break;
      case 4: out << "  sw " << reg() << ", " << off() << "(r30)\n"; break;
      default: out << "  add " << dst() << ", " << reg() << ", r0\n"; break;
    }
  };

  for (int b = 0; b < blocks; ++b) {
    switch (pick(5)) {
      case 0: {  // forward branch over k simple instructions
        const int k = 1 + pick(3);
        o << "  " << bops[pick(3)] << ' ' << reg() << ", " << reg() << ", " << k + 1 << '\n';
        for (int i = 0; i < k; ++i) simple(o);
        break;
      }
      case 1: {  // counted loop
        const int body = 1 + pick(4);
        o << "  addi r29, r0, " << 1 + pick(6) << '\n';
        for (int i = 0; i < body; ++i) simple(o);
        o << "  addi r29, r29, -1\n  bne r29, r0, " << -(body + 1) << '\n';
        break;
      }
      default: simple(o); break;
    }
  }
  o << "  halt\n";
  return o.str();
}

}  // namespace testgen
