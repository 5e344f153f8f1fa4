#include <cmath>
#include <sstream>

#include "mcsim/harness.hpp"
#include "mcsim/laws.hpp"
#include "mcsim/system.hpp"

namespace mcsim::harness {

namespace {

// Four independent adds then the backward branch, so with W = 4 the branch
// sits alone at the head of its fetch group with its source already known.
std::string penalty_loop(int iterations) {
  std::ostringstream o;
  o << ".thread 0\n  addi r1, r0, " << iterations << "\nloop:\n"
    << "  addi r1, r1, -1\n  addi r2, r2, 1\n  addi r3, r3, 1\n  addi r4, r4, 1\n"
    << "  bne r1, r0, loop\n  halt\n";
  return o.str();
}

core::CoreResult run_perfect(const Program& p, const core::CoreConfig& cfg) {
  memhier::MemConfig mc;
  mc.kind = memhier::MemKind::Perfect;
  auto mem = memhier::make_memory_system(mc, 1, p.data);
  return core::run_core(p, cfg, *mem);
}

void work_loop(std::ostringstream& o, const std::string& label, int units) {
  if (units <= 0) return;
  o << "  addi r1, r0, " << units << '\n'
    << label << ":\n  addi r2, r2, 1\n  addi r1, r1, -1\n  bne r1, r0, " << label << '\n';
}

}  // namespace

PenaltyPoint measure_mispredict_penalty(const core::CoreConfig& base, int frontend_depth, int iterations) {
  if (iterations < 2 || iterations > 32767) throw Error("iterations must be in 2..32767");
  const auto p = assemble(penalty_loop(iterations));
  auto good = base;
  good.frontend_depth = frontend_depth;
  auto bad = good;
  bad.predictor.kind = bpred::PredictorKind::StaticNotTaken;
  const auto g = run_perfect(p, good);
  const auto b = run_perfect(p, bad);
  PenaltyPoint pt;
  pt.frontend_depth = frontend_depth;
  if (b.stats.control_mispredicts > g.stats.control_mispredicts) {
    pt.mispredict_delta = b.stats.control_mispredicts - g.stats.control_mispredicts;
    pt.penalty = (static_cast<double>(b.stats.cycles) - static_cast<double>(g.stats.cycles)) /
                 static_cast<double>(pt.mispredict_delta);
  }
  return pt;
}

PenaltySweep penalty_sweep(const core::CoreConfig& base, const std::vector<int>& depths, int iterations) {
  PenaltySweep s;
  for (int d : depths) s.points.push_back(measure_mispredict_penalty(base, d, iterations));
  const double n = static_cast<double>(s.points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : s.points) {
    sx += p.frontend_depth;
    sy += p.penalty;
    sxx += static_cast<double>(p.frontend_depth) * p.frontend_depth;
    sxy += p.frontend_depth * p.penalty;
  }
  const double den = n * sxx - sx * sx;
  if (s.points.size() >= 2 && den != 0) {
    s.slope = (n * sxy - sx * sy) / den;
    s.intercept = (sy - s.slope * sx) / n;
  }
  for (std::size_t i = 1; i < s.points.size(); ++i)
    if (s.points[i].frontend_depth >= s.points[i - 1].frontend_depth &&
        s.points[i].penalty < s.points[i - 1].penalty)
      s.monotone = false;
  return s;
}

Program amdahl_program(double parallel_fraction, int threads, int work_units) {
  if (threads < 1 || threads > 32) throw Error("threads must be in 1..32");
  if (parallel_fraction < 0 || parallel_fraction > 1) throw Error("parallel fraction must be in [0, 1]");
  if (work_units < 1 || work_units > 32767) throw Error("work units must be in 1..32767");
  const int parallel = static_cast<int>(std::lround(parallel_fraction * work_units));
  const int serial = work_units - parallel;

  std::ostringstream o;
  o << ".data flag 0x2000 0\n";
  for (int t = 0; t < threads; ++t) o << ".data out" << t << ' ' << 0x3000 + 64 * t << " 0\n";
  for (int t = 0; t < threads; ++t) {
    const int share = parallel / threads + (t < parallel % threads ? 1 : 0);
    o << ".thread " << t << '\n';
    if (t == 0) {
      work_loop(o, "serial", serial);
      if (threads > 1) o << "  addi r3, r0, 1\n  sw r3, flag(r0)\n";
    } else {
      o << "wait" << t << ":\n  lw r3, flag(r0)\n  beq r3, r0, wait" << t << '\n';
    }
    work_loop(o, "work" + std::to_string(t), share);
    o << "  sw r2, out" << t << "(r0)\n  halt\n";
  }
  return assemble(o.str());
}

std::vector<AmdahlPoint> amdahl_sweep(const core::CoreConfig& core, const memhier::MemConfig& mem,
                                      double parallel_fraction, const std::vector<int>& cores, int work_units,
                                      std::uint64_t seed) {
  auto cycles_for = [&](int n) {
    sim::SystemConfig sc;
    sc.core = core;
    sc.mem = mem;
    sc.seed = seed;
    const auto r = sim::run_system(amdahl_program(parallel_fraction, n, work_units), sc);
    if (r.status != RunStatus::Halted) throw Error("amdahl workload did not finish: " + r.reason);
    return r.cycles;
  };
  const Cycle one = cycles_for(1);
  std::vector<AmdahlPoint> out;
  for (int n : cores) {
    AmdahlPoint p;
    p.cores = n;
    p.cycles = n == 1 ? one : cycles_for(n);
    p.speedup = static_cast<double>(one) / static_cast<double>(p.cycles);
    p.bound = laws::amdahl_speedup(parallel_fraction, n);
    out.push_back(p);
  }
  return out;
}

}  // namespace mcsim::harness
