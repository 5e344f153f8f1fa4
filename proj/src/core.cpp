#include "mcsim/core.hpp"

#include <algorithm>
#include <set>

#include "mcsim/rng.hpp"

namespace mcsim::core {

using consistency::MemOpKind;
using consistency::SbAction;
using memhier::AccessKind;

namespace {
constexpr Addr kFetchBlock = 64;
constexpr std::uint32_t kMemDepMask = 4095;
}  // namespace

std::string_view to_string(MemDepMode m) { return m == MemDepMode::Conservative ? "conservative" : "speculative"; }

MemDepMode parse_memdep_mode(std::string_view s) {
  if (s == "conservative") return MemDepMode::Conservative;
  if (s == "speculative") return MemDepMode::Speculative;
  throw Error("unknown memory-dependence mode '" + std::string(s) + "' (expected conservative or speculative)");
}

const FuSpec& CoreConfig::fu(FuClass c) const {
  switch (c) {
    case FuClass::Alu: return alu;
    case FuClass::Mul: return mul;
    case FuClass::Load: return load;
    default: return store;
  }
}

void CoreConfig::validate() const {
  if (width < 1) throw Error("width must be >= 1");
  if (!allow_unrealistic && (width < 2 || width > 8))
    throw Error("width " + std::to_string(width) +
                " violates the superscalar width between 2 and 8 rule (set allow_unrealistic to override)");
  if (width > 64) throw Error("width must be <= 64");
  if (pipeline_depth() < 5 || pipeline_depth() > 30)
    throw Error("pipeline depth (frontend_depth + 2) must be in [5, 30], got " + std::to_string(pipeline_depth()));
  if (phys_regs <= kNumLogicalRegs) throw Error("phys_regs must exceed 32");
  if (iq_size < 1 || rob_size < 1 || lsq_size < 1) throw Error("queue sizes must be >= 1");
  if (store_buffer < 1) throw Error("store_buffer must be >= 1");
  for (const FuSpec* f : {&alu, &mul, &load, &store})
    if (f->count < 1 || f->latency < 1) throw Error("functional units need count >= 1 and latency >= 1");
}

FuClass fu_class(Opcode op) {
  switch (op) {
    case Opcode::MUL: return FuClass::Mul;
    case Opcode::LOAD: return FuClass::Load;
    case Opcode::STORE: return FuClass::Store;
    case Opcode::FENCE: case Opcode::HALT: return FuClass::None;
    default: return FuClass::Alu;
  }
}

// ---------------------------------------------------------------------------

RenameState::RenameState(int phys_regs)
    : values(static_cast<std::size_t>(phys_regs), 0), ready(static_cast<std::size_t>(phys_regs), 1) {
  for (int i = 0; i < kNumLogicalRegs; ++i) table[static_cast<std::size_t>(i)] = i;
  for (int p = kNumLogicalRegs; p < phys_regs; ++p) free_list.push_back(p);
}

std::optional<std::vector<RenamedOperands>> rename_group(RenameState& rs,
                                                         const std::vector<DecodedInstruction>& group) {
  auto writes = [](const DecodedInstruction& in) { return writes_dest(in.opcode) && in.dest != 0; };
  const auto need = static_cast<std::size_t>(std::count_if(group.begin(), group.end(), writes));
  if (rs.free_list.size() < need) return std::nullopt;

  std::vector<RenamedOperands> out(group.size());
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& in = group[i];
    auto& o = out[i];
    o.src1 = reads_src1(in.opcode) ? rs.table[in.src1] : 0;
    o.src2 = reads_src2(in.opcode) ? rs.table[in.src2] : 0;
    if (writes(in)) {
      o.dest = rs.free_list.front();
      rs.free_list.pop_front();
      o.prev = rs.table[in.dest];
    }
    // Compare against every earlier destination in the group; the closest wins.
    bool got1 = false, got2 = false, gotp = false;
    for (std::size_t j = i; j-- > 0;) {
      const auto& pj = group[j];
      if (!writes(pj)) continue;
      if (!got1 && reads_src1(in.opcode) && in.src1 == pj.dest) {
        o.src1 = out[j].dest;
        got1 = true;
      }
      if (!got2 && reads_src2(in.opcode) && in.src2 == pj.dest) {
        o.src2 = out[j].dest;
        got2 = true;
      }
      if (!gotp && writes(in) && in.dest == pj.dest) {
        o.prev = out[j].dest;
        gotp = true;
      }
    }
  }
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (out[i].dest < 0) continue;
    rs.table[group[i].dest] = out[i].dest;
    rs.ready[static_cast<std::size_t>(out[i].dest)] = 0;
  }
  return out;
}

void wakeup(std::vector<IqEntry>& iq, int tag) {
  for (auto& e : iq) {
    if (e.src1 == tag) e.ready1 = true;
    if (e.src2 == tag) e.ready2 = true;
  }
}

std::vector<std::size_t> select_issue(const std::vector<IqEntry>& iq, std::array<int, kFuClasses> free_units,
                                      int width, bool in_order) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < iq.size() && static_cast<int>(out.size()) < width; ++i) {
    if (in_order && static_cast<int>(i) >= width) break;
    const auto& e = iq[i];
    auto& units = free_units[static_cast<std::size_t>(e.fu)];
    if (e.ready1 && e.ready2 && units > 0) {
      --units;
      out.push_back(i);
    } else if (in_order) {
      break;
    }
  }
  return out;
}

LsqDecision lsq_resolve(const std::deque<LsqEntry>& lsq, std::size_t index, bool hold) {
  const auto& load = lsq.at(index);
  for (std::size_t k = index; k-- > 0;) {
    const auto& s = lsq[k];
    if (!s.is_store) continue;
    if (!s.addr_valid) {
      if (hold) return {LsqDecision::Stall, 0, 0};
      continue;
    }
    if (s.addr == load.addr) return {LsqDecision::Forward, s.data, s.seq};
  }
  return {LsqDecision::Access, 0, 0};
}

std::vector<std::uint64_t> lsq_violations(const std::deque<LsqEntry>& lsq, std::size_t index) {
  const auto& st = lsq.at(index);
  std::vector<std::uint64_t> out;
  for (std::size_t k = index + 1; k < lsq.size(); ++k) {
    const auto& l = lsq[k];
    if (!l.is_store && l.addr_valid && l.issued && l.addr == st.addr && l.fwd_from < st.seq) out.push_back(l.seq);
  }
  return out;
}

// ---------------------------------------------------------------------------

CorePort::CorePort(CoreId core, memhier::MemorySystem& mem, consistency::Model model, std::size_t capacity,
                   int max_drain_delay, std::uint64_t seed)
    : core_(core),
      mem_(&mem),
      model_(model),
      sb_(capacity),
      max_delay_(max_drain_delay),
      rng_(SeedTree(seed).stream("drain", static_cast<std::uint64_t>(core))) {}

void CorePort::tick(Cycle now) {
  if (inflight_) {
    if (!mem_->poll(*inflight_, now)) return;
    sb_.pop();
    inflight_.reset();
  }
  if (sb_.empty()) return;
  if (!drain_at_) drain_at_ = now + draw_below(rng_, static_cast<std::uint64_t>(max_delay_) + 1);
  if (now < *drain_at_) return;
  const auto& f = sb_.front();
  inflight_ = mem_->issue(core_, AccessKind::Write, f.addr, f.value, now);
  drain_at_.reset();
}

// ---------------------------------------------------------------------------

Core::Core(CoreId id, const Program& program, int thread, const CoreConfig& config, CorePort& port,
           bool record_trace)
    : id_(id),
      program_(&program),
      code_(&program.threads.at(static_cast<std::size_t>(thread))),
      cfg_(config),
      port_(&port),
      record_trace_(record_trace),
      predictor_(config.predictor),
      btb_(config.predictor.btb_sets, config.predictor.btb_ways),
      memdep_(kMemDepMask + 1, 0),
      rs_(config.phys_regs) {
  cfg_.validate();
  fetch_pc_ = code_->entry;
  committed_pc_ = code_->entry;
  committed_map_ = rs_.table;
}

Core::RobEntry* Core::find(std::uint64_t seq) {
  auto it = std::lower_bound(rob_.begin(), rob_.end(), seq, [](const RobEntry& e, std::uint64_t s) { return e.seq < s; });
  return it != rob_.end() && it->seq == seq ? &*it : nullptr;
}

std::size_t Core::lsq_index(std::uint64_t seq) const {
  auto it = std::lower_bound(lsq_.begin(), lsq_.end(), seq, [](const LsqEntry& e, std::uint64_t s) { return e.seq < s; });
  if (it == lsq_.end() || it->seq != seq) throw Error("internal: memory op missing from the LSQ");
  return static_cast<std::size_t>(it - lsq_.begin());
}

LsqEntry* Core::find_lsq(std::uint64_t seq) { return &lsq_[lsq_index(seq)]; }

std::optional<std::uint64_t> Core::oldest_seq() const {
  if (rob_.empty()) return std::nullopt;
  return rob_.front().seq;
}

std::vector<std::uint64_t> Core::rob_seqs() const {
  std::vector<std::uint64_t> v;
  for (const auto& e : rob_) v.push_back(e.seq);
  return v;
}

std::vector<std::uint64_t> Core::iq_seqs() const {
  std::vector<std::uint64_t> v;
  for (const auto& e : iq_) v.push_back(e.seq);
  return v;
}

std::vector<std::uint64_t> Core::lsq_seqs() const {
  std::vector<std::uint64_t> v;
  for (const auto& e : lsq_) v.push_back(e.seq);
  return v;
}

ThreadState Core::arch_state() const {
  ThreadState t;
  for (int i = 0; i < kNumLogicalRegs; ++i)
    t.regs[static_cast<std::size_t>(i)] =
        rs_.values[static_cast<std::size_t>(committed_map_[static_cast<std::size_t>(i)])];
  t.regs[0] = 0;
  t.pc = committed_pc_;
  t.halted = status_ == CoreStatus::Halted;
  return t;
}

void Core::cycle(Cycle now) {
  port_->tick(now);
  if (status_ != CoreStatus::Running) return;
  ++stats_.cycles;
  writeback(now);
  commit(now);
  if (status_ != CoreStatus::Running) return;
  issue(now);
  dispatch(now);
  fetch(now);
  if (rob_.empty() && front_.empty() && !fetch_stopped_ && fetch_pc_ >= code_->code.size())
    trap("pc " + std::to_string(fetch_pc_) + " outside program", fetch_pc_);
}

void Core::writeback(Cycle now) {
  for (std::size_t i = 0; i < inflight_loads_.size();) {
    auto [seq, id] = inflight_loads_[i];
    if (auto c = port_->mem().poll(id, now)) {
      inflight_loads_.erase(inflight_loads_.begin() + static_cast<std::ptrdiff_t>(i));
      finish_load(seq, c->value, now);
    } else {
      ++i;
    }
  }
  while (!events_.empty() && events_.begin()->first <= now) {
    const Event ev = events_.begin()->second;
    events_.erase(events_.begin());
    RobEntry* e = find(ev.seq);
    if (!e) continue;  // squashed
    if (ev.kind == EventKind::Complete) {
      complete(*e, now);
    } else {
      address_ready(*e, now);
    }
  }
  auto waiting = std::move(waiting_loads_);
  waiting_loads_.clear();
  std::sort(waiting.begin(), waiting.end());
  for (auto seq : waiting)
    if (find(seq) && !try_load(seq, now)) waiting_loads_.push_back(seq);
}

void Core::complete(RobEntry& e, Cycle) {
  e.completed = true;
  if (e.ops.dest >= 0) {
    const auto d = static_cast<std::size_t>(e.ops.dest);
    rs_.values[d] = e.result;
    rs_.ready[d] = 1;
    wakeup(iq_, e.ops.dest);
  }
  if (!is_control(e.inst.opcode) || e.exception) return;
  const std::uint32_t predicted = e.slot.predicted_taken ? e.slot.predicted_target : e.inst.pc + 1;
  if (e.next_pc == predicted) return;
  ++stats_.control_mispredicts;
  const auto seq = e.seq;
  const auto target = e.next_pc;
  const bool cond = is_cond_branch(e.inst.opcode);
  const auto history = e.slot.prediction.history_before;
  const bool taken = e.taken;
  squash(seq, target);
  if (cond) predictor_.repair(history, taken);
}

void Core::address_ready(RobEntry& e, Cycle now) {
  const std::uint64_t seq = e.seq;
  auto* l = find_lsq(seq);
  l->addr = e.addr;
  if (e.addr % kWordBytes != 0) {
    e.exception = true;
    e.reason = "misaligned address " + std::to_string(e.addr) + " at pc " + std::to_string(e.inst.pc);
    e.completed = true;
    return;
  }
  l->addr_valid = true;
  if (e.inst.opcode == Opcode::LOAD) {
    if (!try_load(seq, now)) waiting_loads_.push_back(seq);
    return;
  }
  l->data = e.store_value;
  e.completed = true;
  const auto bad = lsq_violations(lsq_, lsq_index(seq));
  if (bad.empty()) return;
  RobEntry* victim = find(bad.front());
  memdep_[victim->inst.pc & kMemDepMask] = 1;
  ++stats_.squash_memdep;
  squash(bad.front() - 1, victim->inst.pc);
}

bool Core::try_load(std::uint64_t seq, Cycle now) {
  const auto idx = lsq_index(seq);
  auto& l = lsq_[idx];
  const bool hold = cfg_.memdep == MemDepMode::Conservative || memdep_[l.pc & kMemDepMask];
  const auto d = lsq_resolve(lsq_, idx, hold);
  if (d.kind == LsqDecision::Stall) return false;
  l.issued = true;
  RobEntry* e = find(seq);
  if (d.kind == LsqDecision::Forward) {
    l.fwd_from = d.from;
    ++stats_.forwarded_loads;
    e->result = d.value;
    events_.emplace(now + 1, Event{seq, EventKind::Complete});
    return true;
  }
  l.fwd_from = 0;
  if (auto v = port_->buffer().forward(l.addr)) {
    ++stats_.forwarded_loads;
    e->result = *v;
    events_.emplace(now + 1, Event{seq, EventKind::Complete});
    return true;
  }
  inflight_loads_.emplace_back(seq, port_->mem().issue(id_, AccessKind::Read, l.addr, 0, now));
  return true;
}

void Core::finish_load(std::uint64_t seq, Word value, Cycle now) {
  RobEntry* e = find(seq);
  if (!e) return;
  e->result = value;
  complete(*e, now);
}

bool Core::commit_load(RobEntry& e, Cycle now) {
  // The load is performed again at commit against the store buffer and the
  // coherent memory; a changed value means a younger-than-allowed read.
  auto act = consistency::sb_process(port_->buffer(), {MemOpKind::Load, e.addr, 0}, port_->model());
  if (act.kind == SbAction::Stall) {
    ++stats_.commit_stalls_sb;
    return false;
  }
  Word v = 0;
  auto& mem = port_->mem();
  if (act.kind == SbAction::Forwarded) {
    v = act.value;
  } else if (e.revalidate) {
    auto c = mem.poll(*e.revalidate, now);
    if (!c) return false;
    e.revalidate.reset();
    v = c->value;
  } else if (auto p = mem.peek(id_, e.addr)) {
    v = *p;
  } else {
    e.revalidate = mem.issue(id_, AccessKind::Read, e.addr, 0, now);
    return false;
  }
  if (v == e.result) return true;
  ++stats_.squash_memorder;
  squash(e.seq - 1, e.inst.pc);
  return false;
}

void Core::commit(Cycle now) {
  for (int n = 0; n < cfg_.width && !rob_.empty(); ++n) {
    auto& e = rob_.front();
    if (!e.completed) return;
    if (e.exception) {
      trap(e.reason, e.inst.pc);
      return;
    }
    const Opcode op = e.inst.opcode;
    if (op == Opcode::LOAD && !commit_load(e, now)) return;
    if (op == Opcode::STORE &&
        consistency::sb_process(port_->buffer(), {MemOpKind::Store, e.addr, e.store_value}, port_->model()).kind ==
            SbAction::Stall) {
      ++stats_.commit_stalls_sb;
      return;
    }
    if (op == Opcode::FENCE &&
        consistency::sb_process(port_->buffer(), {MemOpKind::Fence, 0, 0}, port_->model()).kind == SbAction::Stall) {
      ++stats_.commit_stalls_sb;
      return;
    }
    if (e.ops.dest >= 0) {
      rs_.free_list.push_back(e.ops.prev);
      committed_map_[e.inst.dest] = e.ops.dest;
    }
    if (is_cond_branch(op)) {
      predictor_.train(e.inst.pc, e.slot.prediction, e.taken);
      ++stats_.cond_branches;
      if (e.slot.predicted_taken != e.taken) ++stats_.cond_mispredicts;
    }
    if (is_control(op) && e.taken) btb_.update(e.inst.pc, e.next_pc);
    if (op == Opcode::LOAD) ++stats_.loads;
    if (op == Opcode::STORE) ++stats_.stores;
    if (record_trace_) {
      CommitRecord r;
      r.pc = e.inst.pc;
      if (op == Opcode::STORE) {
        r.is_store = true;
        r.addr = e.addr;
        r.value = e.store_value;
      } else if (e.ops.dest >= 0) {
        r.dest = e.inst.dest;
        r.value = e.result;
      }
      trace_.push_back(r);
    }
    if (is_memory(op)) lsq_.pop_front();
    committed_pc_ = op == Opcode::HALT ? e.inst.pc : is_control(op) ? e.next_pc : e.inst.pc + 1;
    ++stats_.retired;
    rob_.pop_front();
    if (op == Opcode::HALT) {
      status_ = CoreStatus::Halted;
      squash(0, committed_pc_);
      return;
    }
  }
}

void Core::trap(const std::string& reason, std::uint32_t pc) {
  squash(rob_.empty() ? next_seq_ : rob_.front().seq - 1, pc);
  status_ = CoreStatus::Trapped;
  trap_reason_ = reason;
  committed_pc_ = pc;
  fetch_stopped_ = true;
}

void Core::issue(Cycle now) {
  std::array<int, kFuClasses> free{cfg_.alu.count, cfg_.mul.count, cfg_.load.count, cfg_.store.count};
  const auto picks = select_issue(iq_, free, cfg_.width, cfg_.in_order);
  for (auto idx : picks) execute(*find(iq_[idx].seq), now);
  for (auto it = picks.rbegin(); it != picks.rend(); ++it) iq_.erase(iq_.begin() + static_cast<std::ptrdiff_t>(*it));
}

void Core::execute(RobEntry& e, Cycle now) {
  const auto& in = e.inst;
  const Word a = rs_.values[static_cast<std::size_t>(e.ops.src1)];
  const Word b = rs_.values[static_cast<std::size_t>(e.ops.src2)];
  const FuClass fc = fu_class(in.opcode);
  const Cycle done = now + static_cast<Cycle>(cfg_.fu(fc).latency);
  auto branch = [&](bool taken) {
    e.taken = taken;
    e.next_pc = taken ? in.pc + static_cast<std::uint32_t>(in.imm) : in.pc + 1;
  };
  switch (in.opcode) {
    case Opcode::ADD: e.result = wrap_add(a, b); break;
    case Opcode::SUB: e.result = wrap_sub(a, b); break;
    case Opcode::AND: e.result = a & b; break;
    case Opcode::OR: e.result = a | b; break;
    case Opcode::XOR: e.result = a ^ b; break;
    case Opcode::SLT: e.result = a < b ? 1 : 0; break;
    case Opcode::MUL: e.result = wrap_mul(a, b); break;
    case Opcode::ADDI: e.result = wrap_add(a, in.imm); break;
    case Opcode::LOAD:
      e.addr = static_cast<Addr>(wrap_add(a, in.imm));
      events_.emplace(done, Event{e.seq, EventKind::AddressReady});
      return;
    case Opcode::STORE:
      e.addr = static_cast<Addr>(wrap_add(b, in.imm));
      e.store_value = a;
      events_.emplace(done, Event{e.seq, EventKind::AddressReady});
      return;
    case Opcode::BEQ: branch(a == b); break;
    case Opcode::BNE: branch(a != b); break;
    case Opcode::BLT: branch(a < b); break;
    case Opcode::JAL:
      e.result = static_cast<Word>(in.pc + 1);
      branch(true);
      break;
    case Opcode::JR:
      e.taken = true;
      e.next_pc = static_cast<std::uint32_t>(a);
      if (e.next_pc >= code_->code.size()) {
        e.exception = true;
        e.reason = "jump target " + std::to_string(a) + " outside program";
      }
      break;
    case Opcode::FENCE: case Opcode::HALT: break;
  }
  events_.emplace(done, Event{e.seq, EventKind::Complete});
}

void Core::dispatch(Cycle now) {
  std::size_t k = 0;
  const auto width = static_cast<std::size_t>(cfg_.width);
  while (k < width && k < front_.size() && front_[k].ready <= now) ++k;
  if (k == 0) return;
  std::size_t iq_need = 0, lsq_need = 0;
  std::vector<DecodedInstruction> group;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& in = front_[i].inst;
    group.push_back(in);
    if (fu_class(in.opcode) != FuClass::None) ++iq_need;
    if (is_memory(in.opcode)) ++lsq_need;
  }
  if (rob_.size() + k > static_cast<std::size_t>(cfg_.rob_size) ||
      iq_.size() + iq_need > static_cast<std::size_t>(cfg_.iq_size) ||
      lsq_.size() + lsq_need > static_cast<std::size_t>(cfg_.lsq_size)) {
    ++stats_.structure_stalls;
    return;
  }
  auto renamed = rename_group(rs_, group);
  if (!renamed) {
    ++stats_.rename_stalls;
    return;
  }
  for (std::size_t i = 0; i < k; ++i) {
    RobEntry e;
    e.seq = next_seq_++;
    e.inst = group[i];
    e.ops = (*renamed)[i];
    e.slot = front_[i].slot;
    const FuClass fc = fu_class(e.inst.opcode);
    if (fc == FuClass::None) {
      e.completed = true;
    } else {
      IqEntry q;
      q.seq = e.seq;
      q.fu = fc;
      q.src1 = e.ops.src1;
      q.src2 = e.ops.src2;
      q.ready1 = rs_.ready[static_cast<std::size_t>(q.src1)] != 0;
      q.ready2 = rs_.ready[static_cast<std::size_t>(q.src2)] != 0;
      q.dest = e.ops.dest;
      iq_.push_back(q);
    }
    if (is_memory(e.inst.opcode)) {
      LsqEntry l;
      l.seq = e.seq;
      l.is_store = e.inst.opcode == Opcode::STORE;
      l.pc = e.inst.pc;
      lsq_.push_back(l);
    }
    rob_.push_back(std::move(e));
  }
  front_.erase(front_.begin(), front_.begin() + static_cast<std::ptrdiff_t>(k));
}

void Core::fetch(Cycle now) {
  if (fetch_stopped_) return;
  if (now < fetch_resume_) {
    ++stats_.icache_stall_cycles;
    return;
  }
  const auto width = static_cast<std::size_t>(cfg_.width);
  if (front_.size() + width > width * static_cast<std::size_t>(cfg_.frontend_depth)) return;
  const auto size = static_cast<std::uint32_t>(code_->code.size());
  if (fetch_pc_ >= size) return;

  auto& mem = port_->mem();
  const Addr first = code_address(id_, fetch_pc_);
  const Addr last = code_address(id_, std::min<std::uint32_t>(fetch_pc_ + cfg_.width - 1, size - 1));
  int stall = mem.ifetch(id_, first, now);
  if (last / kFetchBlock != first / kFetchBlock) stall = std::max(stall, mem.ifetch(id_, last, now));
  if (stall > 0) {
    fetch_resume_ = now + static_cast<Cycle>(stall);
    ++stats_.icache_stall_cycles;
    return;
  }

  auto g = bpred::fetch_group_predict(predictor_, btb_, *code_, fetch_pc_, cfg_.width);
  const Cycle ready = now + static_cast<Cycle>(cfg_.frontend_depth) - 1;
  for (const auto& s : g.slots) {
    const auto& in = code_->code[s.pc];
    front_.push_back({in, ready, s});
    ++stats_.fetched;
    if (in.opcode == Opcode::HALT) {
      fetch_stopped_ = true;
      fetch_pc_ = s.pc;
      return;
    }
  }
  fetch_pc_ = g.next_pc;
}

void Core::squash(std::uint64_t seq, std::uint32_t redirect) {
  std::optional<std::uint32_t> history;
  for (const auto& e : rob_)
    if (e.seq > seq && is_cond_branch(e.inst.opcode)) {
      history = e.slot.prediction.history_before;
      break;
    }
  if (!history)
    for (const auto& f : front_)
      if (is_cond_branch(f.inst.opcode)) {
        history = f.slot.prediction.history_before;
        break;
      }

  auto& mem = port_->mem();
  // Walk back from the youngest entry, undoing each rename.
  while (!rob_.empty() && rob_.back().seq > seq) {
    auto& e = rob_.back();
    if (e.ops.dest >= 0) {
      rs_.table[e.inst.dest] = e.ops.prev;
      rs_.free_list.push_back(e.ops.dest);
    }
    if (e.revalidate) mem.discard(*e.revalidate);
    ++stats_.squashed;
    rob_.pop_back();
  }
  std::erase_if(iq_, [&](const IqEntry& q) { return q.seq > seq; });
  while (!lsq_.empty() && lsq_.back().seq > seq) lsq_.pop_back();
  std::erase_if(waiting_loads_, [&](std::uint64_t s) { return s > seq; });
  std::erase_if(inflight_loads_, [&](const auto& p) {
    if (p.first <= seq) return false;
    mem.discard(p.second);
    return true;
  });
  stats_.squashed += front_.size();
  front_.clear();
  if (history) predictor_.repair(*history, std::nullopt);
  fetch_pc_ = redirect;
  fetch_stopped_ = false;
  fetch_resume_ = 0;
}

std::optional<std::string> Core::check_invariants() const {
  const auto P = rs_.values.size();
  std::vector<int> role(P, 0);  // bit 0 mapped, bit 1 free, bit 2 in flight
  for (int p : rs_.table) role[static_cast<std::size_t>(p)] |= 1;
  for (int p : rs_.free_list) {
    auto& r = role[static_cast<std::size_t>(p)];
    if (r & 2) return "p" + std::to_string(p) + " is on the free list twice";
    if (r & 1) return "p" + std::to_string(p) + " is both mapped and free";
    r |= 2;
  }
  for (const auto& e : rob_) {
    for (int p : {e.ops.dest, e.ops.prev}) {
      if (p < 0) continue;
      if (role[static_cast<std::size_t>(p)] & 2) return "in-flight p" + std::to_string(p) + " is free";
      role[static_cast<std::size_t>(p)] |= 4;
    }
  }
  const auto used = static_cast<std::size_t>(std::count_if(role.begin(), role.end(), [](int r) { return r != 0; }));
  if (used != P) return "physical registers leaked: " + std::to_string(P - used);
  for (const auto& q : iq_) {
    for (auto [tag, ready] : {std::pair{q.src1, q.ready1}, std::pair{q.src2, q.ready2}}) {
      if (ready) continue;
      const bool producer = std::any_of(rob_.begin(), rob_.end(), [&](const RobEntry& e) {
        return e.ops.dest == tag && !e.completed && e.seq < q.seq;
      });
      if (!producer) return "entry " + std::to_string(q.seq) + " waits on p" + std::to_string(tag) + " with no producer";
    }
  }
  return std::nullopt;
}

CoreResult run_core(const Program& program, const CoreConfig& config, memhier::MemorySystem& mem, Cycle budget,
                    bool record_trace) {
  if (program.threads.size() != 1) throw Error("run_core requires a single-thread program");
  CorePort port(0, mem, consistency::Model::TSO, static_cast<std::size_t>(config.store_buffer), 0, 0);
  Core core(0, program, 0, config, port, record_trace);
  CoreResult res;
  Cycle now = 0;
  while (!core.done() || !mem.quiescent()) {
    if (now >= budget) {
      res.status = RunStatus::BudgetExhausted;
      break;
    }
    ++now;
    mem.tick(now);
    core.cycle(now);
  }
  if (res.status != RunStatus::BudgetExhausted)
    res.status = core.status() == CoreStatus::Trapped ? RunStatus::Trap : RunStatus::Halted;
  res.trap_reason = core.trap_reason();
  res.state.threads = {core.arch_state()};
  res.state.memory = mem.snapshot();
  res.stats = core.stats();
  res.trace = core.trace();
  return res;
}

}  // namespace mcsim::core
