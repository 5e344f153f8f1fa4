#include "mcsim/bpred.hpp"

#include <algorithm>
#include <sstream>

namespace mcsim::bpred {

namespace {

std::uint32_t mask_for(int bits) {
  if (bits < 0 || bits > 24) throw Error("predictor table bits must be in [0, 24]");
  return (1u << bits) - 1;
}

}  // namespace

BimodalPredictor::BimodalPredictor(int index_bits)
    : table_(std::size_t{1} << index_bits), mask_(mask_for(index_bits)) {}

bool BimodalPredictor::access(std::uint32_t pc, bool outcome) {
  auto& c = table_[index(pc)];
  const bool p = c.taken();
  c.update(outcome);
  return p;
}

TwoLevelPredictor::TwoLevelPredictor(int history_bits, int table_bits)
    : table_(std::size_t{1} << table_bits),
      table_mask_(mask_for(table_bits)),
      history_mask_(mask_for(history_bits)),
      history_bits_(history_bits) {
  if (history_bits > table_bits) throw Error("two-level history length must not exceed table index bits");
}

TwoLevelPredictor::Lookup TwoLevelPredictor::predict(std::uint32_t pc) {
  Lookup l;
  l.history_before = history_;
  l.index = (pc ^ history_) & table_mask_;
  l.taken = table_[l.index].taken();
  history_ = ((history_ << 1) | (l.taken ? 1u : 0u)) & history_mask_;
  return l;
}

void TwoLevelPredictor::repair(std::uint32_t history_before, std::optional<bool> outcome) {
  history_ = history_before & history_mask_;
  if (outcome) history_ = ((history_ << 1) | (*outcome ? 1u : 0u)) & history_mask_;
}

bool TwoLevelPredictor::access(std::uint32_t pc, bool outcome) {
  auto l = predict(pc);
  train(l.index, outcome);
  if (l.taken != outcome) repair(l.history_before, outcome);
  return l.taken;
}

HybridPredictor::HybridPredictor(int bimodal_bits, int history_bits, int table_bits, int chooser_bits)
    : bimodal_(bimodal_bits),
      twolevel_(history_bits, table_bits),
      chooser_(std::size_t{1} << chooser_bits),
      chooser_mask_(mask_for(chooser_bits)) {}

HybridPredictor::Lookup HybridPredictor::predict(std::uint32_t pc) {
  Lookup l;
  l.bimodal_taken = bimodal_.predict(pc);
  l.twolevel = twolevel_.predict(pc);
  if (frozen_) {
    l.chosen = *frozen_;
  } else {
    l.chosen = chooser(pc).taken() ? Component::TwoLevel : Component::Bimodal;
  }
  l.taken = l.chosen == Component::TwoLevel ? l.twolevel.taken : l.bimodal_taken;
  // Global history follows the final prediction, not the component's.
  twolevel_.repair(l.twolevel.history_before, l.taken);
  return l;
}

void HybridPredictor::train(std::uint32_t pc, const Lookup& l, bool outcome) {
  bimodal_.train(pc, outcome);
  twolevel_.train(l.twolevel.index, outcome);
  const bool bim_ok = l.bimodal_taken == outcome;
  const bool tl_ok = l.twolevel.taken == outcome;
  if (bim_ok != tl_ok && !frozen_) chooser(pc).update(tl_ok);
}

HybridPredictor::Lookup HybridPredictor::access(std::uint32_t pc, bool outcome) {
  auto l = predict(pc);
  train(pc, l, outcome);
  if (l.taken != outcome) twolevel_.repair(l.twolevel.history_before, outcome);
  return l;
}

Btb::Btb(int sets, int ways) : sets_(sets), ways_(ways), entries_(static_cast<std::size_t>(sets * ways)) {
  if (sets < 1 || (sets & (sets - 1)) != 0 || ways < 1) throw Error("BTB sets must be a power of two, ways >= 1");
}

std::optional<std::uint32_t> Btb::lookup(std::uint32_t pc) const {
  const auto set = static_cast<int>(pc & static_cast<std::uint32_t>(sets_ - 1));
  for (int w = 0; w < ways_; ++w) {
    const auto& e = entries_[static_cast<std::size_t>(set * ways_ + w)];
    if (e.valid && e.tag == pc) return e.target;
  }
  return std::nullopt;
}

void Btb::update(std::uint32_t pc, std::uint32_t target) {
  const auto set = static_cast<int>(pc & static_cast<std::uint32_t>(sets_ - 1));
  Entry* victim = nullptr;
  for (int w = 0; w < ways_; ++w) {
    auto& e = entries_[static_cast<std::size_t>(set * ways_ + w)];
    if (e.valid && e.tag == pc) {
      victim = &e;
      break;
    }
    if (!victim || (victim->valid && (!e.valid || e.stamp < victim->stamp))) victim = &e;
  }
  victim->valid = true;
  victim->tag = pc;
  victim->target = target;
  victim->stamp = ++clock_;
}

std::string_view to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::StaticNotTaken: return "static";
    case PredictorKind::Bimodal: return "bimodal";
    case PredictorKind::TwoLevel: return "twolevel";
    case PredictorKind::Hybrid: return "hybrid";
  }
  return "?";
}

PredictorKind parse_predictor_kind(std::string_view s) {
  for (auto k : {PredictorKind::StaticNotTaken, PredictorKind::Bimodal, PredictorKind::TwoLevel,
                 PredictorKind::Hybrid})
    if (to_string(k) == s) return k;
  throw Error("unknown predictor kind '" + std::string(s) + "'");
}

BranchPredictor::BranchPredictor(const PredictorConfig& config)
    : config_(config),
      bimodal_(config.bimodal_bits),
      twolevel_(config.history_bits, config.pattern_bits),
      hybrid_(config.bimodal_bits, config.history_bits, config.pattern_bits, config.chooser_bits) {}

BranchPrediction BranchPredictor::predict(std::uint32_t pc) {
  BranchPrediction p;
  p.history_before = history();
  switch (config_.kind) {
    case PredictorKind::StaticNotTaken:
      p.taken = false;
      break;
    case PredictorKind::Bimodal:
      p.taken = p.bimodal_taken = bimodal_.predict(pc);
      break;
    case PredictorKind::TwoLevel:
      p.twolevel = twolevel_.predict(pc);
      p.taken = p.twolevel.taken;
      break;
    case PredictorKind::Hybrid: {
      auto l = hybrid_.predict(pc);
      p.taken = l.taken;
      p.bimodal_taken = l.bimodal_taken;
      p.chosen = l.chosen;
      p.twolevel = l.twolevel;
      break;
    }
  }
  return p;
}

void BranchPredictor::train(std::uint32_t pc, const BranchPrediction& p, bool outcome) {
  switch (config_.kind) {
    case PredictorKind::StaticNotTaken: break;
    case PredictorKind::Bimodal: bimodal_.train(pc, outcome); break;
    case PredictorKind::TwoLevel: twolevel_.train(p.twolevel.index, outcome); break;
    case PredictorKind::Hybrid:
      hybrid_.train(pc, HybridPredictor::Lookup{p.taken, p.chosen, p.bimodal_taken, p.twolevel}, outcome);
      break;
  }
}

void BranchPredictor::repair(std::uint32_t history_before, std::optional<bool> outcome) {
  switch (config_.kind) {
    case PredictorKind::TwoLevel: twolevel_.repair(history_before, outcome); break;
    case PredictorKind::Hybrid: hybrid_.twolevel().repair(history_before, outcome); break;
    default: break;
  }
}

std::uint32_t BranchPredictor::history() const {
  switch (config_.kind) {
    case PredictorKind::TwoLevel: return twolevel_.history();
    case PredictorKind::Hybrid: return hybrid_.twolevel().history();
    default: return 0;
  }
}

bool BranchPredictor::access(std::uint32_t pc, bool outcome) {
  auto p = predict(pc);
  train(pc, p, outcome);
  if (p.taken != outcome) repair(p.history_before, outcome);
  return p.taken;
}

FetchGroupPrediction fetch_group_predict(BranchPredictor& predictor, const Btb& btb, const ThreadCode& code,
                                         std::uint32_t pc, int width) {
  if (width < 1) throw Error("fetch width must be >= 1");
  FetchGroupPrediction g;
  std::uint32_t cur = pc;
  g.next_pc = pc;
  while (static_cast<int>(g.slots.size()) < width && cur < code.code.size()) {
    const auto& inst = code.code[cur];
    FetchSlot s;
    s.pc = cur;
    g.next_pc = cur + 1;
    if (is_control(inst.opcode)) {
      s.is_branch = true;
      bool dir = true;
      if (is_cond_branch(inst.opcode)) {
        s.prediction = predictor.predict(cur);
        dir = s.prediction.taken;
      }
      auto target = btb.lookup(cur);
      if (dir && target) {
        s.predicted_taken = true;
        s.predicted_target = *target;
        g.next_pc = *target;
      } else if (dir && is_cond_branch(inst.opcode)) {
        // Taken direction without a target: history must reflect fall-through.
        predictor.repair(s.prediction.history_before, false);
        s.prediction.taken = false;
      }
    }
    g.slots.push_back(s);
    if (s.predicted_taken) break;
    ++cur;
  }
  g.discarded = width - static_cast<int>(g.slots.size());
  return g;
}

std::vector<TraceEntry> parse_trace(std::string_view text) {
  std::vector<TraceEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string pc_s, out_s, extra;
    if (!(ls >> pc_s)) continue;
    if (!(ls >> out_s) || (ls >> extra) || (out_s != "T" && out_s != "N"))
      throw Error("trace line " + std::to_string(n) + ": expected '<hex pc> T|N'");
    std::size_t used = 0;
    unsigned long pc = 0;
    try {
      pc = std::stoul(pc_s, &used, 16);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != pc_s.size()) throw Error("trace line " + std::to_string(n) + ": bad pc '" + pc_s + "'");
    out.push_back({static_cast<std::uint32_t>(pc), out_s == "T"});
  }
  return out;
}

TraceStats evaluate_trace(const std::vector<TraceEntry>& trace, const PredictorConfig& config,
                          std::size_t warmup) {
  if (trace.empty()) throw Error("evaluate_trace: empty trace");
  BranchPredictor p(config);
  TraceStats s;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const bool pred = p.access(trace[i].pc, trace[i].taken);
    if (i < warmup) continue;
    ++s.branches;
    if (pred != trace[i].taken) ++s.mispredictions;
  }
  if (s.branches > 0) {
    s.accuracy = 1.0 - static_cast<double>(s.mispredictions) / static_cast<double>(s.branches);
    s.mpki = 1000.0 * static_cast<double>(s.mispredictions) / static_cast<double>(s.branches);
  }
  return s;
}

}  // namespace mcsim::bpred
