#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcsim/isa.hpp"

namespace mcsim::bpred {

/// Two-bit saturating counter; predicts taken in the upper half.
struct SaturatingCounter2 {
  std::uint8_t value = 1;  // weakly not-taken

  bool taken() const { return value >= 2; }
  void update(bool outcome) {
    if (outcome && value < 3) ++value;
    if (!outcome && value > 0) --value;
  }
};

class BimodalPredictor {
 public:
  explicit BimodalPredictor(int index_bits = 12);

  bool predict(std::uint32_t pc) const { return table_[index(pc)].taken(); }
  void train(std::uint32_t pc, bool outcome) { table_[index(pc)].update(outcome); }
  /// Predict, then update with the actual outcome. Returns the prediction.
  bool access(std::uint32_t pc, bool outcome);

  std::uint32_t index(std::uint32_t pc) const { return pc & mask_; }
  SaturatingCounter2& counter(std::uint32_t pc) { return table_[index(pc)]; }
  const SaturatingCounter2& counter(std::uint32_t pc) const { return table_[index(pc)]; }

 private:
  std::vector<SaturatingCounter2> table_;
  std::uint32_t mask_;
};

/// Global-history two-level predictor, pattern table indexed by pc XOR history.
class TwoLevelPredictor {
 public:
  TwoLevelPredictor(int history_bits = 8, int table_bits = 12);

  struct Lookup {
    bool taken;
    std::uint32_t index;
    std::uint32_t history_before;
  };

  /// Reads the pattern table and shifts the prediction into the history.
  Lookup predict(std::uint32_t pc);
  void train(std::uint32_t index, bool outcome) { table_[index].update(outcome); }
  /// Restores history to a checkpoint, optionally shifting in the actual outcome.
  void repair(std::uint32_t history_before, std::optional<bool> outcome);
  bool access(std::uint32_t pc, bool outcome);

  std::uint32_t history() const { return history_; }
  int history_bits() const { return history_bits_; }

 private:
  std::vector<SaturatingCounter2> table_;
  std::uint32_t table_mask_;
  std::uint32_t history_mask_;
  int history_bits_;
  std::uint32_t history_ = 0;
};

enum class Component { Bimodal, TwoLevel };

/// Bimodal + two-level with a pc-indexed chooser. Chooser counters in the
/// upper half select the two-level component.
class HybridPredictor {
 public:
  HybridPredictor(int bimodal_bits = 12, int history_bits = 8, int table_bits = 12, int chooser_bits = 12);

  struct Lookup {
    bool taken;
    Component chosen;
    bool bimodal_taken;
    TwoLevelPredictor::Lookup twolevel;
  };

  Lookup predict(std::uint32_t pc);
  void train(std::uint32_t pc, const Lookup& lookup, bool outcome);
  Lookup access(std::uint32_t pc, bool outcome);

  void freeze_chooser(std::optional<Component> c) { frozen_ = c; }
  SaturatingCounter2& chooser(std::uint32_t pc) { return chooser_[pc & chooser_mask_]; }
  BimodalPredictor& bimodal() { return bimodal_; }
  TwoLevelPredictor& twolevel() { return twolevel_; }
  const TwoLevelPredictor& twolevel() const { return twolevel_; }

 private:
  BimodalPredictor bimodal_;
  TwoLevelPredictor twolevel_;
  std::vector<SaturatingCounter2> chooser_;
  std::uint32_t chooser_mask_;
  std::optional<Component> frozen_;
};

/// Set-associative branch target buffer with LRU replacement.
class Btb {
 public:
  Btb(int sets = 64, int ways = 4);

  std::optional<std::uint32_t> lookup(std::uint32_t pc) const;
  void update(std::uint32_t pc, std::uint32_t target);

 private:
  struct Entry {
    bool valid = false;
    std::uint32_t tag = 0;
    std::uint32_t target = 0;
    std::uint64_t stamp = 0;
  };
  int sets_;
  int ways_;
  std::vector<Entry> entries_;
  std::uint64_t clock_ = 0;
};

enum class PredictorKind { StaticNotTaken, Bimodal, TwoLevel, Hybrid };

std::string_view to_string(PredictorKind k);
PredictorKind parse_predictor_kind(std::string_view s);

struct PredictorConfig {
  PredictorKind kind = PredictorKind::Hybrid;
  int bimodal_bits = 12;
  int history_bits = 8;
  int pattern_bits = 12;
  int chooser_bits = 12;
  int btb_sets = 64;
  int btb_ways = 4;
};

/// Everything needed to train and repair the predictor for one branch.
struct BranchPrediction {
  bool taken = false;
  bool bimodal_taken = false;
  Component chosen = Component::Bimodal;
  TwoLevelPredictor::Lookup twolevel{false, 0, 0};
  std::uint32_t history_before = 0;
};

/// Direction predictor of the configured kind, as used by a core front end.
class BranchPredictor {
 public:
  explicit BranchPredictor(const PredictorConfig& config = {});

  BranchPrediction predict(std::uint32_t pc);
  void train(std::uint32_t pc, const BranchPrediction& p, bool outcome);
  void repair(std::uint32_t history_before, std::optional<bool> outcome);
  std::uint32_t history() const;
  /// Trace-mode access: predict, train, and repair history on a miss.
  bool access(std::uint32_t pc, bool outcome);

  PredictorKind kind() const { return config_.kind; }
  const PredictorConfig& config() const { return config_; }

 private:
  PredictorConfig config_;
  BimodalPredictor bimodal_;
  TwoLevelPredictor twolevel_;
  HybridPredictor hybrid_;
};

struct FetchSlot {
  std::uint32_t pc = 0;
  bool is_branch = false;       // any control-transfer instruction
  bool predicted_taken = false;
  std::uint32_t predicted_target = 0;
  BranchPrediction prediction;  // valid for conditional branches
};

struct FetchGroupPrediction {
  std::vector<FetchSlot> slots;
  std::uint32_t next_pc = 0;
  int discarded = 0;  // width minus delivered slots
};

/// Predicts one fetch group starting at `pc`. Every branch is predicted
/// assuming earlier in-group branches fall through; the group ends after the
/// first predicted-taken branch. A taken prediction redirects fetch only on
/// a BTB hit; on a miss the slot falls through.
FetchGroupPrediction fetch_group_predict(BranchPredictor& predictor, const Btb& btb,
                                         const ThreadCode& code, std::uint32_t pc, int width);

struct TraceEntry {
  std::uint32_t pc;
  bool taken;
};

std::vector<TraceEntry> parse_trace(std::string_view text);

struct TraceStats {
  std::uint64_t branches = 0;
  std::uint64_t mispredictions = 0;
  double accuracy = 0.0;
  double mpki = 0.0;  // mispredictions per 1000 trace entries
};

/// Runs the trace through a fresh predictor; statistics cover entries after
/// the first `warmup` ones.
TraceStats evaluate_trace(const std::vector<TraceEntry>& trace, const PredictorConfig& config,
                          std::size_t warmup = 0);

}  // namespace mcsim::bpred
