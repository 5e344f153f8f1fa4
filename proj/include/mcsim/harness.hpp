#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcsim/coherence.hpp"
#include "mcsim/consistency.hpp"
#include "mcsim/core.hpp"
#include "mcsim/memhier.hpp"

namespace mcsim::harness {

enum class Mode { Run, Litmus, Bpred, Laws, CheckProtocol };

std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);

/// Points at which mode=laws evaluates each closed-form law.
struct LawPoints {
  int generations = 1;
  double area_ratio = 2.0;
  double parallel_fraction = 0.9;
  std::int64_t amdahl_cores = 16;
  double growth_rate = 0.5;
  double growth_years = 20.0;
  std::int64_t bypass_units = 8;
};

struct ExperimentConfig {
  Mode mode = Mode::Run;
  int cores = 0;  // run: 0 means one core per program thread
  core::CoreConfig core;
  memhier::MemConfig mem;
  consistency::Model model = consistency::Model::TSO;
  std::filesystem::path program;  // run
  std::filesystem::path trace;    // bpred
  std::filesystem::path litmus;   // litmus: a file or a directory of *.litmus
  std::uint64_t seed = 1;
  Cycle budget = 10'000'000;
  bool verify = true;         // run: compare against the functional model
  int schedules = 100;        // litmus: seeded runs per test and model
  bool both_models = false;   // litmus: run SC and TSO regardless of `model`
  // Random schedule perturbation; -1 picks the mode default (0 for run,
  // 20 and 30 cycles for litmus batches).
  int max_drain_delay = -1;
  int max_start_delay = -1;
  std::size_t warmup = 0;     // bpred
  std::vector<coherence::Variant> protocols{coherence::Variant::Snoopy, coherence::Variant::Directory};
  int protocol_cores = 2;
  bool mutate_protocol = false;
  LawPoints laws;

  /// Throws with the violated rule named.
  void validate() const;
};

/// Parses `key = value` lines grouped under `[section]` headers. `#` starts a
/// comment. Relative paths resolve against `base_dir`. Unknown keys,
/// malformed values and rule violations throw ConfigError. Pass
/// `validate = false` to defer the rule checks until overrides are applied.
ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir = ".",
                              bool validate = true);
ExperimentConfig load_config(const std::filesystem::path& path, bool validate = true);

/// validate() with rule violations rethrown as ConfigError.
void check_config(const ExperimentConfig& config);

class ConfigError : public Error {
 public:
  ConfigError(int line, const std::string& what)
      : Error(line > 0 ? "config line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct Report {
  std::string title;
  std::vector<std::pair<std::string, std::string>> summary;  // stable keys, in order
  std::vector<std::string> columns;                          // first column names the row
  std::vector<std::vector<std::string>> rows;
  bool ok = true;  // false on a verification failure
  std::vector<std::string> failures;

  void add(std::string key, std::string value) { summary.emplace_back(std::move(key), std::move(value)); }
};

enum class Format { Table, Kv, Csv };

Format parse_format(std::string_view s);

Report run_experiment(const ExperimentConfig& config);
std::string report_stats(const Report& report, Format format);

/// Fixed-precision rendering shared by every report.
std::string fmt(double v, int digits = 4);

// ---------------------------------------------------------------------------
// Workload drivers
// ---------------------------------------------------------------------------

/// Misprediction penalty in cycles per mispredict at one front-end depth:
/// the same loop is run with a static not-taken predictor and with the
/// configured one on perfect memory, and the cycle difference is divided by
/// the difference in mispredicts.
struct PenaltyPoint {
  int frontend_depth = 0;
  double penalty = 0;
  std::uint64_t mispredict_delta = 0;
};

PenaltyPoint measure_mispredict_penalty(const core::CoreConfig& base, int frontend_depth, int iterations = 2000);

struct PenaltySweep {
  std::vector<PenaltyPoint> points;
  double slope = 0;      // least-squares fit of penalty on depth
  double intercept = 0;
  bool monotone = true;  // penalty non-decreasing in depth
};

PenaltySweep penalty_sweep(const core::CoreConfig& base, const std::vector<int>& depths, int iterations = 2000);

/// Thread 0 runs the serial part, raises a flag and takes its share of the
/// parallel part; the other threads spin on the flag and then take theirs.
/// `work_units` loop iterations in total, a fraction `parallel_fraction` of
/// them split as evenly as possible over `threads`.
Program amdahl_program(double parallel_fraction, int threads, int work_units);

struct AmdahlPoint {
  int cores = 0;
  Cycle cycles = 0;
  double speedup = 0;
  double bound = 0;
};

/// Speedup of the n-thread program over its 1-thread version for each n.
std::vector<AmdahlPoint> amdahl_sweep(const core::CoreConfig& core, const memhier::MemConfig& mem,
                                      double parallel_fraction, const std::vector<int>& cores, int work_units,
                                      std::uint64_t seed = 1);

}  // namespace mcsim::harness
