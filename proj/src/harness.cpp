#include "mcsim/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mcsim/bpred.hpp"
#include "mcsim/laws.hpp"
#include "mcsim/protocol_check.hpp"
#include "mcsim/rng.hpp"
#include "mcsim/system.hpp"

namespace mcsim::harness {

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("file not found: " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string u(std::uint64_t v) { return std::to_string(v); }

double ratio(std::uint64_t num, std::uint64_t den) {
  return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

std::string describe(const CommitRecord& r) {
  std::ostringstream o;
  o << "pc " << r.pc;
  if (r.is_store) o << " store [" << r.addr << "]=" << r.value;
  else if (r.dest >= 0) o << " r" << r.dest << "=" << r.value;
  return o.str();
}

// Golden comparison for a single-thread run; empty on agreement.
std::vector<std::string> verify_single(const Program& p, const sim::SystemResult& r, Cycle budget) {
  std::vector<std::string> out;
  auto g = functional_run(p, budget, true);
  const auto& trace = r.traces.at(0);
  const std::size_t n = std::min(trace.size(), g.trace.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (trace[i] != g.trace[i]) {
      out.push_back("divergence at commit " + std::to_string(i) + ": simulated " + describe(trace[i]) +
                    ", golden " + describe(g.trace[i]));
      return out;
    }
  }
  if (trace.size() != g.trace.size())
    out.push_back("retired " + std::to_string(trace.size()) + " instructions, golden " + std::to_string(g.trace.size()));
  if (r.state.threads.at(0) != g.state.threads.at(0)) out.push_back("final registers or pc differ from golden");
  if (r.state.normalized_memory() != g.state.normalized_memory()) out.push_back("final memory differs from golden");
  return out;
}

Report run_mode(const ExperimentConfig& c) {
  const auto program = assemble(read_file(c.program));
  const int threads = static_cast<int>(program.threads.size());
  if (c.cores != 0 && c.cores != threads)
    throw Error("cores = " + std::to_string(c.cores) + " but the program has " + std::to_string(threads) + " threads");
  c.mem.validate(threads);

  sim::SystemConfig sc;
  sc.core = c.core;
  sc.mem = c.mem;
  sc.model = c.model;
  sc.max_drain_delay = std::max(c.max_drain_delay, 0);
  sc.max_start_delay = std::max(c.max_start_delay, 0);
  sc.seed = c.seed;
  sc.budget = c.budget;
  const bool verify = c.verify && threads == 1;
  sc.record_trace = verify;
  const auto r = sim::run_system(program, sc);

  Report rep;
  rep.title = "run " + c.program.filename().string();
  rep.add("mode", "run");
  rep.add("program", c.program.filename().string());
  rep.add("cores", std::to_string(threads));
  rep.add("seed", u(c.seed));
  rep.add("model", std::string(consistency::to_string(c.model)));
  rep.add("memory", std::string(memhier::to_string(c.mem.kind)));
  rep.add("topology", c.mem.kind == memhier::MemKind::Directory
                          ? std::string(noc::to_string(c.mem.topology)) + " " + std::to_string(c.mem.topo_cols) +
                                "x" + std::to_string(c.mem.topo_rows)
                          : c.mem.kind == memhier::MemKind::Snoopy ? "bus" : "none");
  rep.add("width", std::to_string(c.core.width));
  rep.add("frontend_depth", std::to_string(c.core.frontend_depth));
  rep.add("predictor", std::string(bpred::to_string(c.core.predictor.kind)));
  rep.add("status", r.status == RunStatus::Halted ? "halted" : r.status == RunStatus::Trap ? "trap" : "budget");
  if (!r.reason.empty()) rep.add("reason", r.reason);
  rep.add("cycles", u(r.cycles));

  core::CoreStats total;
  rep.columns = {"core",     "retired", "cycles",        "ipc",           "branch_accuracy",
                 "mpki",     "squash_branch", "squash_memdep", "squash_memorder", "loads",
                 "stores",   "forwarded"};
  auto row = [&](const std::string& name, const core::CoreStats& s, Cycle cycles) {
    rep.rows.push_back({name, u(s.retired), u(cycles), fmt(ratio(s.retired, cycles)), fmt(s.branch_accuracy()),
                        fmt(1000.0 * ratio(s.cond_mispredicts, s.retired)), u(s.control_mispredicts),
                        u(s.squash_memdep), u(s.squash_memorder), u(s.loads), u(s.stores), u(s.forwarded_loads)});
  };
  for (std::size_t i = 0; i < r.cores.size(); ++i) {
    const auto& s = r.cores[i];
    row("core" + std::to_string(i), s, s.cycles);
    total.retired += s.retired;
    total.cond_branches += s.cond_branches;
    total.cond_mispredicts += s.cond_mispredicts;
    total.control_mispredicts += s.control_mispredicts;
    total.squash_memdep += s.squash_memdep;
    total.squash_memorder += s.squash_memorder;
    total.squashed += s.squashed;
    total.loads += s.loads;
    total.stores += s.stores;
    total.forwarded_loads += s.forwarded_loads;
  }
  row("total", total, r.cycles);

  rep.add("retired", u(total.retired));
  rep.add("ipc", fmt(ratio(total.retired, r.cycles)));
  rep.add("branch_accuracy", fmt(total.branch_accuracy()));
  rep.add("mpki", fmt(1000.0 * ratio(total.cond_mispredicts, total.retired)));
  rep.add("squash.branch", u(total.control_mispredicts));
  rep.add("squash.memdep", u(total.squash_memdep));
  rep.add("squash.memorder", u(total.squash_memorder));
  rep.add("squash.instructions", u(total.squashed));
  for (const char* level : {"l1i", "l1d", "l2", "llc"}) {
    const std::string l(level);
    const auto hits = r.mem.get(l + ".hits"), misses = r.mem.get(l + ".misses");
    rep.add(l + ".hit_rate", fmt(ratio(hits, hits + misses)));
  }
  for (const auto& [k, v] : r.mem.counters) rep.add("mem." + k, u(v));
  const auto& net = r.mem.network;
  rep.add("net.injected", u(net.injected));
  rep.add("net.delivered", u(net.delivered));
  rep.add("net.avg_latency", fmt(net.average_latency()));
  rep.add("net.max_latency", u(net.max_latency));
  for (const auto& [bucket, count] : net.latency_histogram) rep.add("net.latency_le_" + u(bucket), u(count));

  if (r.status == RunStatus::BudgetExhausted) {
    rep.ok = false;
    rep.failures.push_back(r.reason);
  }
  if (verify) {
    auto diffs = verify_single(program, r, c.budget);
    rep.add("verify", diffs.empty() ? "pass" : "fail");
    if (!diffs.empty()) {
      rep.ok = false;
      for (auto& d : diffs) rep.failures.push_back(std::move(d));
    }
  } else {
    rep.add("verify", c.verify ? "skipped (multithreaded)" : "off");
  }
  return rep;
}

Report litmus_mode(const ExperimentConfig& c) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(c.litmus)) {
    for (const auto& e : std::filesystem::directory_iterator(c.litmus))
      if (e.path().extension() == ".litmus") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(c.litmus);
  }
  if (files.empty()) throw Error("no .litmus files in " + c.litmus.string());

  std::vector<consistency::Model> models;
  if (c.both_models) models = {consistency::Model::SC, consistency::Model::TSO};
  else models = {c.model};

  Report rep;
  rep.title = "litmus";
  rep.columns = {"test", "model", "allowed", "observed", "unsound", "expectations", "verdict"};
  std::uint64_t unsound_total = 0, mismatches = 0;
  for (const auto& f : files) {
    const auto t = consistency::parse_litmus(read_file(f), f.stem().string());
    for (auto m : models) {
      const auto allowed = consistency::enumerate(t, m);
      consistency::OutcomeSet observed;
      sim::SystemConfig sc;
      sc.core = c.core;
      sc.mem = c.mem;
      sc.model = m;
      sc.max_drain_delay = c.max_drain_delay < 0 ? 20 : c.max_drain_delay;
      sc.max_start_delay = c.max_start_delay < 0 ? 30 : c.max_start_delay;
      sc.budget = c.budget;
      for (int k = 0; k < c.schedules; ++k) {
        sc.seed = SeedTree(c.seed).stream("schedule", static_cast<std::uint64_t>(k))();
        observed.insert(sim::simulate_litmus(t, sc));
      }
      std::uint64_t unsound = 0;
      for (const auto& o : observed) {
        if (allowed.count(o)) continue;
        ++unsound;
        rep.failures.push_back(t.name + " under " + std::string(consistency::to_string(m)) +
                               ": simulated outcome not allowed " + consistency::format_outcome(o));
      }
      int checked = 0, wrong = 0;
      for (const auto& e : t.expectations) {
        if (e.model != m) continue;
        ++checked;
        if (consistency::check_outcome(e.outcome, m, t) != e.allowed) {
          ++wrong;
          rep.failures.push_back(t.name + " line " + std::to_string(e.line) + ": expectation " +
                                 (e.allowed ? "allowed " : "forbidden ") + consistency::format_outcome(e.outcome) +
                                 " does not hold");
        }
      }
      unsound_total += unsound;
      mismatches += static_cast<std::uint64_t>(wrong);
      const std::string model(consistency::to_string(m));
      rep.rows.push_back({t.name, model, u(allowed.size()), u(observed.size()), u(unsound),
                          std::to_string(checked - wrong) + "/" + std::to_string(checked),
                          unsound == 0 && wrong == 0 ? "ok" : "FAIL"});
      for (const auto& o : observed) rep.add(t.name + "." + model + ".observed", consistency::format_outcome(o));
    }
  }
  rep.summary.insert(rep.summary.begin(),
                     {{"mode", "litmus"},
                      {"tests", u(files.size())},
                      {"schedules", std::to_string(c.schedules)},
                      {"seed", u(c.seed)},
                      {"memory", std::string(memhier::to_string(c.mem.kind))},
                      {"unsound", u(unsound_total)},
                      {"expectation_mismatches", u(mismatches)}});
  rep.ok = unsound_total == 0 && mismatches == 0;
  return rep;
}

Report bpred_mode(const ExperimentConfig& c) {
  const auto trace = bpred::parse_trace(read_file(c.trace));
  Report rep;
  rep.title = "bpred " + c.trace.filename().string();
  rep.add("mode", "bpred");
  rep.add("trace", c.trace.filename().string());
  rep.add("entries", u(trace.size()));
  rep.add("warmup", u(c.warmup));
  rep.add("predictor", std::string(bpred::to_string(c.core.predictor.kind)));
  rep.columns = {"predictor", "branches", "mispredictions", "accuracy", "mpki"};
  for (auto kind : {bpred::PredictorKind::StaticNotTaken, bpred::PredictorKind::Bimodal,
                    bpred::PredictorKind::TwoLevel, bpred::PredictorKind::Hybrid}) {
    auto cfg = c.core.predictor;
    cfg.kind = kind;
    const auto s = bpred::evaluate_trace(trace, cfg, c.warmup);
    const std::string name(bpred::to_string(kind));
    rep.rows.push_back({name, u(s.branches), u(s.mispredictions), fmt(s.accuracy), fmt(s.mpki)});
    if (kind == c.core.predictor.kind) {
      rep.add("accuracy", fmt(s.accuracy));
      rep.add("mpki", fmt(s.mpki));
    }
  }
  return rep;
}

Report laws_mode(const ExperimentConfig& c) {
  const auto& p = c.laws;
  Report rep;
  rep.title = "laws";
  rep.add("mode", "laws");
  rep.columns = {"key", "label", "value"};
  auto row = [&](const std::string& key, const std::string& label, double v) {
    rep.rows.push_back({key, label, fmt(v)});
    rep.add(key, fmt(v));
  };
  const auto d = laws::dennard_scale(p.generations);
  const std::string g = std::to_string(p.generations);
  row("dennard.dimension", "Dennard dimension factor, " + g + " generation(s)", d.dimension_factor);
  row("dennard.density", "Dennard density factor", d.density_factor);
  row("dennard.delay", "Dennard delay factor", d.delay_factor);
  row("dennard.speed_gain", "Dennard speed gain", d.speed_gain());
  row("dennard.voltage", "Dennard voltage factor", d.voltage_factor);
  row("dennard.power_density", "Dennard power density factor", d.power_density_factor);
  row("pollack.performance", "Pollack performance at area ratio " + fmt(p.area_ratio, 2),
      laws::pollack_performance(p.area_ratio));
  row("amdahl.speedup",
      "Amdahl speedup f=" + fmt(p.parallel_fraction, 2) + " n=" + std::to_string(p.amdahl_cores),
      laws::amdahl_speedup(p.parallel_fraction, p.amdahl_cores));
  row("growth.factor", "Compound growth " + fmt(p.growth_rate, 2) + "/yr over " + fmt(p.growth_years, 1) + " yr",
      laws::compound_growth(p.growth_rate, p.growth_years));
  row("bypass.paths", "Bypass paths for " + std::to_string(p.bypass_units) + " units",
      static_cast<double>(laws::bypass_paths(p.bypass_units)));
  return rep;
}

Report protocol_mode(const ExperimentConfig& c) {
  Report rep;
  rep.title = "check-protocol";
  rep.add("mode", "check-protocol");
  rep.add("cores", std::to_string(c.protocol_cores));
  rep.add("mutated", c.mutate_protocol ? "true" : "false");
  rep.columns = {"protocol", "states", "transitions", "deadlocks", "violations", "result"};
  for (auto v : c.protocols) {
    coherence::CheckConfig cc;
    cc.variant = v;
    cc.cores = c.protocol_cores;
    cc.options.suppress_invalidation = c.mutate_protocol;
    const auto r = coherence::check_protocol(cc);
    const std::string name(coherence::to_string(v));
    // With the mutation on, finding the bug is the expected result.
    const bool pass = c.mutate_protocol ? !r.violations.empty() : r.ok();
    rep.rows.push_back({name, u(r.states), u(r.transitions), u(r.deadlock_states), u(r.violations.size()),
                        pass ? "ok" : "FAIL"});
    std::string reach;
    for (auto s : r.reachable_states) reach += (reach.empty() ? "" : " ") + std::string(coherence::to_string(s));
    rep.add(name + ".reachable", reach);
    for (std::size_t i = 0; i < r.violations.size(); ++i) rep.add(name + ".violation." + u(i), r.violations[i]);
    for (std::size_t i = 0; i < r.counterexample.size(); ++i)
      rep.add(name + ".counterexample." + u(i), r.counterexample[i]);
    if (!pass) {
      rep.ok = false;
      rep.failures.push_back(name + (c.mutate_protocol ? ": mutated protocol passed the check"
                                                       : ": protocol check failed"));
    }
  }
  return rep;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

}  // namespace

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Format parse_format(std::string_view s) {
  if (s == "table") return Format::Table;
  if (s == "kv") return Format::Kv;
  if (s == "csv") return Format::Csv;
  throw Error("unknown output format '" + std::string(s) + "' (expected csv, kv or table)");
}

Report run_experiment(const ExperimentConfig& config) {
  config.validate();
  switch (config.mode) {
    case Mode::Run: return run_mode(config);
    case Mode::Litmus: return litmus_mode(config);
    case Mode::Bpred: return bpred_mode(config);
    case Mode::Laws: return laws_mode(config);
    case Mode::CheckProtocol: return protocol_mode(config);
  }
  throw Error("unhandled mode");
}

std::string report_stats(const Report& report, Format format) {
  std::ostringstream o;
  switch (format) {
    case Format::Kv:
      for (const auto& [k, v] : report.summary) o << k << '=' << v << '\n';
      for (const auto& row : report.rows)
        for (std::size_t i = 1; i < row.size() && i < report.columns.size(); ++i)
          o << row[0] << (report.columns[0] == "test" ? "." + row[1] : "") << '.' << report.columns[i] << '='
            << row[i] << '\n';
      for (std::size_t i = 0; i < report.failures.size(); ++i) o << "failure." << i << '=' << report.failures[i] << '\n';
      o << "ok=" << (report.ok ? "true" : "false") << '\n';
      break;
    case Format::Csv: {
      for (std::size_t i = 0; i < report.columns.size(); ++i) o << (i ? "," : "") << csv_field(report.columns[i]);
      o << '\n';
      for (const auto& row : report.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) o << (i ? "," : "") << csv_field(row[i]);
        o << '\n';
      }
      break;
    }
    case Format::Table: {
      o << report.title << '\n';
      std::size_t kw = 0;
      for (const auto& kv : report.summary) kw = std::max(kw, kv.first.size());
      for (const auto& [k, v] : report.summary) o << "  " << k << std::string(kw - k.size(), ' ') << "  " << v << '\n';
      if (!report.rows.empty()) {
        std::vector<std::size_t> w(report.columns.size(), 0);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = report.columns[i].size();
        for (const auto& row : report.rows)
          for (std::size_t i = 0; i < row.size() && i < w.size(); ++i) w[i] = std::max(w[i], row[i].size());
        auto line = [&](const std::vector<std::string>& cells) {
          std::string text = " ";
          for (std::size_t i = 0; i < cells.size() && i < w.size(); ++i)
            text += ' ' + cells[i] + std::string(w[i] - cells[i].size(), ' ');
          o << text.substr(0, text.find_last_not_of(' ') + 1) << '\n';
        };
        o << '\n';
        line(report.columns);
        for (const auto& row : report.rows) line(row);
      }
      for (const auto& f : report.failures) o << "FAILURE: " << f << '\n';
      o << (report.ok ? "result: ok" : "result: FAILED") << '\n';
      break;
    }
  }
  return o.str();
}

}  // namespace mcsim::harness
