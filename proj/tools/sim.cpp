#include <iostream>

#include "CLI11.hpp"
#include "mcsim/harness.hpp"

using namespace mcsim;
using namespace mcsim::harness;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string model;
  std::optional<int> cores;
  std::string topology;
  std::string memory;
  std::string out = "table";
  std::string program;
  std::string file;
  std::string trace;
  std::optional<int> schedules;
  bool both_models = false;
  bool no_verify = false;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "experiment config file");
  sub->add_option("--seed", o.seed, "root random seed");
  sub->add_option("--model", o.model, "consistency model: sc or tso");
  sub->add_option("--cores", o.cores, "core count (check-protocol: caches in the model)");
  sub->add_option("--topology", o.topology, "bus, line, ring, mesh or torus, optionally KIND:COLSxROWS");
  sub->add_option("--memory", o.memory, "none, snoopy or directory");
  sub->add_option("--out", o.out, "csv, kv or table");
}

void apply_topology(ExperimentConfig& c, const std::string& spec) {
  const auto colon = spec.find(':');
  c.mem.topology = noc::parse_topology_kind(spec.substr(0, colon));
  if (colon == std::string::npos) return;
  const auto dims = spec.substr(colon + 1);
  const auto x = dims.find('x');
  if (x == std::string::npos) throw Error("topology size must look like COLSxROWS");
  c.mem.topo_cols = std::stoi(dims.substr(0, x));
  c.mem.topo_rows = std::stoi(dims.substr(x + 1));
}

ExperimentConfig build_config(Mode mode, const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config, false);
  c.mode = mode;
  if (o.seed) c.seed = *o.seed;
  if (!o.model.empty()) c.model = consistency::parse_model(o.model);
  if (o.cores) (mode == Mode::CheckProtocol ? c.protocol_cores : c.cores) = *o.cores;
  if (!o.topology.empty()) apply_topology(c, o.topology);
  if (!o.memory.empty()) {
    if (o.memory == "none" || o.memory == "perfect") c.mem.kind = memhier::MemKind::Perfect;
    else if (o.memory == "snoopy") c.mem.kind = memhier::MemKind::Snoopy;
    else if (o.memory == "directory") c.mem.kind = memhier::MemKind::Directory;
    else throw Error("unknown memory system '" + o.memory + "'");
  }
  if (!o.program.empty()) c.program = o.program;
  if (!o.file.empty()) c.litmus = o.file;
  if (!o.trace.empty()) c.trace = o.trace;
  if (o.schedules) c.schedules = *o.schedules;
  if (o.both_models) c.both_models = true;
  if (o.no_verify) c.verify = false;
  check_config(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multicore microarchitecture simulator"};
  app.require_subcommand(1);
  Options o;

  auto* run = app.add_subcommand("run", "simulate a program and verify it against the functional model");
  add_common(run, o);
  run->add_option("--program", o.program, "assembly program");
  run->add_flag("--no-verify", o.no_verify, "skip the functional-model comparison");

  auto* litmus = app.add_subcommand("litmus", "run litmus tests on the simulator and check them against the models");
  add_common(litmus, o);
  litmus->add_option("--file", o.file, "a .litmus file or a directory of them");
  litmus->add_option("--schedules", o.schedules, "seeded runs per test and model");
  litmus->add_flag("--both-models", o.both_models, "check SC and TSO");

  auto* bp = app.add_subcommand("bpred", "evaluate branch predictors on a trace");
  add_common(bp, o);
  bp->add_option("--trace", o.trace, "trace of `pc T|N` lines");

  auto* laws = app.add_subcommand("laws", "evaluate the scaling laws");
  add_common(laws, o);

  auto* proto = app.add_subcommand("check-protocol", "model-check the coherence protocols");
  add_common(proto, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Mode mode = Mode::Run;
  if (*litmus) mode = Mode::Litmus;
  else if (*bp) mode = Mode::Bpred;
  else if (*laws) mode = Mode::Laws;
  else if (*proto) mode = Mode::CheckProtocol;

  Format format;
  ExperimentConfig config;
  try {
    format = parse_format(o.out);
    config = build_config(mode, o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  try {
    const auto report = run_experiment(config);
    std::cout << report_stats(report, format);
    return report.ok ? 0 : 1;
  } catch (const AssembleError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
