#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mcsim/harness.hpp"
#include "mcsim/system.hpp"

using namespace mcsim;
using namespace mcsim::harness;

namespace {

const std::filesystem::path kRoot{MCSIM_SOURCE_DIR};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

std::string kv_value(const std::string& kv, const std::string& key) {
  std::istringstream in(kv);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + "=", 0) == 0) return line.substr(key.size() + 1);
  return "<missing>";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MCSIM_SIM_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
  auto c = parse_config("mode = run\nprogram = programs/fib.s\n", kRoot);
  CHECK(c.mode == Mode::Run);
  CHECK(c.core.width == 4);
  CHECK(c.mem.kind == memhier::MemKind::Snoopy);
  CHECK(c.mem.topology == noc::TopologyKind::Mesh);
  CHECK(c.mem.topo_cols == 2);
  CHECK(c.mem.topo_rows == 2);
  CHECK(c.model == consistency::Model::TSO);
  CHECK(c.verify);
  CHECK(c.program == kRoot / "programs/fib.s");
  CHECK(parse_config("mode = laws\n[memory]\ncoherence = directory\n").mem.kind == memhier::MemKind::Directory);
}

TEST_CASE("config errors") {
  const std::string head = "mode = laws\n";
  try {
    parse_config(head + "[core]\nwidth = 16\n");
    FAIL("accepted width 16");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("superscalar width between 2 and 8") != std::string::npos);
  }
  CHECK_NOTHROW(parse_config(head + "[core]\nwidth = 16\nallow_unrealistic = true\n"));
  try {
    parse_config(head + "\n[core]\nwidht = 4\n");
    FAIL("accepted a misspelt key");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("widht") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(head + "[cache]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(head + "seed = twelve\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(head + "just text\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(head + "[memory]\nprotocol = token\n"), ConfigError);
  try {
    parse_config("mode = run\nprogram = no/such/file.s\n", kRoot);
    FAIL("accepted a missing program");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("not found") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config(kRoot / "configs/missing.cfg"), Error);
  // Deferred validation lets the caller fill in the path first.
  auto c = parse_config("mode = run\n", kRoot, false);
  c.program = kRoot / "programs/fib.s";
  CHECK_NOTHROW(check_config(c));
}

TEST_CASE("bundled configs load and run") {
  for (const char* name : {"default.cfg", "directory.cfg", "bpred.cfg", "laws.cfg", "protocol.cfg"}) {
    CAPTURE(name);
    const auto c = load_config(kRoot / "configs" / name);
    const auto r = run_experiment(c);
    CHECK(r.ok);
    CHECK(r.failures.empty());
  }
}

TEST_CASE("run reports: per-core rows and golden verification") {
  auto c = load_config(kRoot / "configs/directory.cfg");
  const auto r = run_experiment(c);
  const auto csv = report_stats(r, Format::Csv);
  CHECK(count_lines(csv) == 1 + 2 + 1);  // header, cores, summary row
  const auto kv = report_stats(r, Format::Kv);
  CHECK(kv_value(kv, "core0.ipc") != "<missing>");
  CHECK(kv_value(kv, "core1.ipc") != "<missing>");
  CHECK(kv_value(kv, "status") == "halted");

  c = load_config(kRoot / "configs/default.cfg");
  const auto single = report_stats(run_experiment(c), Format::Kv);
  CHECK(kv_value(single, "verify") == "pass");
  for (const char* rate : {"l1i.hit_rate", "l1d.hit_rate", "branch_accuracy"}) {
    const double v = std::stod(kv_value(single, rate));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("handoff program delivers the sum on every memory system") {
  const auto p = assemble(slurp(kRoot / "programs/handoff.s"));
  for (auto kind : {memhier::MemKind::Perfect, memhier::MemKind::Snoopy, memhier::MemKind::Directory})
    for (auto model : {consistency::Model::SC, consistency::Model::TSO})
      for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        sim::SystemConfig sc;
        sc.mem.kind = kind;
        sc.model = model;
        sc.seed = seed;
        sc.max_start_delay = 40;
        sc.max_drain_delay = 10;
        const auto r = sim::run_system(p, sc);
        CHECK(r.status == RunStatus::Halted);
        CHECK(r.state.load(0x3140) == 100);
      }
}

TEST_CASE("empty statistics report zero rates") {
  core::CoreStats s;
  CHECK(s.ipc() == 0.0);
  CHECK(s.branch_accuracy() == 0.0);
  Report r;
  r.columns = {"core", "ipc"};
  CHECK(report_stats(r, Format::Csv) == "core,ipc\n");
  CHECK(report_stats(r, Format::Kv) == "ok=true\n");
}

TEST_CASE("litmus mode checks the corpus") {
  auto c = parse_config("mode = litmus\nlitmus = litmus\nschedules = 20\nboth_models = true\n", kRoot);
  const auto r = run_experiment(c);
  CHECK(r.ok);
  CHECK(r.rows.size() == 2 * 15);
  for (const auto& row : r.rows) CHECK(row.back() == "ok");
}

TEST_CASE("check-protocol finds the injected bug") {
  auto c = parse_config("mode = check-protocol\n[protocol]\nvariants = snoopy, directory\nmutate = true\n");
  const auto r = run_experiment(c);
  CHECK(r.ok);
  const auto kv = report_stats(r, Format::Kv);
  CHECK(kv_value(kv, "directory.counterexample.0") != "<missing>");
  CHECK(kv_value(kv, "snoopy.counterexample.0") != "<missing>");
}

TEST_CASE("laws mode") {
  const auto kv = report_stats(run_experiment(parse_config("mode = laws\n")), Format::Kv);
  CHECK(kv_value(kv, "dennard.speed_gain") == "0.4286");
  CHECK(kv_value(kv, "pollack.performance") == "1.4142");
  CHECK(kv_value(kv, "amdahl.speedup") == "6.4000");
}

TEST_CASE("identical config and seed give byte-identical reports") {
  for (const char* name : {"default.cfg", "directory.cfg", "litmus.cfg", "bpred.cfg"}) {
    CAPTURE(name);
    auto c = load_config(kRoot / "configs" / name);
    c.schedules = 30;
    for (auto f : {Format::Table, Format::Kv, Format::Csv})
      CHECK(report_stats(run_experiment(c), f) == report_stats(run_experiment(c), f));
  }
  auto c = load_config(kRoot / "configs/directory.cfg");
  const auto a = report_stats(run_experiment(c), Format::Kv);
  c.seed = 8;
  CHECK(a != report_stats(run_experiment(c), Format::Kv));
}

TEST_CASE("workload drivers") {
  const auto sweep = penalty_sweep(core::CoreConfig{}, {5, 10, 15, 20}, 500);
  CHECK(sweep.monotone);
  for (const auto& p : sweep.points) CHECK(std::abs(p.penalty - p.frontend_depth) <= 1.0);

  const auto p = amdahl_program(0.75, 3, 100);
  CHECK(p.threads.size() == 3);
  const auto one = amdahl_program(0.75, 1, 100);
  auto g = functional_run(one, 100000);
  CHECK(g.state.load(0x3000) == 100);
  memhier::MemConfig perfect;
  perfect.kind = memhier::MemKind::Perfect;
  for (const auto& pt : amdahl_sweep(core::CoreConfig{}, perfect, 0.75, {1, 2, 3}, 3000)) {
    CHECK(pt.speedup <= pt.bound + 1e-9);
    CHECK(pt.speedup >= 0.9 * pt.bound);
  }
}

TEST_CASE("CLI exit codes") {
  const std::string cfg = (kRoot / "configs").string();
  CHECK(run_cli("laws") == 0);
  CHECK(run_cli("laws --out kv") == 0);
  CHECK(run_cli("run --config " + cfg + "/default.cfg --out csv") == 0);
  CHECK(run_cli("run --config " + cfg + "/directory.cfg --seed 3 --model sc") == 0);
  CHECK(run_cli("litmus --file " + (kRoot / "litmus/sb.litmus").string() + " --model tso --schedules 10") == 0);
  CHECK(run_cli("bpred --config " + cfg + "/bpred.cfg") == 0);
  CHECK(run_cli("check-protocol --cores 2") == 0);
  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("run --program /no/such/file.s") == 2);
  CHECK(run_cli("run --config " + cfg + "/default.cfg --out yaml") == 2);
  CHECK(run_cli("laws --model weak") == 2);
  const auto tmp = std::filesystem::temp_directory_path() / "mcsim_mutated.cfg";
  std::ofstream(tmp) << "mode = check-protocol\n[protocol]\nvariants = directory\n";
  CHECK(run_cli("check-protocol --config " + tmp.string()) == 0);
  // Budget exhaustion is a failed run, not a usage error.
  std::ofstream(tmp) << "mode = run\nprogram = " << (kRoot / "programs/fib.s").string() << "\nbudget = 50\n";
  CHECK(run_cli("run --config " + tmp.string()) == 1);
  std::filesystem::remove(tmp);
}
