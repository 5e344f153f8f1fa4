#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mcsim/harness.hpp"

namespace mcsim::harness {

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Run: return "run";
    case Mode::Litmus: return "litmus";
    case Mode::Bpred: return "bpred";
    case Mode::Laws: return "laws";
    case Mode::CheckProtocol: return "check-protocol";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  for (auto m : {Mode::Run, Mode::Litmus, Mode::Bpred, Mode::Laws, Mode::CheckProtocol})
    if (s == to_string(m)) return m;
  throw Error("unknown mode '" + std::string(s) + "' (expected run, litmus, bpred, laws or check-protocol)");
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view v) {
  T out{};
  int base = 10;
  if constexpr (std::is_integral_v<T>) {
    if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
      v.remove_prefix(2);
      base = 16;
    }
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out, base);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty()) throw Error("expected an integer");
  } else {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || v.empty()) throw Error("expected a number");
  }
  return out;
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw Error("expected true or false");
}

memhier::MemKind parse_mem_kind(std::string_view v) {
  if (v == "none" || v == "perfect") return memhier::MemKind::Perfect;
  if (v == "snoopy") return memhier::MemKind::Snoopy;
  if (v == "directory") return memhier::MemKind::Directory;
  throw Error("expected none, snoopy or directory");
}

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;
using Table = std::map<std::string, std::map<std::string, Setter>>;

Table make_table(const std::filesystem::path& base) {
  auto path_of = [base](std::string_view v) {
    std::filesystem::path p{std::string(v)};
    return p.is_absolute() ? p : base / p;
  };
  Table t;
  auto& top = t[""];
  top["mode"] = [](ExperimentConfig& c, std::string_view v) { c.mode = parse_mode(v); };
  top["cores"] = [](ExperimentConfig& c, std::string_view v) { c.cores = parse_number<int>(v); };
  top["seed"] = [](ExperimentConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>(v); };
  top["budget"] = [](ExperimentConfig& c, std::string_view v) { c.budget = parse_number<Cycle>(v); };
  top["model"] = [](ExperimentConfig& c, std::string_view v) { c.model = consistency::parse_model(v); };
  top["program"] = [path_of](ExperimentConfig& c, std::string_view v) { c.program = path_of(v); };
  top["trace"] = [path_of](ExperimentConfig& c, std::string_view v) { c.trace = path_of(v); };
  top["litmus"] = [path_of](ExperimentConfig& c, std::string_view v) { c.litmus = path_of(v); };
  top["verify"] = [](ExperimentConfig& c, std::string_view v) { c.verify = parse_bool(v); };
  top["schedules"] = [](ExperimentConfig& c, std::string_view v) { c.schedules = parse_number<int>(v); };
  top["both_models"] = [](ExperimentConfig& c, std::string_view v) { c.both_models = parse_bool(v); };
  top["max_drain_delay"] = [](ExperimentConfig& c, std::string_view v) { c.max_drain_delay = parse_number<int>(v); };
  top["max_start_delay"] = [](ExperimentConfig& c, std::string_view v) { c.max_start_delay = parse_number<int>(v); };
  top["warmup"] = [](ExperimentConfig& c, std::string_view v) { c.warmup = parse_number<std::size_t>(v); };

  auto& core = t["core"];
  core["width"] = [](ExperimentConfig& c, std::string_view v) { c.core.width = parse_number<int>(v); };
  core["frontend_depth"] = [](ExperimentConfig& c, std::string_view v) { c.core.frontend_depth = parse_number<int>(v); };
  core["iq_size"] = [](ExperimentConfig& c, std::string_view v) { c.core.iq_size = parse_number<int>(v); };
  core["rob_size"] = [](ExperimentConfig& c, std::string_view v) { c.core.rob_size = parse_number<int>(v); };
  core["lsq_size"] = [](ExperimentConfig& c, std::string_view v) { c.core.lsq_size = parse_number<int>(v); };
  core["phys_regs"] = [](ExperimentConfig& c, std::string_view v) { c.core.phys_regs = parse_number<int>(v); };
  core["store_buffer"] = [](ExperimentConfig& c, std::string_view v) { c.core.store_buffer = parse_number<int>(v); };
  core["in_order"] = [](ExperimentConfig& c, std::string_view v) { c.core.in_order = parse_bool(v); };
  core["memdep"] = [](ExperimentConfig& c, std::string_view v) { c.core.memdep = core::parse_memdep_mode(v); };
  core["allow_unrealistic"] = [](ExperimentConfig& c, std::string_view v) { c.core.allow_unrealistic = parse_bool(v); };
  for (auto [name, fu] : {std::pair{"alu", &core::CoreConfig::alu}, std::pair{"mul", &core::CoreConfig::mul},
                          std::pair{"load", &core::CoreConfig::load}, std::pair{"store", &core::CoreConfig::store}}) {
    core[std::string(name) + "_units"] = [fu](ExperimentConfig& c, std::string_view v) {
      (c.core.*fu).count = parse_number<int>(v);
    };
    core[std::string(name) + "_latency"] = [fu](ExperimentConfig& c, std::string_view v) {
      (c.core.*fu).latency = parse_number<int>(v);
    };
  }

  auto& pred = t["predictor"];
  pred["kind"] = [](ExperimentConfig& c, std::string_view v) { c.core.predictor.kind = bpred::parse_predictor_kind(v); };
  for (auto [name, field] : {std::pair{"bimodal_bits", &bpred::PredictorConfig::bimodal_bits},
                             std::pair{"history_bits", &bpred::PredictorConfig::history_bits},
                             std::pair{"pattern_bits", &bpred::PredictorConfig::pattern_bits},
                             std::pair{"chooser_bits", &bpred::PredictorConfig::chooser_bits},
                             std::pair{"btb_sets", &bpred::PredictorConfig::btb_sets},
                             std::pair{"btb_ways", &bpred::PredictorConfig::btb_ways}})
    pred[name] = [field](ExperimentConfig& c, std::string_view v) { c.core.predictor.*field = parse_number<int>(v); };

  auto& mem = t["memory"];
  mem["protocol"] = [](ExperimentConfig& c, std::string_view v) { c.mem.kind = parse_mem_kind(v); };
  mem["coherence"] = mem["protocol"];
  mem["flat_latency"] = [](ExperimentConfig& c, std::string_view v) { c.mem.flat_latency = parse_number<int>(v); };
  mem["memory_latency"] = [](ExperimentConfig& c, std::string_view v) { c.mem.memory_latency = parse_number<int>(v); };
  mem["data_packet_size"] = [](ExperimentConfig& c, std::string_view v) { c.mem.data_packet_size = parse_number<int>(v); };
  mem["llc_banks"] = [](ExperimentConfig& c, std::string_view v) { c.mem.llc_banks = parse_number<int>(v); };
  mem["l2"] = [](ExperimentConfig& c, std::string_view v) { c.mem.l2_enabled = parse_bool(v); };
  mem["block_size"] = [](ExperimentConfig& c, std::string_view v) {
    const auto b = parse_number<std::uint32_t>(v);
    for (auto* g : {&c.mem.l1i, &c.mem.l1d, &c.mem.l2, &c.mem.llc_bank}) g->block = b;
  };
  for (auto [name, geo] : {std::pair{"l1i", &memhier::MemConfig::l1i}, std::pair{"l1d", &memhier::MemConfig::l1d},
                           std::pair{"l2", &memhier::MemConfig::l2}, std::pair{"llc", &memhier::MemConfig::llc_bank}}) {
    const std::string n(name);
    mem[n + "_size"] = [geo](ExperimentConfig& c, std::string_view v) {
      (c.mem.*geo).capacity = parse_number<std::uint32_t>(v);
    };
    mem[n + "_assoc"] = [geo](ExperimentConfig& c, std::string_view v) {
      (c.mem.*geo).assoc = parse_number<std::uint32_t>(v);
    };
    mem[n + "_latency"] = [geo](ExperimentConfig& c, std::string_view v) {
      (c.mem.*geo).hit_latency = parse_number<int>(v);
    };
  }

  auto& noc = t["noc"];
  noc["topology"] = [](ExperimentConfig& c, std::string_view v) { c.mem.topology = noc::parse_topology_kind(v); };
  noc["cols"] = [](ExperimentConfig& c, std::string_view v) { c.mem.topo_cols = parse_number<int>(v); };
  noc["rows"] = [](ExperimentConfig& c, std::string_view v) { c.mem.topo_rows = parse_number<int>(v); };
  noc["link_latency"] = [](ExperimentConfig& c, std::string_view v) { c.mem.network.link_latency = parse_number<int>(v); };
  noc["queue_depth"] = [](ExperimentConfig& c, std::string_view v) { c.mem.network.queue_depth = parse_number<int>(v); };
  noc["ni_latency"] = [](ExperimentConfig& c, std::string_view v) { c.mem.network.ni_latency = parse_number<int>(v); };

  auto& proto = t["protocol"];
  proto["variants"] = [](ExperimentConfig& c, std::string_view v) {
    c.protocols.clear();
    std::string item;
    std::stringstream ss{std::string(v)};
    while (std::getline(ss, item, ',')) c.protocols.push_back(coherence::parse_variant(trim(item)));
  };
  proto["cores"] = [](ExperimentConfig& c, std::string_view v) { c.protocol_cores = parse_number<int>(v); };
  proto["mutate"] = [](ExperimentConfig& c, std::string_view v) { c.mutate_protocol = parse_bool(v); };

  auto& laws = t["laws"];
  laws["generations"] = [](ExperimentConfig& c, std::string_view v) { c.laws.generations = parse_number<int>(v); };
  laws["area_ratio"] = [](ExperimentConfig& c, std::string_view v) { c.laws.area_ratio = parse_number<double>(v); };
  laws["parallel_fraction"] = [](ExperimentConfig& c, std::string_view v) {
    c.laws.parallel_fraction = parse_number<double>(v);
  };
  laws["cores"] = [](ExperimentConfig& c, std::string_view v) { c.laws.amdahl_cores = parse_number<std::int64_t>(v); };
  laws["growth_rate"] = [](ExperimentConfig& c, std::string_view v) { c.laws.growth_rate = parse_number<double>(v); };
  laws["growth_years"] = [](ExperimentConfig& c, std::string_view v) { c.laws.growth_years = parse_number<double>(v); };
  laws["bypass_units"] = [](ExperimentConfig& c, std::string_view v) {
    c.laws.bypass_units = parse_number<std::int64_t>(v);
  };
  return t;
}

void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw Error(std::string(what) + " path is required for this mode");
  if (!std::filesystem::exists(p)) throw Error(std::string(what) + " file not found: " + p.string());
}

}  // namespace

void ExperimentConfig::validate() const {
  core.validate();
  if (cores < 0 || cores > 32) throw Error("cores must be in 0..32 (0: one per program thread)");
  mem.validate(cores > 0 ? cores : 1);
  if (budget == 0) throw Error("budget must be positive");
  if (schedules < 1) throw Error("schedules must be >= 1");
  if (max_drain_delay < -1 || max_start_delay < -1) throw Error("random delays must be >= 0 (or -1 for the default)");
  if (protocol_cores < 1 || protocol_cores > 4) throw Error("protocol cores must be in 1..4");
  if (protocols.empty()) throw Error("protocol variants must not be empty");
  switch (mode) {
    case Mode::Run: require_file(program, "program"); break;
    case Mode::Bpred: require_file(trace, "trace"); break;
    case Mode::Litmus: require_file(litmus, "litmus"); break;
    default: break;
  }
}

void check_config(const ExperimentConfig& config) {
  try {
    config.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(0, e.what());
  }
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir, bool validate) {
  const auto table = make_table(base_dir);
  ExperimentConfig c;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view s = raw;
    if (auto h = s.find('#'); h != std::string_view::npos) s = s.substr(0, h);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError(line, "malformed section header");
      section = std::string(trim(s.substr(1, s.size() - 2)));
      if (!table.count(section)) throw ConfigError(line, "unknown section [" + section + "]");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ConfigError(line, "expected key = value");
    const std::string key(trim(s.substr(0, eq)));
    const auto value = trim(s.substr(eq + 1));
    const auto& keys = table.at(section);
    auto it = keys.find(key);
    if (it == keys.end())
      throw ConfigError(line, "unknown key '" + key + "'" + (section.empty() ? "" : " in [" + section + "]"));
    try {
      it->second(c, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(line, key + ": " + e.what() + " (got '" + std::string(value) + "')");
    }
  }
  if (validate) check_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, bool validate) {
  std::ifstream in(path);
  if (!in) throw Error("config file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path(), validate);
}

}  // namespace mcsim::harness
