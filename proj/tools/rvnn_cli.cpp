#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rvnn/activation.hpp"
#include "rvnn/bench.hpp"
#include "rvnn/isa.hpp"
#include "rvnn/kernels.hpp"
#include "rvnn/sim.hpp"

// Command-line front end:
//   rvnn assemble <in.s> [-o out.json]         assembly -> program JSON
//   rvnn run <prog.s|prog.json> [--trace ...]  simulate to halt, print stats
//   rvnn bench [--levels ... --tile ...]       run the benchmark suite
//   rvnn sweep-activation [--ranges ...]       PLA accuracy sweep (CSV)
// Exits nonzero on any error, including functional mismatches in bench.

namespace {

using nlohmann::json;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

rvnn::isa::Program load_program(const std::string& path) {
  std::string text = slurp(path);
  if (ends_with(path, ".s") || ends_with(path, ".asm"))
    return rvnn::isa::assemble(text);
  return rvnn::isa::program_from_json(json::parse(text));
}

rvnn::sim::SimConfig config_from_file(const std::string& path) {
  rvnn::sim::SimConfig cfg;
  if (path.empty()) return cfg;
  json j = json::parse(slurp(path));
  cfg.load_use_stall = j.value("load_use_stall", cfg.load_use_stall);
  cfg.branch_taken_penalty =
      j.value("branch_taken_penalty", cfg.branch_taken_penalty);
  cfg.mem_latency = j.value("mem_latency", cfg.mem_latency);
  cfg.max_cycles = j.value("max_cycles", cfg.max_cycles);
  return cfg;
}

std::vector<rvnn::kernels::Level> parse_levels(const std::string& letters) {
  std::vector<rvnn::kernels::Level> levels;
  for (char c : letters)
    if (c != ',' && c != ' ')
      levels.push_back(rvnn::kernels::level_from_letter(c));
  if (levels.empty()) throw std::invalid_argument("no optimization levels given");
  return levels;
}

int cmd_assemble(const std::string& input, const std::string& out) {
  rvnn::isa::Program p = rvnn::isa::assemble(slurp(input));
  spill(out, rvnn::isa::program_to_json(p).dump(2) + "\n");
  return 0;
}

int cmd_run(const std::string& input, const std::string& config_path,
            bool trace, const std::string& dump, const std::string& out) {
  rvnn::isa::Program p = load_program(input);
  rvnn::sim::Core core(p, config_from_file(config_path));
  if (trace)
    core.trace = [](const rvnn::sim::TraceEntry& t) {
      std::cerr << "cycle " << t.cycle << "  pc " << t.pc << "  "
                << rvnn::isa::format_instr(t.instr) << "\n";
    };
  core.run();
  const rvnn::sim::CycleStats& s = core.stats();
  json j = s.to_json();
  if (!dump.empty()) {
    // --dump BASE:COUNT prints COUNT halfwords starting at BASE.
    size_t colon = dump.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("--dump wants BASE:COUNT");
    uint32_t base = static_cast<uint32_t>(std::stoul(dump.substr(0, colon), nullptr, 0));
    size_t count = std::stoul(dump.substr(colon + 1), nullptr, 0);
    json mem = json::array();
    for (size_t i = 0; i < count; ++i)
      mem.push_back(core.mem().read_i16(base + 2 * static_cast<uint32_t>(i)));
    j["memory"] = {{"base", base}, {"halfwords", mem}};
  }
  spill(out, j.dump(2) + "\n");
  return 0;
}

int cmd_bench(const std::string& spec_path, const std::string& levels,
              int tile, int ifm, bool sw_act, int64_t seed,
              const std::string& config_path, const std::string& format,
              int top_k, const std::string& out) {
  std::vector<rvnn::bench::NetworkSpec> specs =
      spec_path.empty() ? rvnn::bench::default_suite()
                        : rvnn::bench::suite_from_json(json::parse(slurp(spec_path)));
  if (seed >= 0)
    for (size_t i = 0; i < specs.size(); ++i)
      specs[i].seed = static_cast<uint32_t>(seed) + static_cast<uint32_t>(i);
  rvnn::kernels::OptLevel knobs = rvnn::bench::default_knobs();
  if (tile > 0) knobs.tile_n = tile;
  if (ifm > 0) knobs.ifm_tile = ifm;
  knobs.hw_act = !sw_act;
  rvnn::bench::BenchReport report = rvnn::bench::run_suite(
      specs, parse_levels(levels), knobs, config_from_file(config_path));
  spill(out, rvnn::bench::emit_report(
                 report, rvnn::bench::format_from_name(format), top_k));
  return 0;
}

int cmd_sweep(const std::string& func, const std::string& ranges,
              const std::string& segments, const std::string& out) {
  auto parse_list = [](const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) v.push_back(std::stod(item));
    if (v.empty()) throw std::invalid_argument("empty list");
    return v;
  };
  std::vector<double> range_bounds = parse_list(ranges);
  std::vector<int> m_counts;
  for (double d : parse_list(segments)) m_counts.push_back(static_cast<int>(d));

  std::vector<rvnn::activation::SweepRow> rows;
  auto add = [&](rvnn::activation::PlaFunc f) {
    auto r = rvnn::activation::error_sweep(f, range_bounds, m_counts);
    rows.insert(rows.end(), r.begin(), r.end());
  };
  if (func == "tanh" || func == "both") add(rvnn::activation::PlaFunc::kTanh);
  if (func == "sig" || func == "both") add(rvnn::activation::PlaFunc::kSig);
  if (rows.empty())
    throw std::invalid_argument("--func must be tanh, sig, or both");
  spill(out, rvnn::activation::sweep_to_csv(rows));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RNN-extended RISC-V kernel simulator and benchmark harness"};
  app.require_subcommand(1);

  std::string input, out, config_path, dump;
  bool trace = false;

  auto* assemble = app.add_subcommand("assemble", "Assemble to program JSON");
  assemble->add_option("input", input, "assembly source (.s)")
      ->required()
      ->check(CLI::ExistingFile);
  assemble->add_option("-o,--out", out, "output path (default stdout)");

  auto* run = app.add_subcommand("run", "Simulate a program to halt");
  run->add_option("input", input, "program (.s/.asm or program JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--config", config_path, "simulator config JSON")
      ->check(CLI::ExistingFile);
  run->add_flag("--trace", trace, "print an instruction trace to stderr");
  run->add_option("--dump", dump, "dump memory halfwords, BASE:COUNT");
  run->add_option("-o,--out", out, "stats output path (default stdout)");

  std::string spec_path, levels = "ABCDE", format = "markdown";
  int tile = 0, ifm = 0, top_k = 6;
  int64_t seed = -1;
  bool sw_act = false;
  auto* bench = app.add_subcommand("bench", "Run the benchmark suite");
  bench->add_option("--spec,--config-suite", spec_path,
                    "network suite JSON (default: built-in suite)")
      ->check(CLI::ExistingFile);
  bench->add_option("--levels", levels, "optimization levels, e.g. ABC");
  bench->add_option("--tile", tile, "output tile size (default 8)");
  bench->add_option("--ifm", ifm, "input words per iteration at level E");
  bench->add_flag("--sw-act", sw_act, "software PLA instead of pl.tanh/pl.sig");
  bench->add_option("--seed", seed, "override network seeds (seed+index)");
  bench->add_option("--config", config_path, "simulator config JSON")
      ->check(CLI::ExistingFile);
  bench->add_option("--format", format, "json | csv | markdown");
  bench->add_option("--top-k", top_k, "histogram rows per level");
  bench->add_option("-o,--out", out, "report path (default stdout)");

  std::string func = "both", ranges = "1,2,4,8", segments = "8,16,32,64,128";
  auto* sweep = app.add_subcommand("sweep-activation",
                                   "PLA approximation error sweep (CSV)");
  sweep->add_option("--func", func, "tanh | sig | both");
  sweep->add_option("--ranges", ranges, "comma-separated range bounds");
  sweep->add_option("--segments", segments, "comma-separated interval counts");
  sweep->add_option("-o,--out", out, "CSV path (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (assemble->parsed()) return cmd_assemble(input, out);
    if (run->parsed()) return cmd_run(input, config_path, trace, dump, out);
    if (bench->parsed())
      return cmd_bench(spec_path, levels, tile, ifm, sw_act, seed, config_path,
                       format, top_k, out);
    if (sweep->parsed()) return cmd_sweep(func, ranges, segments, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
