#include "rvnn/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <variant>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace rvnn::bench {

namespace {

using kernels::Level;

const char* kind_name(LayerSpec::Kind k) {
  switch (k) {
    case LayerSpec::Kind::kFc: return "fc";
    case LayerSpec::Kind::kLstm: return "lstm";
    case LayerSpec::Kind::kConv: return "conv";
  }
  return "?";
}

LayerSpec::Kind kind_from_name(const std::string& s) {
  if (s == "fc") return LayerSpec::Kind::kFc;
  if (s == "lstm") return LayerSpec::Kind::kLstm;
  if (s == "conv") return LayerSpec::Kind::kConv;
  throw std::invalid_argument("unknown layer kind '" + s +
                              "' (expected fc, lstm, or conv)");
}

uint64_t layer_macs(const LayerSpec& l) {
  switch (l.kind) {
    case LayerSpec::Kind::kFc:
      return static_cast<uint64_t>(l.in) * l.out;
    case LayerSpec::Kind::kLstm:
      return 4ull * l.out * (static_cast<uint64_t>(l.in) + l.out) * l.steps;
    case LayerSpec::Kind::kConv:
      return static_cast<uint64_t>(l.in) * l.out * l.h_im * l.w_im * l.h_k *
             l.w_k;
  }
  return 0;
}

std::string fmt(double v, int prec) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Job execution
// ---------------------------------------------------------------------------

using AnyLayer =
    std::variant<kernels::FcLayer, kernels::LstmLayer, kernels::ConvLayer>;

struct MatNet {
  std::vector<AnyLayer> layers;
  std::vector<int16_t> x0;
};

// Weights and the input vector come from one generator seeded per network,
// so every level sees identical data.
MatNet materialize(const NetworkSpec& s) {
  std::mt19937 rng(s.seed);
  MatNet m;
  for (const LayerSpec& l : s.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::kFc:
        m.layers.emplace_back(kernels::make_fc(l.in, l.out, rng));
        break;
      case LayerSpec::Kind::kLstm:
        m.layers.emplace_back(kernels::make_lstm(l.in, l.out, rng));
        break;
      case LayerSpec::Kind::kConv:
        m.layers.emplace_back(kernels::make_conv(l.in, l.out, l.h_k, l.w_k,
                                                 l.h_im, l.w_im, rng));
        break;
    }
  }
  m.x0 = kernels::random_q(s.layers.front().in_elems(), rng);
  return m;
}

[[noreturn]] void mismatch(const NetworkSpec& spec, size_t layer_idx,
                           const char* kind, Level level) {
  throw std::runtime_error(
      "functional mismatch vs golden model: network '" + spec.name +
      "', layer " + std::to_string(layer_idx) + " (" + kind + "), level " +
      std::string(1, kernels::level_letter(level)));
}

sim::CycleStats run_network(const NetworkSpec& spec, const MatNet& m,
                            Level level, const kernels::OptLevel& knobs,
                            const sim::SimConfig& cfg) {
  kernels::OptLevel ol = knobs;
  ol.level = level;
  sim::CycleStats acc;
  std::vector<int16_t> x = m.x0;
  for (size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& ls = spec.layers[i];
    if (const auto* fc = std::get_if<kernels::FcLayer>(&m.layers[i])) {
      kernels::FcRun run = kernels::run_fc(*fc, ol, x, cfg);
      if (run.y != kernels::golden_fc_q(*fc, x)) mismatch(spec, i, "fc", level);
      acc.merge(run.stats);
      x = std::move(run.y);
    } else if (const auto* cell = std::get_if<kernels::LstmLayer>(&m.layers[i])) {
      kernels::LstmStateQ st{
          std::vector<int16_t>(static_cast<size_t>(cell->n_hidden), 0),
          std::vector<int16_t>(static_cast<size_t>(cell->n_hidden), 0)};
      for (int step = 0; step < ls.steps; ++step) {
        kernels::LstmRun run = kernels::run_lstm(*cell, ol, x, st, cfg);
        kernels::LstmStateQ gold = kernels::golden_lstm_step_q(*cell, x, st);
        if (run.state.h != gold.h || run.state.c != gold.c)
          mismatch(spec, i, "lstm", level);
        st = std::move(run.state);
        acc.merge(run.stats);
      }
      x = st.h;
    } else {
      const auto& conv = std::get<kernels::ConvLayer>(m.layers[i]);
      kernels::ConvRun run = kernels::run_conv(conv, ol, x, cfg);
      if (run.y != kernels::golden_conv_q(conv, x)) mismatch(spec, i, "conv", level);
      acc.merge(run.stats);
      x = std::move(run.y);
    }
  }
  return acc;
}

json stats_brief(const sim::CycleStats& s) {
  return {{"cycles", s.cycles},
          {"instrs", s.instrs},
          {"load_use_stalls", s.load_use_stalls},
          {"branch_taken_stalls", s.branch_taken_stalls}};
}

json histogram_json(const sim::CycleStats& s) {
  json h = json::array();
  for (const auto& [op, cnt] : s.ranked())
    h.push_back({{"op", isa::op_info(op).name},
                 {"cycles", cnt.cycles},
                 {"instrs", cnt.instrs}});
  return h;
}

}  // namespace

size_t LayerSpec::in_elems() const {
  return kind == Kind::kConv ? static_cast<size_t>(h_im) * w_im * in
                             : static_cast<size_t>(in);
}

size_t LayerSpec::out_elems() const {
  return kind == Kind::kConv ? static_cast<size_t>(h_im) * w_im * out
                             : static_cast<size_t>(out);
}

void validate(const NetworkSpec& s) {
  if (s.name.empty())
    throw std::invalid_argument("network spec needs a non-empty name");
  if (s.layers.empty())
    throw std::invalid_argument("network '" + s.name + "' has no layers");
  for (size_t i = 0; i < s.layers.size(); ++i) {
    const LayerSpec& l = s.layers[i];
    auto fail = [&](const std::string& why) {
      throw std::invalid_argument("network '" + s.name + "', layer " +
                                  std::to_string(i) + ": " + why);
    };
    if (l.in <= 0 || l.out <= 0) fail("dimensions must be positive");
    if (l.kind == LayerSpec::Kind::kLstm && l.steps < 1)
      fail("lstm needs steps >= 1");
    if (l.kind == LayerSpec::Kind::kConv) {
      if (l.h_k <= 0 || l.w_k <= 0 || l.h_k % 2 == 0 || l.w_k % 2 == 0)
        fail("conv kernel dims must be odd and positive");
      if (l.h_im <= 0 || l.w_im <= 0) fail("conv image dims must be positive");
    }
    if (i > 0 && l.in_elems() != s.layers[i - 1].out_elems())
      fail("input size " + std::to_string(l.in_elems()) +
           " does not chain from previous layer's output size " +
           std::to_string(s.layers[i - 1].out_elems()));
  }
}

std::vector<NetworkSpec> default_suite() {
  auto fc = [](int in, int out) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::kFc;
    l.in = in;
    l.out = out;
    return l;
  };
  auto lstm = [](int in, int hidden, int steps) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::kLstm;
    l.in = in;
    l.out = hidden;
    l.steps = steps;
    return l;
  };
  auto conv = [](int in, int out, int k, int im) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::kConv;
    l.in = in;
    l.out = out;
    l.h_k = l.w_k = k;
    l.h_im = l.w_im = im;
    return l;
  };
  std::vector<NetworkSpec> suite = {
      {"power-mlp-s", 11, {fc(32, 32), fc(32, 16)}},
      {"power-mlp-m", 12, {fc(64, 64), fc(64, 32)}},
      {"sched-mlp", 13, {fc(128, 128), fc(128, 64)}},
      {"beam-mlp", 14, {fc(256, 128), fc(128, 64)}},
      {"csi-mlp", 15, {fc(256, 256), fc(256, 128)}},
      {"handover-mlp", 16, {fc(128, 256), fc(256, 128), fc(128, 16)}},
      {"mcs-mlp", 17, {fc(192, 192), fc(192, 96)}},
      {"seq-lstm-s", 18, {lstm(64, 64, 8)}},
      {"seq-lstm-l", 19, {lstm(128, 128, 4)}},
      {"spectro-cnn", 20, {conv(8, 8, 3, 8), conv(8, 8, 3, 8), fc(512, 32)}},
  };
  for (const NetworkSpec& s : suite) validate(s);
  return suite;
}

kernels::OptLevel default_knobs() {
  kernels::OptLevel k;
  k.tile_n = 8;
  k.ifm_tile = 2;
  k.hw_act = true;
  return k;
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec s;
  s.name = j.at("name").get<std::string>();
  s.seed = j.value("seed", 1u);
  for (const json& jl : j.at("layers")) {
    LayerSpec l;
    l.kind = kind_from_name(jl.at("kind").get<std::string>());
    l.in = jl.at("in").get<int>();
    l.out = jl.at("out").get<int>();
    if (l.kind == LayerSpec::Kind::kLstm) l.steps = jl.value("steps", 1);
    if (l.kind == LayerSpec::Kind::kConv) {
      l.h_k = jl.value("h_k", 3);
      l.w_k = jl.value("w_k", 3);
      l.h_im = jl.at("h_im").get<int>();
      l.w_im = jl.at("w_im").get<int>();
    }
    s.layers.push_back(l);
  }
  validate(s);
  return s;
}

json spec_to_json(const NetworkSpec& s) {
  json layers = json::array();
  for (const LayerSpec& l : s.layers) {
    json jl = {{"kind", kind_name(l.kind)}, {"in", l.in}, {"out", l.out}};
    if (l.kind == LayerSpec::Kind::kLstm) jl["steps"] = l.steps;
    if (l.kind == LayerSpec::Kind::kConv) {
      jl["h_k"] = l.h_k;
      jl["w_k"] = l.w_k;
      jl["h_im"] = l.h_im;
      jl["w_im"] = l.w_im;
    }
    layers.push_back(jl);
  }
  return {{"name", s.name}, {"seed", s.seed}, {"layers", layers}};
}

std::vector<NetworkSpec> suite_from_json(const json& j) {
  const json* nets = &j;
  if (j.is_object()) {
    if (j.value("version", 1) != 1)
      throw std::invalid_argument("unsupported network-spec schema version");
    nets = &j.at("networks");
  }
  if (!nets->is_array())
    throw std::invalid_argument("expected a JSON array of network specs");
  std::vector<NetworkSpec> out;
  for (const json& n : *nets) out.push_back(spec_from_json(n));
  return out;
}

json suite_to_json(const std::vector<NetworkSpec>& specs) {
  json nets = json::array();
  for (const NetworkSpec& s : specs) nets.push_back(spec_to_json(s));
  return {{"version", 1}, {"networks", nets}};
}

BenchReport run_suite(const std::vector<NetworkSpec>& specs,
                      const std::vector<kernels::Level>& levels_in,
                      const kernels::OptLevel& knobs,
                      const sim::SimConfig& config) {
  if (specs.empty()) throw std::invalid_argument("empty benchmark suite");
  for (const NetworkSpec& s : specs) validate(s);
  std::vector<Level> levels = levels_in;
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.empty() || levels.front() != Level::kA)
    throw std::invalid_argument(
        "level A must be included: it is the speedup baseline");

  struct Job {
    size_t net, lvl;
  };
  std::vector<Job> jobs;
  for (size_t n = 0; n < specs.size(); ++n)
    for (size_t l = 0; l < levels.size(); ++l) jobs.push_back({n, l});

  std::vector<sim::CycleStats> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
#pragma omp parallel for schedule(dynamic)
  for (long long j = 0; j < static_cast<long long>(jobs.size()); ++j) {
    const Job& job = jobs[static_cast<size_t>(j)];
    try {
      MatNet m = materialize(specs[job.net]);
      results[static_cast<size_t>(j)] =
          run_network(specs[job.net], m, levels[job.lvl], knobs, config);
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(j)] = e.what();
    }
  }
  for (const std::string& e : errors)
    if (!e.empty()) throw std::runtime_error(e);

  BenchReport r;
  r.knobs = knobs;
  r.config = config;
  for (Level l : levels) r.levels.push_back(kernels::level_letter(l));
  for (size_t n = 0; n < specs.size(); ++n) {
    NetworkResult nr;
    nr.name = specs[n].name;
    for (const LayerSpec& l : specs[n].layers) nr.macs += layer_macs(l);
    for (size_t l = 0; l < levels.size(); ++l)
      nr.by_level[kernels::level_letter(levels[l])] =
          results[n * levels.size() + l];
    r.suite_macs += nr.macs;
    r.networks.push_back(std::move(nr));
  }
  for (char lvl : r.levels) {
    LevelTotals t;
    for (const NetworkResult& nr : r.networks) t.stats.merge(nr.by_level.at(lvl));
    t.macs_per_cycle =
        t.stats.cycles ? static_cast<double>(r.suite_macs) / t.stats.cycles : 0.0;
    r.totals[lvl] = t;
  }
  const uint64_t base = r.totals.at('A').stats.cycles;
  for (auto& [lvl, t] : r.totals)
    t.speedup_vs_a = t.stats.cycles ? static_cast<double>(base) / t.stats.cycles
                                    : 0.0;
  return r;
}

ReportFormat format_from_name(const std::string& s) {
  if (s == "json") return ReportFormat::kJson;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "markdown" || s == "md") return ReportFormat::kMarkdown;
  throw std::invalid_argument("unknown report format '" + s +
                              "' (expected json, csv, or markdown)");
}

namespace {

std::string emit_json(const BenchReport& r) {
  json j;
  j["version"] = 1;
  j["config"] = {{"load_use_stall", r.config.load_use_stall},
                 {"branch_taken_penalty", r.config.branch_taken_penalty},
                 {"mem_latency", r.config.mem_latency},
                 {"max_cycles", r.config.max_cycles}};
  j["knobs"] = {{"tile_n", r.knobs.tile_n},
                {"ifm_tile", r.knobs.ifm_tile},
                {"hw_act", r.knobs.hw_act}};
  j["levels"] = json::array();
  for (char l : r.levels) j["levels"].push_back(std::string(1, l));
  j["suite_macs"] = r.suite_macs;
  j["networks"] = json::array();
  for (const NetworkResult& nr : r.networks) {
    json jn = {{"name", nr.name}, {"macs", nr.macs}, {"levels", json::object()}};
    for (const auto& [lvl, st] : nr.by_level)
      jn["levels"][std::string(1, lvl)] = stats_brief(st);
    j["networks"].push_back(jn);
  }
  j["totals"] = json::object();
  for (const auto& [lvl, t] : r.totals) {
    json jt = stats_brief(t.stats);
    jt["speedup_vs_a"] = t.speedup_vs_a;
    jt["macs_per_cycle"] = t.macs_per_cycle;
    jt["histogram"] = histogram_json(t.stats);
    j["totals"][std::string(1, lvl)] = jt;
  }
  return j.dump(2) + "\n";
}

std::string emit_csv(const BenchReport& r, int top_k) {
  std::ostringstream os;
  os << "row,network,level,op,cycles,instrs,load_use_stalls,"
        "branch_taken_stalls,macs,speedup_vs_a,macs_per_cycle\n";
  for (const NetworkResult& nr : r.networks)
    for (const auto& [lvl, st] : nr.by_level)
      os << "network," << nr.name << ',' << lvl << ",," << st.cycles << ','
         << st.instrs << ',' << st.load_use_stalls << ','
         << st.branch_taken_stalls << ',' << nr.macs << ",,\n";
  for (const auto& [lvl, t] : r.totals) {
    os << "total,," << lvl << ",," << t.stats.cycles << ',' << t.stats.instrs
       << ',' << t.stats.load_use_stalls << ',' << t.stats.branch_taken_stalls
       << ',' << r.suite_macs << ',' << fmt(t.speedup_vs_a, 3) << ','
       << fmt(t.macs_per_cycle, 4) << '\n';
    auto ranked = t.stats.ranked();
    for (size_t i = 0; i < ranked.size() && i < static_cast<size_t>(top_k); ++i)
      os << "histogram,," << lvl << ',' << isa::op_info(ranked[i].first).name
         << ',' << ranked[i].second.cycles << ',' << ranked[i].second.instrs
         << ",,,,,\n";
  }
  return os.str();
}

std::string emit_markdown(const BenchReport& r, int top_k) {
  std::ostringstream os;
  os << "# Benchmark report\n\n";
  os << "Knobs: tile_n=" << r.knobs.tile_n << ", ifm_tile=" << r.knobs.ifm_tile
     << ", hw_act=" << (r.knobs.hw_act ? "on" : "off")
     << "; stalls: load-use=" << r.config.load_use_stall
     << ", branch=" << r.config.branch_taken_penalty
     << ", stream-latency=" << r.config.mem_latency << "\n";
  for (char lvl : r.levels) {
    const LevelTotals& t = r.totals.at(lvl);
    os << "\n## Level " << lvl << " cycle histogram\n\n";
    os << "| op | cycles | % | instrs |\n|---|---:|---:|---:|\n";
    auto ranked = t.stats.ranked();
    uint64_t shown_cycles = 0, shown_instrs = 0;
    size_t i = 0;
    for (; i < ranked.size() && i < static_cast<size_t>(top_k); ++i) {
      const auto& [op, cnt] = ranked[i];
      shown_cycles += cnt.cycles;
      shown_instrs += cnt.instrs;
      os << "| " << isa::op_info(op).name << " | " << cnt.cycles << " | "
         << fmt(100.0 * cnt.cycles / t.stats.cycles, 1) << " | " << cnt.instrs
         << " |\n";
    }
    if (i < ranked.size())
      os << "| oth. | " << t.stats.cycles - shown_cycles << " | "
         << fmt(100.0 * (t.stats.cycles - shown_cycles) / t.stats.cycles, 1)
         << " | " << t.stats.instrs - shown_instrs << " |\n";
    os << "| **Σ** | " << t.stats.cycles << " | 100.0 | " << t.stats.instrs
       << " |\n";
    os << "\nImpr. vs baseline: " << fmt(t.speedup_vs_a, 2) << "x\n";
  }
  os << "\n## Suite summary\n\n";
  os << "| level | cycles | instrs | load-use stalls | branch stalls | "
        "speedup | MACs/cycle |\n|---|---:|---:|---:|---:|---:|---:|\n";
  for (char lvl : r.levels) {
    const LevelTotals& t = r.totals.at(lvl);
    os << "| " << lvl << " | " << t.stats.cycles << " | " << t.stats.instrs
       << " | " << t.stats.load_use_stalls << " | "
       << t.stats.branch_taken_stalls << " | " << fmt(t.speedup_vs_a, 2)
       << "x | " << fmt(t.macs_per_cycle, 3) << " |\n";
  }
  os << "\nSuite MACs: " << r.suite_macs << "\n";
  return os.str();
}

}  // namespace

std::string emit_report(const BenchReport& r, ReportFormat f, int top_k) {
  if (top_k < 1) throw std::invalid_argument("top_k must be >= 1");
  switch (f) {
    case ReportFormat::kJson: return emit_json(r);
    case ReportFormat::kCsv: return emit_csv(r, top_k);
    case ReportFormat::kMarkdown: return emit_markdown(r, top_k);
  }
  throw std::invalid_argument("unknown report format");
}

}  // namespace rvnn::bench
