#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rvnn/kernels.hpp"
#include "rvnn/sim.hpp"

// Benchmark harness: builds a suite of synthetic radio-resource-management
// style networks (MLP / LSTM / small CNN), runs every layer of every network
// through the kernel generator and simulator at each requested optimization
// level, bit-checks all outputs against the golden models, and aggregates
// per-level cycle statistics, speedups and instruction histograms.
//
// A report is only produced when every simulated output matched its golden
// oracle, so performance numbers always describe correct kernels. Running
// the same specs with the same seed and config yields byte-identical
// reports regardless of thread count.

namespace rvnn::bench {

// One layer; `kind` selects which fields are meaningful. Weights are
// synthesized from the owning network's seed.
struct LayerSpec {
  enum class Kind { kFc, kLstm, kConv };
  Kind kind = Kind::kFc;
  int in = 0;     // fc c_in / lstm n_in / conv input channels
  int out = 0;    // fc c_out / lstm n_hidden / conv output channels
  int steps = 1;  // lstm only: time steps the cell runs (constant input)
  int h_k = 3, w_k = 3;    // conv kernel dims (odd)
  int h_im = 0, w_im = 0;  // conv image dims

  size_t in_elems() const;   // element count consumed from the previous layer
  size_t out_elems() const;  // element count handed to the next layer
};

struct NetworkSpec {
  std::string name;
  uint32_t seed = 1;
  std::vector<LayerSpec> layers;
};

// Throws std::invalid_argument when a layer is malformed or consecutive
// layer dimensions do not chain (out_elems of one != in_elems of the next).
void validate(const NetworkSpec&);

// Ten synthetic networks spanning the kernel mix the generator targets:
// seven MLPs of increasing width, two LSTMs, one small CNN. Dimensions are
// calibration artifacts chosen so the suite is dot-product dominated.
std::vector<NetworkSpec> default_suite();

// Knob set the suite is calibrated for (tile_n 8, ifm_tile 2, hardware
// activations). The `level` field is a placeholder; run_suite overrides it.
kernels::OptLevel default_knobs();

// JSON schema (versioned, see README):
//   {"version": 1, "networks": [{"name": ..., "seed": ...,
//     "layers": [{"kind": "fc", "in": 32, "out": 16}, ...]}]}
NetworkSpec spec_from_json(const nlohmann::json&);
nlohmann::json spec_to_json(const NetworkSpec&);
std::vector<NetworkSpec> suite_from_json(const nlohmann::json&);
nlohmann::json suite_to_json(const std::vector<NetworkSpec>&);

struct NetworkResult {
  std::string name;
  uint64_t macs = 0;  // multiply-accumulates per forward pass (lstm: x steps)
  std::map<char, sim::CycleStats> by_level;  // key: level letter 'A'..'E'
};

struct LevelTotals {
  sim::CycleStats stats;       // summed over all networks
  double speedup_vs_a = 1.0;   // baseline cycles / this level's cycles
  double macs_per_cycle = 0.0;
};

struct BenchReport {
  std::vector<char> levels;  // ascending; always contains 'A'
  std::vector<NetworkResult> networks;
  std::map<char, LevelTotals> totals;
  uint64_t suite_macs = 0;
  kernels::OptLevel knobs;
  sim::SimConfig config;
};

// Runs (network x level) jobs — in parallel when OpenMP is enabled, each job
// owning an independent simulator — then reduces in network order. Level A
// must be requested (it is the speedup denominator). Throws
// std::runtime_error with network/layer context if any simulated output
// differs from the golden model.
BenchReport run_suite(const std::vector<NetworkSpec>& specs,
                      const std::vector<kernels::Level>& levels,
                      const kernels::OptLevel& knobs = default_knobs(),
                      const sim::SimConfig& config = {});

enum class ReportFormat { kJson, kCsv, kMarkdown };
ReportFormat format_from_name(const std::string&);  // "json"/"csv"/"markdown"

// Deterministic rendering. The markdown form emits, per level, a cycle
// histogram of the top_k mnemonics plus an "oth." row, a Σ row, and an
// "Impr." line with the speedup over the baseline, followed by a suite
// summary table.
std::string emit_report(const BenchReport&, ReportFormat, int top_k = 6);

}  // namespace rvnn::bench
