#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "rvnn/isa.hpp"

// Functional + cycle-approximate simulator for a single-issue in-order core.
//
// Cycle model
// -----------
// Every instruction retires in one base cycle. Extra cycles come from three
// stall sources, and from nothing else:
//
//  * load-use: when the instruction immediately following a load (lw/lh/lb
//    and their post-increment forms) reads the loaded register, the pipeline
//    inserts `load_use_stall` bubble cycles (default 1). The bubble is
//    charged to the load's mnemonic in the per-op statistics, matching how
//    profilers attribute it.
//  * taken control flow: taken branches, jal and jalr pay
//    `branch_taken_penalty` cycles (default 1). Hardware-loop back-edges are
//    free; that is the point of them.
//  * stream-register wait: pl.sdotsp.h.k reads stream register k and then
//    starts a memory fetch of the next operand word into the same register;
//    the fetch completes `mem_latency` cycles after the instruction starts
//    (default 2). Reading the register again earlier stalls until the data
//    arrives, so two same-slot instructions back to back cost one bubble
//    while the usual alternating .0/.1 pattern runs stall-free. These waits
//    are counted in the load_use bucket.
//
// The functional state is exact regardless of the timing knobs: changing
// SimConfig never changes a single architectural value, only cycle counts.
// Total cycles always equal retired instructions plus recorded stalls.
//
// The program counter is an index into Program::text. A `halt` instruction
// stops execution; running off the end of the text is a trap. gpr x0 reads
// as zero and ignores writes. Memory is a sparse byte-addressed space that
// reads as zero until written; lw/sw require 4-byte and lh/sh 2-byte
// alignment.

namespace rvnn::sim {

struct SimConfig {
  int load_use_stall = 1;
  int branch_taken_penalty = 1;
  int mem_latency = 2;           // stream-register fetch latency
  uint64_t max_cycles = 1ull << 40;
};

class SimTrap : public std::runtime_error {
 public:
  SimTrap(const std::string& msg, uint32_t pc, uint64_t cycle)
      : std::runtime_error(msg + " (pc=" + std::to_string(pc) +
                           ", cycle=" + std::to_string(cycle) + ")"),
        pc(pc), cycle(cycle) {}
  uint32_t pc;
  uint64_t cycle;
};

// Sparse little-endian memory, zero-filled on first touch.
class Memory {
 public:
  uint8_t read8(uint32_t addr) const;
  uint16_t read16(uint32_t addr) const;
  uint32_t read32(uint32_t addr) const;
  void write8(uint32_t addr, uint8_t v);
  void write16(uint32_t addr, uint16_t v);
  void write32(uint32_t addr, uint32_t v);
  int16_t read_i16(uint32_t addr) const { return static_cast<int16_t>(read16(addr)); }

 private:
  static constexpr uint32_t kPageBits = 12;
  const std::vector<uint8_t>* page(uint32_t addr) const;
  std::vector<uint8_t>& page_mut(uint32_t addr);
  std::unordered_map<uint32_t, std::vector<uint8_t>> pages_;
};

struct OpCount {
  uint64_t instrs = 0;
  uint64_t cycles = 0;
};

struct CycleStats {
  std::array<OpCount, isa::kOpCount> by_op{};
  uint64_t instrs = 0;
  uint64_t cycles = 0;
  uint64_t load_use_stalls = 0;     // includes stream-register waits
  uint64_t branch_taken_stalls = 0;

  void merge(const CycleStats& o);
  nlohmann::json to_json() const;
  // Ops sorted by descending cycle count, zero entries skipped.
  std::vector<std::pair<isa::Op, OpCount>> ranked() const;
};

struct TraceEntry {
  uint64_t cycle;   // cycle at which the instruction started
  uint32_t pc;
  isa::Instr instr;
  uint32_t writeback;  // value written to rd (0 if none)
};

struct HwLoop {
  uint32_t start = 0;
  uint32_t end = 0;   // index of the last body instruction
  uint32_t count = 0;
};

class Core {
 public:
  Core(const isa::Program& prog, SimConfig cfg = {});

  // Executes one instruction; returns false once halted.
  bool step();
  // Runs to halt; throws SimTrap on faults or when max_cycles is exceeded.
  void run();

  bool halted() const { return halted_; }
  uint64_t cycles() const { return cycles_; }
  const CycleStats& stats() const { return stats_; }
  Memory& mem() { return mem_; }
  const Memory& mem() const { return mem_; }
  uint32_t gpr(int i) const { return x_[i]; }
  void set_gpr(int i, uint32_t v) { if (i != 0) x_[i] = v; }
  uint32_t pc() const { return pc_; }

  std::function<void(const TraceEntry&)> trace;

 private:
  void exec(const isa::Instr& ins, uint32_t* writeback);
  bool reads_reg(const isa::Instr& ins, uint8_t reg) const;
  void take_branch(int32_t byte_offset);

  const isa::Program& prog_;
  SimConfig cfg_;
  Memory mem_;
  std::array<uint32_t, 32> x_{};
  std::array<uint32_t, 2> spr_{};        // stream operand registers
  std::array<uint64_t, 2> spr_ready_{};  // cycle at which spr_[k] is usable
  std::array<HwLoop, 2> loop_{};
  uint32_t pc_ = 0;
  uint64_t cycles_ = 0;
  bool halted_ = false;
  int pending_load_reg_ = -1;  // rd of the load retired last cycle
  isa::Op pending_load_op_ = isa::Op::kHalt;
  bool branch_redirect_ = false;
  CycleStats stats_;
};

// Convenience: load data segments into memory and run to completion.
CycleStats run_program(const isa::Program& prog, SimConfig cfg = {});

void load_data(Memory& mem, const isa::Program& prog);

}  // namespace rvnn::sim
