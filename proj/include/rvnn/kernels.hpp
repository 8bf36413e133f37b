#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rvnn/isa.hpp"
#include "rvnn/sim.hpp"

// Golden layer models (float and bit-exact Q3.12) and kernel generators.
//
// The generators emit ready-to-run assembly programs for three layer types
// (fully-connected, LSTM cell step, 2-D convolution) at five optimization
// levels:
//
//   A  scalar baseline: lh operand loads, mac, conditional-branch loops,
//      accumulator kept in memory.
//   B  packed SIMD: lw! post-increment pair loads, pv.sdotsp.h, hardware
//      loops.
//   C  output tiling: tile_n accumulators live in registers and share each
//      loaded input word, cutting input loads by the tile factor.
//   D  merged load-and-compute: weights stream through the two special
//      registers of pl.sdotsp.h.0/.1, so the inner loop has one explicit
//      load per input word.
//   E  input tiling on top of D: ifm_tile input words per iteration remove
//      the remaining load-use bubble.
//
// Every level computes bit-identical outputs; the levels differ only in
// schedule. Programs read inputs from and write outputs to fixed memory
// regions described by the returned DataLayout, so a harness can run the
// same data through any level and diff the results.
//
// Data layout conventions (all regions 4-byte aligned, little-endian):
//  * vectors/matrices are 16-bit Q3.12, matrices row-major;
//  * weight pairs pack into 32-bit words low-half-first, so packed loads
//    are a pure reinterpretation of the scalar layout;
//  * biases are stored as 32-bit words pre-shifted left by 12 — ready-made
//    accumulator initial values;
//  * convolution inputs live in a zero-filled halo buffer of
//    (h_im+h_k-1) x (w_im+w_k-1) x n_in so the kernel never branches on
//    borders (use write_conv_input to fill it).

namespace rvnn::kernels {

// ---------------------------------------------------------------------------
// Layer descriptions
// ---------------------------------------------------------------------------

struct FcLayer {
  int c_in = 0;
  int c_out = 0;
  std::vector<int16_t> w;  // c_out x c_in, row-major
  std::vector<int16_t> b;  // c_out
};

// Gate order throughout: o (output), f (forget), i (input), c (candidate).
struct LstmLayer {
  int n_in = 0;
  int n_hidden = 0;
  std::vector<int16_t> w_o, w_f, w_i, w_c;  // n_hidden x n_in
  std::vector<int16_t> u_o, u_f, u_i, u_c;  // n_hidden x n_hidden
  std::vector<int16_t> b_o, b_f, b_i, b_c;  // n_hidden
};

// Stride-1 same-padded 2-D convolution in HWC layout; kernel dims odd.
struct ConvLayer {
  int n_in = 0;   // input channels
  int n_out = 0;  // output channels
  int h_k = 0, w_k = 0;    // kernel height/width (odd)
  int h_im = 0, w_im = 0;  // image height/width (output dims equal these)
  std::vector<int16_t> w;  // n_out x h_k x w_k x n_in
  std::vector<int16_t> b;  // n_out
};

enum class Level : int { kA = 0, kB = 1, kC = 2, kD = 3, kE = 4 };

inline constexpr int kLevelCount = 5;

char level_letter(Level level);                // 'A'..'E'
Level level_from_letter(char c);               // throws std::invalid_argument

struct OptLevel {
  Level level = Level::kA;
  int tile_n = 4;      // output rows computed per register tile (C-E)
  int ifm_tile = 2;    // input words consumed per inner iteration (E)
  bool hw_act = true;  // use pl.tanh/pl.sig at C-E; software PLA otherwise
};

// ---------------------------------------------------------------------------
// Golden models
// ---------------------------------------------------------------------------
// Float variants interpret the stored Q3.12 weights as reals (value / 4096)
// and compute in double precision. Q variants define the bit-exact semantics
// the generated kernels must reproduce: 32-bit wrap-around accumulation of
// 16-bit products, bias pre-loaded shifted left 12, requantize(acc, 12) per
// output. All throw std::invalid_argument on dimension mismatches.

std::vector<double> golden_fc_float(const FcLayer&, std::span<const double> x);
std::vector<int16_t> golden_fc_q(const FcLayer&, std::span<const int16_t> x);

struct LstmStateF {
  std::vector<double> h, c;
};
struct LstmStateQ {
  std::vector<int16_t> h, c;
};

LstmStateF golden_lstm_step_float(const LstmLayer&, std::span<const double> x,
                                  const LstmStateF& prev);
LstmStateQ golden_lstm_step_q(const LstmLayer&, std::span<const int16_t> x,
                              const LstmStateQ& prev);

// Input and output are h_im x w_im x channels, HWC.
std::vector<double> golden_conv_float(const ConvLayer&, std::span<const double> x);
std::vector<int16_t> golden_conv_q(const ConvLayer&, std::span<const int16_t> x);

uint64_t mac_count(const FcLayer&);   // c_in * c_out
uint64_t mac_count(const LstmLayer&); // 4 * n_hidden * (n_in + n_hidden)
uint64_t mac_count(const ConvLayer&); // n_in * n_out * h_im * w_im * h_k * w_k

// ---------------------------------------------------------------------------
// Kernel generation
// ---------------------------------------------------------------------------

struct Region {
  uint32_t base = 0;
  uint32_t bytes = 0;
};

// Named memory regions of a generated kernel. Common names:
//   fc:    x, w, b, y             (+ acc0 scratch word at level A)
//   lstm:  x, h_in, c_in, w_?, u_?, b_? (? in o/f/i/c), acc, g_?, tanh_c,
//          h_out, c_out           (+ acc0 at level A; + pla_{tanh,sig}_{m,q}
//          tables when the software PLA routine is linked in)
//   conv:  x_pad, w, b, y         (+ acc0 at level A)
struct DataLayout {
  std::map<std::string, Region> regions;
  uint32_t end = 0;  // first free address past all regions

  const Region& at(const std::string& name) const;  // throws std::out_of_range
  bool has(const std::string& name) const { return regions.count(name) != 0; }
};

struct KernelBuild {
  isa::Program prog;
  DataLayout layout;
  uint64_t macs = 0;
};

// All builders throw std::invalid_argument for inconsistent dimensions, odd
// input widths at levels B-E, or a tile too large for the register budget.
// Convolutions are scheduled at levels A-C; requests for D/E fall back to
// the level-C schedule (weight streams would have to restart every kernel
// row, which forfeits the merged-load benefit).
KernelBuild build_fc_kernel(const FcLayer&, const OptLevel&);
KernelBuild build_lstm_kernel(const LstmLayer&, const OptLevel&);
KernelBuild build_conv_kernel(const ConvLayer&, const OptLevel&);

// ---------------------------------------------------------------------------
// Harness helpers
// ---------------------------------------------------------------------------

void write_vec(sim::Memory&, uint32_t base, std::span<const int16_t> v);
std::vector<int16_t> read_vec(const sim::Memory&, uint32_t base, size_t n);

// Scatters an h_im x w_im x n_in HWC image into the kernel's zero-padded
// halo region ("x_pad").
void write_conv_input(sim::Memory&, const ConvLayer&, const DataLayout&,
                      std::span<const int16_t> x);

// Uniform Q3.12 values over [-1.0, 1.0) — raw [-4096, 4095].
std::vector<int16_t> random_q(size_t n, std::mt19937& rng);

FcLayer make_fc(int c_in, int c_out, std::mt19937& rng);
LstmLayer make_lstm(int n_in, int n_hidden, std::mt19937& rng);
ConvLayer make_conv(int n_in, int n_out, int h_k, int w_k, int h_im, int w_im,
                    std::mt19937& rng);

// Build + run + verify in one call: writes the inputs, runs the program to
// halt, and returns outputs plus cycle statistics.
struct FcRun {
  std::vector<int16_t> y;
  sim::CycleStats stats;
};
FcRun run_fc(const FcLayer&, const OptLevel&, std::span<const int16_t> x,
             sim::SimConfig cfg = {});

struct LstmRun {
  LstmStateQ state;
  sim::CycleStats stats;
};
LstmRun run_lstm(const LstmLayer&, const OptLevel&, std::span<const int16_t> x,
                 const LstmStateQ& prev, sim::SimConfig cfg = {});

struct ConvRun {
  std::vector<int16_t> y;
  sim::CycleStats stats;
};
ConvRun run_conv(const ConvLayer&, const OptLevel&, std::span<const int16_t> x,
                 sim::SimConfig cfg = {});

}  // namespace rvnn::kernels
