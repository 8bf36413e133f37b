#include "rvnn/kernels.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <functional>
#include <stdexcept>
#include <string>

#include "rvnn/activation.hpp"
#include "rvnn/fixp.hpp"

// Kernel generators. Programs are built directly as instruction vectors; the
// schedules are arranged so the steady-state inner loops run without
// load-use stalls wherever the level permits:
//
//   level A   9 cycles/MAC: lh,lh,lw,addi,mac,sw,addi,bltu(taken) with the
//             accumulator kept in memory
//   level B   4 cycles/2 MACs: lw!,lw!,pv.sdotsp.h + 1 load-use bubble
//   level C   2t+1 cycles/2t MACs: one input word shared by t accumulators
//   level D   t+2 cycles/2t MACs: weights stream through the two special
//             registers, one explicit load (+1 bubble) per input word
//   level E   m(1+t) cycles/2mt MACs: m input words per iteration, no bubble
//
// At D/E the special registers alternate by output-row parity; the pointer
// passed to the instruction computing row j belongs to row (j+2) mod t — the
// next consumer of the same special register — so every fetch lands exactly
// one use ahead of its consumer.

namespace rvnn::kernels {

namespace {

using isa::Instr;
using isa::Op;

constexpr int kRa = 1;    // link register for the software activation routine
constexpr int kArg = 10;  // its argument/result register (x10..x14 clobbered)

class RegPool {
 public:
  explicit RegPool(bool reserve_call_regs) {
    for (int r = 31; r >= 5; --r)
      if (!(reserve_call_regs && r >= kArg && r <= kArg + 4)) free_.push_back(r);
  }
  int alloc(const char* what) {
    if (free_.empty())
      throw std::invalid_argument(std::string("register budget exceeded while "
                                              "allocating ") +
                                  what + "; reduce tile_n or ifm_tile");
    int r = free_.back();
    free_.pop_back();
    return r;
  }
  void release(int r) { free_.push_back(r); }

 private:
  std::vector<int> free_;
};

// Incremental program builder: data-region allocator, label-free branch
// patching, hardware-loop bracketing, out-of-line saturation blocks and the
// shared software-PLA routines (both placed after halt).
class KB {
 public:
  isa::Program prog;
  DataLayout layout;
  RegPool pool;

  explicit KB(bool reserve_call_regs) : pool(reserve_call_regs) {}

  // ---- data regions -------------------------------------------------------
  Region scratch(const std::string& name, uint32_t bytes) {
    Region r{dcur_, bytes};
    layout.regions[name] = r;
    dcur_ += (bytes + 3u) & ~3u;
    layout.end = dcur_;
    return r;
  }
  Region data_halves(const std::string& name, std::span<const int16_t> v) {
    Region r = scratch(name, static_cast<uint32_t>(v.size()) * 2);
    isa::DataSegment seg{r.base, {}};
    seg.bytes.reserve(v.size() * 2);
    for (int16_t e : v) {
      seg.bytes.push_back(static_cast<uint8_t>(e & 0xFF));
      seg.bytes.push_back(static_cast<uint8_t>((e >> 8) & 0xFF));
    }
    prog.data.push_back(std::move(seg));
    return r;
  }
  Region data_words(const std::string& name, const std::vector<int32_t>& v) {
    Region r = scratch(name, static_cast<uint32_t>(v.size()) * 4);
    isa::DataSegment seg{r.base, {}};
    seg.bytes.reserve(v.size() * 4);
    for (int32_t e : v)
      for (int s = 0; s < 32; s += 8)
        seg.bytes.push_back(static_cast<uint8_t>((e >> s) & 0xFF));
    prog.data.push_back(std::move(seg));
    return r;
  }

  // ---- text ---------------------------------------------------------------
  int here() const { return static_cast<int>(prog.text.size()); }
  int emit(Op op, int rd = 0, int rs1 = 0, int rs2 = 0, int32_t imm = 0,
           int32_t imm2 = 0) {
    prog.text.push_back(Instr{op, static_cast<uint8_t>(rd),
                              static_cast<uint8_t>(rs1),
                              static_cast<uint8_t>(rs2), imm, imm2});
    return here() - 1;
  }
  // The simulator accepts full 32-bit immediates, so a constant load is a
  // single addi.
  void li(int rd, int32_t v) { emit(Op::kAddi, rd, 0, 0, v); }
  void mv(int rd, int rs) { emit(Op::kAdd, rd, rs, 0); }

  int emit_br(Op op, int rs1, int rs2) { return emit(op, 0, rs1, rs2, 0); }
  void patch_br(int at, int target) {
    prog.text[static_cast<size_t>(at)].imm = (target - at) * 4;
  }
  void br_back(Op op, int rs1, int rs2, int target) {
    emit(op, 0, rs1, rs2, (target - here()) * 4);
  }

  void hw_loop(int id, int32_t count, const std::function<void()>& body) {
    assert(count >= 1);
    int setup = emit(Op::kLpSetupi, id, 0, 0, count, 0);
    body();
    assert(here() > setup + 1);
    prog.text[static_cast<size_t>(setup)].imm2 = (here() - 1 - setup) * 4;
  }

  // Count-down loop over a plain conditional branch.
  void counted_loop(int rCnt, int32_t count, const std::function<void()>& body) {
    li(rCnt, count);
    int top = here();
    body();
    emit(Op::kAddi, rCnt, rCnt, 0, -1);
    br_back(Op::kBne, rCnt, 0, top);
  }

  // ---- requantize + saturate + store -------------------------------------
  // Fast path: srai, two untaken branches, sh!. Overflows branch to an
  // out-of-line block after halt that replaces the value and jumps back.
  void set_sat_regs(int rHi, int rLo, int rT) {
    rhi_ = rHi;
    rlo_ = rLo;
    rt_ = rT;
    li(rHi, fixp::kMaxRaw);
    li(rLo, fixp::kMinRaw);
  }
  void requantize_store(int rAcc, int pY) {
    emit(Op::kSrai, rt_, rAcc, 0, fixp::kFracBits);
    int bhi = emit_br(Op::kBlt, rhi_, rt_);
    int blo = emit_br(Op::kBlt, rt_, rlo_);
    int st = emit(Op::kShPi, 0, pY, rt_, 0);
    sat_sites_.push_back({bhi, blo, st});
  }

  // ---- software PLA activation ------------------------------------------
  void set_act_tables(uint32_t tanh_m, uint32_t sig_m, int q_off, int n_log2,
                      int m_count) {
    tanh_m_ = tanh_m;
    sig_m_ = sig_m;
    q_off_ = q_off;
    n_log2_ = n_log2;
    m_count_ = m_count;
  }
  void call_sw_act(activation::PlaFunc f) {
    int site = emit(Op::kJal, kRa, 0, 0, 0);
    (f == activation::PlaFunc::kTanh ? tanh_sites_ : sig_sites_).push_back(site);
  }

  void finalize() {
    emit(Op::kHalt);
    for (const auto& s : sat_sites_) {
      patch_br(s.bhi, here());
      mv(rt_, rhi_);
      br_back(Op::kBeq, 0, 0, s.resume);
      patch_br(s.blo, here());
      mv(rt_, rlo_);
      br_back(Op::kBeq, 0, 0, s.resume);
    }
    if (!tanh_sites_.empty()) link_routine(emit_pla_routine(true), tanh_sites_);
    if (!sig_sites_.empty()) link_routine(emit_pla_routine(false), sig_sites_);
  }

 private:
  struct SatSite {
    int bhi, blo, resume;
  };

  void link_routine(int entry, const std::vector<int>& sites) {
    for (int s : sites) patch_br(s, entry);
  }

  // In: x10 = Q3.12 argument (sign-extended). Out: x10. Clobbers x11..x14.
  // Mirrors activation::pla_eval exactly: the 32-bit absolute value of
  // -32768 indexes past the table and saturates just like the host clamp.
  int emit_pla_routine(bool tanh) {
    int entry = here();
    emit(Op::kSrai, 12, 10, 0, 31);               // x12 = sign mask
    emit(Op::kXor, 13, 10, 12);
    emit(Op::kSub, 13, 13, 12);                   // x13 = |x|
    emit(Op::kSrli, 14, 13, 0, n_log2_);          // x14 = interval id
    li(11, m_count_);
    int b_interp = emit_br(Op::kBltu, 14, 11);
    li(10, fixp::kOne);                           // saturated magnitude
    int b_fix = emit_br(Op::kBeq, 0, 0);
    patch_br(b_interp, here());
    emit(Op::kSlli, 14, 14, 0, 1);
    li(11, static_cast<int32_t>(tanh ? tanh_m_ : sig_m_));
    emit(Op::kAdd, 11, 11, 14);
    emit(Op::kLh, 14, 11, 0, 0);                  // slope
    emit(Op::kLh, 11, 11, 0, q_off_);             // offset table sits q_off past
    emit(Op::kMul, 10, 14, 13);
    emit(Op::kSrai, 10, 10, 0, fixp::kFracBits);
    emit(Op::kAdd, 10, 10, 11);
    patch_br(b_fix, here());
    if (tanh) {                                   // odd symmetry
      emit(Op::kXor, 10, 10, 12);
      emit(Op::kSub, 10, 10, 12);
    } else {                                      // sig(-x) = 1 - sig(x)
      int b_pos = emit_br(Op::kBeq, 12, 0);
      li(11, fixp::kOne);
      emit(Op::kSub, 10, 11, 10);
      patch_br(b_pos, here());
    }
    emit(Op::kJalr, 0, kRa, 0, 0);
    return entry;
  }

  uint32_t dcur_ = 0x100;
  std::vector<SatSite> sat_sites_;
  std::vector<int> tanh_sites_, sig_sites_;
  int rhi_ = 0, rlo_ = 0, rt_ = 0;
  uint32_t tanh_m_ = 0, sig_m_ = 0;
  int q_off_ = 0, n_log2_ = 0, m_count_ = 0;
};

// ---------------------------------------------------------------------------
// Matrix-vector template shared by FC rows, LSTM gate passes, and the
// per-pixel body of the convolution.
// ---------------------------------------------------------------------------

struct Matvec {
  int rows = 0;
  int width = 0;     // halves per segment
  int segments = 1;  // dot product runs over `segments` strips of `width`
  uint32_t w_base = 0;
  uint32_t row_stride = 0;  // bytes between consecutive weight rows
  uint32_t x_base = 0;
  int x_base_reg = -1;      // if >= 0, the x stream restarts at this register
  uint32_t x_seg_skip = 0;  // bytes added to the x pointer between segments
  uint32_t init_base = 0;   // 32-bit accumulator initials, one word per row
  bool sink_raw32 = false;  // store raw 32-bit accumulators instead of Q3.12
  uint32_t sink_base = 0;
  int sink_ptr_reg = -1;    // if >= 0, use (and advance) this pointer register
};

void reset_x(KB& b, int pX, const Matvec& mv) {
  if (mv.x_base_reg >= 0)
    b.mv(pX, mv.x_base_reg);
  else
    b.li(pX, static_cast<int32_t>(mv.x_base));
}

// Rows processed one at a time with a register accumulator; used for level-A
// remainders at B-E (the spec'd scalar epilogue when tile_n does not divide
// the row count). pInit/rWrow/pSink continue from where the tiled part left
// off.
void emit_scalar_rows(KB& b, const Matvec& mv, int rows, int pInit, int rWrow,
                      int pSink) {
  if (rows <= 0) return;
  int pX = b.pool.alloc("x pointer");
  int pW = b.pool.alloc("weight pointer");
  int pXend = b.pool.alloc("loop bound");
  int rA = b.pool.alloc("accumulator");
  int rW = b.pool.alloc("weight temp");
  int rX = b.pool.alloc("input temp");
  int rRows = b.pool.alloc("row counter");
  int rSeg = mv.segments > 1 ? b.pool.alloc("segment counter") : -1;

  b.counted_loop(rRows, rows, [&] {
    b.emit(Op::kLw, rA, pInit, 0, 0);
    b.emit(Op::kAddi, pInit, pInit, 0, 4);
    b.mv(pW, rWrow);
    b.emit(Op::kAddi, rWrow, rWrow, 0, static_cast<int32_t>(mv.row_stride));
    reset_x(b, pX, mv);
    auto segment = [&] {
      b.emit(Op::kAddi, pXend, pX, 0, mv.width * 2);
      int top = b.here();
      b.emit(Op::kLh, rW, pW, 0, 0);
      b.emit(Op::kLh, rX, pX, 0, 0);
      b.emit(Op::kAddi, pW, pW, 0, 2);
      b.emit(Op::kMac, rA, rW, rX);
      b.emit(Op::kAddi, pX, pX, 0, 2);
      b.br_back(Op::kBltu, pX, pXend, top);
    };
    if (mv.segments > 1) {
      b.counted_loop(rSeg, mv.segments, [&] {
        segment();
        b.emit(Op::kAddi, pX, pX, 0, static_cast<int32_t>(mv.x_seg_skip));
      });
    } else {
      segment();
    }
    if (mv.sink_raw32) {
      b.emit(Op::kSwPi, 0, pSink, rA, 0);
    } else {
      b.requantize_store(rA, pSink);
    }
  });

  for (int r : {pX, pW, pXend, rA, rW, rX, rRows})
    b.pool.release(r);
  if (rSeg >= 0) b.pool.release(rSeg);
}

// Level A: everything scalar and the accumulator lives in memory, so every
// MAC costs a lw + mac + sw round trip (the baseline's defining trait).
void emit_matvec_scalar(KB& b, const Matvec& mv, uint32_t acc_base) {
  int pX = b.pool.alloc("x pointer");
  int pW = b.pool.alloc("weight pointer");
  int pXend = b.pool.alloc("loop bound");
  int pAcc = b.pool.alloc("accumulator pointer");
  int pInit = b.pool.alloc("initials pointer");
  int pSink = mv.sink_ptr_reg >= 0 ? mv.sink_ptr_reg : b.pool.alloc("output pointer");
  int rW = b.pool.alloc("weight temp");
  int rX = b.pool.alloc("input temp");
  int rAcc = b.pool.alloc("accumulator temp");
  int rRows = b.pool.alloc("row counter");
  int rSeg = mv.segments > 1 ? b.pool.alloc("segment counter") : -1;

  b.li(pAcc, static_cast<int32_t>(acc_base));
  b.li(pInit, static_cast<int32_t>(mv.init_base));
  b.li(pW, static_cast<int32_t>(mv.w_base));
  if (mv.sink_ptr_reg < 0) b.li(pSink, static_cast<int32_t>(mv.sink_base));

  b.counted_loop(rRows, mv.rows, [&] {
    b.emit(Op::kLw, rAcc, pInit, 0, 0);
    b.emit(Op::kAddi, pInit, pInit, 0, 4);
    b.emit(Op::kSw, 0, pAcc, rAcc, 0);
    reset_x(b, pX, mv);
    auto segment = [&] {
      b.emit(Op::kAddi, pXend, pX, 0, mv.width * 2);
      int top = b.here();
      b.emit(Op::kLh, rW, pW, 0, 0);
      b.emit(Op::kLh, rX, pX, 0, 0);
      b.emit(Op::kLw, rAcc, pAcc, 0, 0);
      b.emit(Op::kAddi, pW, pW, 0, 2);
      b.emit(Op::kMac, rAcc, rW, rX);
      b.emit(Op::kSw, 0, pAcc, rAcc, 0);
      b.emit(Op::kAddi, pX, pX, 0, 2);
      b.br_back(Op::kBltu, pX, pXend, top);
    };
    if (mv.segments > 1) {
      b.counted_loop(rSeg, mv.segments, [&] {
        segment();
        b.emit(Op::kAddi, pX, pX, 0, static_cast<int32_t>(mv.x_seg_skip));
      });
    } else {
      segment();
    }
    b.emit(Op::kLw, rAcc, pAcc, 0, 0);
    if (mv.sink_raw32) {
      b.emit(Op::kSwPi, 0, pSink, rAcc, 0);
    } else {
      b.requantize_store(rAcc, pSink);
    }
  });

  for (int r : {pX, pW, pXend, pAcc, pInit, rW, rX, rAcc, rRows})
    b.pool.release(r);
  if (mv.sink_ptr_reg < 0) b.pool.release(pSink);
  if (rSeg >= 0) b.pool.release(rSeg);
}

// Levels B-E. B runs untiled (one accumulator); C shares each loaded input
// word across tile_n accumulators; D/E stream weights through the special
// registers.
void emit_matvec_packed(KB& b, const Matvec& mv, const OptLevel& opt) {
  if (mv.width % 2 != 0)
    throw std::invalid_argument(
        "input width must be even at levels B-E (packed pairs)");
  const Level lv = opt.level;
  const bool streaming = lv == Level::kD || lv == Level::kE;
  const int ifm = lv == Level::kE ? opt.ifm_tile : 1;

  int t = lv == Level::kB ? 1 : std::min(opt.tile_n, mv.rows);
  if (streaming && t % 2 != 0) --t;  // the two SPR slots alternate by row parity
  const int groups = t > 0 ? mv.rows / t : 0;
  const int rem = mv.rows - groups * t;
  const int width2 = mv.width / 2;  // words per segment

  int pInit = b.pool.alloc("initials pointer");
  int rWrow = b.pool.alloc("weight row base");
  int pSink = mv.sink_ptr_reg >= 0 ? mv.sink_ptr_reg : b.pool.alloc("output pointer");
  b.li(pInit, static_cast<int32_t>(mv.init_base));
  // The streaming levels rebuild their row pointers from rWrow each group;
  // B/C walk a single pointer instead and only hand rWrow to the scalar
  // remainder once the tiled groups are done.
  if (streaming || groups == 0) b.li(rWrow, static_cast<int32_t>(mv.w_base));
  if (mv.sink_ptr_reg < 0) b.li(pSink, static_cast<int32_t>(mv.sink_base));

  if (groups > 0) {
    assert(!streaming || mv.segments == 1);
    const int32_t stride = static_cast<int32_t>(mv.row_stride);
    int pX = b.pool.alloc("x pointer");
    std::vector<int> rA(t);
    for (int k = 0; k < t; ++k) rA[k] = b.pool.alloc("tile accumulator");
    std::vector<int> scratch;

    auto group_prologue = [&] {
      for (int k = 0; k < t; ++k) b.emit(Op::kLwPi, rA[k], pInit, 0, 0);
    };
    auto group_epilogue = [&] {
      for (int k = 0; k < t; ++k) {
        if (mv.sink_raw32)
          b.emit(Op::kSwPi, 0, pSink, rA[k], 0);
        else
          b.requantize_store(rA[k], pSink);
      }
    };
    // A single group runs inline; several become the second hardware loop
    // when the segment walk is not already holding it.
    auto over_groups = [&](const std::function<void()>& body) {
      if (groups == 1) {
        body();
      } else if (mv.segments == 1) {
        b.hw_loop(1, groups, body);
      } else {
        int rGrp = b.pool.alloc("group counter");
        b.counted_loop(rGrp, groups, body);
        b.pool.release(rGrp);
      }
    };

    if (streaming) {
      std::vector<int> pP(t);
      for (int k = 0; k < t; ++k) pP[k] = b.pool.alloc("weight pointer");
      std::vector<int> rX(static_cast<size_t>(ifm));
      for (int w = 0; w < ifm; ++w) rX[w] = b.pool.alloc("input word");
      scratch.insert(scratch.end(), pP.begin(), pP.end());
      scratch.insert(scratch.end(), rX.begin(), rX.end());

      auto stream_word = [&](int xr) {
        // The pointer handed to row j's instruction belongs to row
        // (j+2) mod t: the next consumer of the same special register.
        for (int j = 0; j < t; ++j)
          b.emit(j % 2 == 0 ? Op::kPlSdotspH0 : Op::kPlSdotspH1, rA[j],
                 pP[(j + 2) % t], xr);
      };

      over_groups([&] {
        group_prologue();
        for (int k = 0; k < t; ++k)
          b.emit(Op::kAddi, pP[k], rWrow, 0, stride * k);
        b.emit(Op::kAddi, rWrow, rWrow, 0, stride * t);
        reset_x(b, pX, mv);
        // Pre-load the two special registers with the first word of rows 0/1.
        b.emit(Op::kPlSdotspH0, 0, pP[0], 0);
        b.emit(Op::kPlSdotspH1, 0, pP[1], 0);
        const int iters = width2 / ifm;
        const int leftover = width2 % ifm;
        if (iters > 0) {
          b.hw_loop(0, iters, [&] {
            for (int w = 0; w < ifm; ++w) b.emit(Op::kLwPi, rX[w], pX, 0, 0);
            for (int w = 0; w < ifm; ++w) stream_word(rX[w]);
          });
        }
        for (int r = 0; r < leftover; ++r) {
          b.emit(Op::kLwPi, rX[0], pX, 0, 0);
          stream_word(rX[0]);
        }
        group_epilogue();
      });
    } else {
      // B/C walk the group's weight rows off a single pointer: rows are
      // contiguous (row_stride bytes apart), so row k of the current word
      // sits at a static offset. The first load post-increments, later rows
      // compensate with -4. Loads run two slots ahead of their pv.sdotsp,
      // so two alternating weight registers cover any tile size; B is the
      // t == 1 case (weight first, input second, one bubble per word).
      int pW = b.pool.alloc("weight pointer");
      int rXw = b.pool.alloc("input word");
      int rWa = b.pool.alloc("weight word");
      int rWb = t >= 2 ? b.pool.alloc("weight word") : rWa;
      scratch = {pW, rXw, rWa};
      if (t >= 2) scratch.push_back(rWb);
      auto wreg = [&](int k) { return k % 2 == 0 ? rWa : rWb; };
      b.li(pW, static_cast<int32_t>(mv.w_base));

      auto inner = [&] {
        if (t == 1) {
          b.emit(Op::kLwPi, rWa, pW, 0, 0);
          b.emit(Op::kLwPi, rXw, pX, 0, 0);
          b.emit(Op::kPvSdotspH, rA[0], rWa, rXw);
        } else {
          b.emit(Op::kLwPi, rXw, pX, 0, 0);
          b.emit(Op::kLwPi, rWa, pW, 0, 0);
          b.emit(Op::kLw, rWb, pW, 0, stride - 4);
          for (int k = 0; k + 2 < t; ++k) {
            b.emit(Op::kPvSdotspH, rA[k], wreg(k), rXw);
            b.emit(Op::kLw, wreg(k + 2), pW, 0, (k + 2) * stride - 4);
          }
          b.emit(Op::kPvSdotspH, rA[t - 2], wreg(t - 2), rXw);
          b.emit(Op::kPvSdotspH, rA[t - 1], wreg(t - 1), rXw);
        }
      };

      over_groups([&] {
        group_prologue();
        reset_x(b, pX, mv);
        if (mv.segments > 1) {
          b.hw_loop(1, mv.segments, [&] {
            b.hw_loop(0, width2, inner);
            b.emit(Op::kAddi, pX, pX, 0, static_cast<int32_t>(mv.x_seg_skip));
          });
        } else {
          b.hw_loop(0, width2, inner);
        }
        // pW has walked exactly one row (the other t-1 were read at static
        // offsets), so hop over them when more rows follow.
        if (t > 1 && (groups > 1 || rem > 0))
          b.emit(Op::kAddi, pW, pW, 0, stride * (t - 1));
        group_epilogue();
      });
      if (rem > 0) b.mv(rWrow, pW);
    }

    for (int r : scratch) b.pool.release(r);
    for (int k = 0; k < t; ++k) b.pool.release(rA[k]);
    b.pool.release(pX);
  }

  emit_scalar_rows(b, mv, rem, pInit, rWrow, pSink);

  b.pool.release(pInit);
  b.pool.release(rWrow);
  if (mv.sink_ptr_reg < 0) b.pool.release(pSink);
}

void emit_matvec(KB& b, const Matvec& mv, const OptLevel& opt,
                 uint32_t scalar_acc_base) {
  if (opt.level == Level::kA)
    emit_matvec_scalar(b, mv, scalar_acc_base);
  else
    emit_matvec_packed(b, mv, opt);
}

// ---------------------------------------------------------------------------
// Element-wise stages (LSTM)
// ---------------------------------------------------------------------------

// dst[i] = act(src[i]) for n elements; hw == true uses pl.tanh/pl.sig
// (two elements per trip, stall-free), otherwise each element calls the
// software PLA routine.
void emit_act_pass(KB& b, uint32_t src, uint32_t dst, int n,
                   activation::PlaFunc f, bool hw) {
  int pR = b.pool.alloc("activation src");
  int pW = b.pool.alloc("activation dst");
  b.li(pR, static_cast<int32_t>(src));
  b.li(pW, static_cast<int32_t>(dst));
  if (hw) {
    assert(n % 2 == 0);
    Op op = f == activation::PlaFunc::kTanh ? Op::kPlTanh : Op::kPlSig;
    int rA = b.pool.alloc("activation temp");
    int rB = b.pool.alloc("activation temp");
    b.hw_loop(0, n / 2, [&] {
      b.emit(Op::kLhPi, rA, pR, 0, 0);
      b.emit(Op::kLhPi, rB, pR, 0, 0);
      b.emit(op, rA, rA);
      b.emit(op, rB, rB);
      b.emit(Op::kShPi, 0, pW, rA, 0);
      b.emit(Op::kShPi, 0, pW, rB, 0);
    });
    b.pool.release(rA);
    b.pool.release(rB);
  } else {
    int pEnd = b.pool.alloc("activation bound");
    b.emit(Op::kAddi, pEnd, pR, 0, 2 * n);
    int top = b.here();
    b.emit(Op::kLh, kArg, pR, 0, 0);
    b.call_sw_act(f);
    b.emit(Op::kSh, 0, pW, kArg, 0);
    b.emit(Op::kAddi, pR, pR, 0, 2);
    b.emit(Op::kAddi, pW, pW, 0, 2);
    b.br_back(Op::kBltu, pR, pEnd, top);
    b.pool.release(pEnd);
  }
  b.pool.release(pR);
  b.pool.release(pW);
}

// c_out[i] = wrap16((f[i]*c_in[i]) >> 12) + ((i[i]*g[i]) >> 12)); both
// products have a gate factor in [0,1], so the shifted values fit 16 bits
// exactly and no saturation check is needed.
void emit_cell_update(KB& b, uint32_t g_f, uint32_t c_in, uint32_t g_i,
                      uint32_t g_c, uint32_t c_out, int n, Level level) {
  int pF = b.pool.alloc("f ptr"), pC = b.pool.alloc("c ptr");
  int pI = b.pool.alloc("i ptr"), pG = b.pool.alloc("g ptr");
  int pO = b.pool.alloc("out ptr");
  int rF = b.pool.alloc("f val"), rC = b.pool.alloc("c val");
  int rI = b.pool.alloc("i val"), rG = b.pool.alloc("g val");
  b.li(pF, static_cast<int32_t>(g_f));
  b.li(pC, static_cast<int32_t>(c_in));
  b.li(pI, static_cast<int32_t>(g_i));
  b.li(pG, static_cast<int32_t>(g_c));
  b.li(pO, static_cast<int32_t>(c_out));
  if (level == Level::kA) {
    int pEnd = b.pool.alloc("bound");
    b.emit(Op::kAddi, pEnd, pF, 0, 2 * n);
    int top = b.here();
    b.emit(Op::kLh, rF, pF, 0, 0);
    b.emit(Op::kLh, rC, pC, 0, 0);
    b.emit(Op::kLh, rI, pI, 0, 0);
    b.emit(Op::kLh, rG, pG, 0, 0);
    b.emit(Op::kMul, rF, rF, rC);
    b.emit(Op::kSrai, rF, rF, 0, fixp::kFracBits);
    b.emit(Op::kMul, rI, rI, rG);
    b.emit(Op::kSrai, rI, rI, 0, fixp::kFracBits);
    b.emit(Op::kAdd, rF, rF, rI);
    b.emit(Op::kSh, 0, pO, rF, 0);
    for (int p : {pF, pC, pI, pG, pO}) b.emit(Op::kAddi, p, p, 0, 2);
    b.br_back(Op::kBltu, pF, pEnd, top);
    b.pool.release(pEnd);
  } else {
    assert(n % 2 == 0);
    b.hw_loop(0, n / 2, [&] {
      b.emit(Op::kLwPi, rF, pF, 0, 0);
      b.emit(Op::kLwPi, rC, pC, 0, 0);
      b.emit(Op::kLwPi, rI, pI, 0, 0);
      b.emit(Op::kLwPi, rG, pG, 0, 0);
      b.emit(Op::kPvMulH, rF, rF, rC);
      b.emit(Op::kPvMulH, rI, rI, rG);
      b.emit(Op::kPvAddH, rF, rF, rI);
      b.emit(Op::kSwPi, 0, pO, rF, 0);
    });
  }
  for (int r : {pF, pC, pI, pG, pO, rF, rC, rI, rG}) b.pool.release(r);
}

// out[i] = (a[i]*b[i]) >> 12 — Hadamard with a gate factor, exact in 16 bits.
void emit_hadamard(KB& b, uint32_t a, uint32_t bb, uint32_t out, int n,
                   Level level) {
  int pA = b.pool.alloc("lhs ptr"), pB = b.pool.alloc("rhs ptr");
  int pO = b.pool.alloc("out ptr");
  int rA = b.pool.alloc("lhs val"), rB = b.pool.alloc("rhs val");
  b.li(pA, static_cast<int32_t>(a));
  b.li(pB, static_cast<int32_t>(bb));
  b.li(pO, static_cast<int32_t>(out));
  if (level == Level::kA) {
    int pEnd = b.pool.alloc("bound");
    b.emit(Op::kAddi, pEnd, pA, 0, 2 * n);
    int top = b.here();
    b.emit(Op::kLh, rA, pA, 0, 0);
    b.emit(Op::kLh, rB, pB, 0, 0);
    b.emit(Op::kMul, rA, rA, rB);
    b.emit(Op::kSrai, rA, rA, 0, fixp::kFracBits);
    b.emit(Op::kSh, 0, pO, rA, 0);
    for (int p : {pA, pB, pO}) b.emit(Op::kAddi, p, p, 0, 2);
    b.br_back(Op::kBltu, pA, pEnd, top);
    b.pool.release(pEnd);
  } else {
    assert(n % 2 == 0);
    b.hw_loop(0, n / 2, [&] {
      b.emit(Op::kLwPi, rA, pA, 0, 0);
      b.emit(Op::kLwPi, rB, pB, 0, 0);
      b.emit(Op::kPvMulH, rA, rA, rB);
      b.emit(Op::kSwPi, 0, pO, rA, 0);
    });
  }
  for (int r : {pA, pB, pO, rA, rB}) b.pool.release(r);
}

// ---------------------------------------------------------------------------

std::vector<int32_t> shifted_bias(std::span<const int16_t> b) {
  std::vector<int32_t> v(b.size());
  for (size_t i = 0; i < b.size(); ++i)
    v[i] = static_cast<int32_t>(b[i]) << fixp::kFracBits;
  return v;
}

void validate_opts(const OptLevel& opt) {
  if (opt.tile_n < 1) throw std::invalid_argument("tile_n must be >= 1");
  if (opt.ifm_tile < 1) throw std::invalid_argument("ifm_tile must be >= 1");
}

void add_sw_act_tables(KB& b) {
  const auto& th = activation::default_tanh_table();
  const auto& sg = activation::default_sig_table();
  Region tm = b.data_halves("pla_tanh_m", th.slopes);
  Region tq = b.data_halves("pla_tanh_q", th.offsets);
  Region sm = b.data_halves("pla_sig_m", sg.slopes);
  b.data_halves("pla_sig_q", sg.offsets);
  b.set_act_tables(tm.base, sm.base, static_cast<int>(tq.base - tm.base),
                   th.n_log2, th.m_count);
}

}  // namespace

char level_letter(Level level) {
  return "ABCDE"[static_cast<int>(level)];
}

Level level_from_letter(char c) {
  switch (std::toupper(static_cast<unsigned char>(c))) {
    case 'A': return Level::kA;
    case 'B': return Level::kB;
    case 'C': return Level::kC;
    case 'D': return Level::kD;
    case 'E': return Level::kE;
    default:
      throw std::invalid_argument(std::string("unknown optimization level '") +
                                  c + "' (expected A..E)");
  }
}

KernelBuild build_fc_kernel(const FcLayer& l, const OptLevel& opt) {
  // Reuse the golden model's validation.
  (void)golden_fc_q(l, std::vector<int16_t>(static_cast<size_t>(l.c_in)));
  validate_opts(opt);
  if (opt.level != Level::kA && l.c_in % 2 != 0)
    throw std::invalid_argument("fc: c_in must be even at levels B-E");

  KB b(false);
  Region x = b.scratch("x", static_cast<uint32_t>(l.c_in) * 2);
  Region w = b.data_halves("w", l.w);
  Region bias = b.data_words("b", shifted_bias(l.b));
  Region y = b.scratch("y", static_cast<uint32_t>(l.c_out) * 2);
  Region acc0{0, 0};
  if (opt.level == Level::kA) acc0 = b.scratch("acc0", 4);

  int rHi = b.pool.alloc("saturation high");
  int rLo = b.pool.alloc("saturation low");
  int rT = b.pool.alloc("requantize temp");
  b.set_sat_regs(rHi, rLo, rT);

  Matvec mv;
  mv.rows = l.c_out;
  mv.width = l.c_in;
  mv.w_base = w.base;
  mv.row_stride = static_cast<uint32_t>(l.c_in) * 2;
  mv.x_base = x.base;
  mv.init_base = bias.base;
  mv.sink_base = y.base;
  emit_matvec(b, mv, opt, acc0.base);

  b.finalize();
  return {std::move(b.prog), std::move(b.layout), mac_count(l)};
}

KernelBuild build_lstm_kernel(const LstmLayer& l, const OptLevel& opt) {
  (void)golden_lstm_step_q(
      l, std::vector<int16_t>(static_cast<size_t>(l.n_in)),
      LstmStateQ{std::vector<int16_t>(static_cast<size_t>(l.n_hidden)),
                 std::vector<int16_t>(static_cast<size_t>(l.n_hidden))});
  validate_opts(opt);
  const int n = l.n_hidden;
  const bool packed = opt.level != Level::kA;
  if (packed && (l.n_in % 2 != 0 || n % 2 != 0))
    throw std::invalid_argument("lstm: n_in and n_hidden must be even at levels B-E");
  const bool hw_act =
      opt.hw_act && opt.level != Level::kA && opt.level != Level::kB;

  KB b(!hw_act);  // software PLA clobbers the call registers
  Region x = b.scratch("x", static_cast<uint32_t>(l.n_in) * 2);
  Region h_in = b.scratch("h_in", static_cast<uint32_t>(n) * 2);
  Region c_in = b.scratch("c_in", static_cast<uint32_t>(n) * 2);
  struct Gate {
    const char* tag;
    const std::vector<int16_t>*w, *u, *bias;
    activation::PlaFunc act;
  };
  const Gate gates[4] = {
      {"o", &l.w_o, &l.u_o, &l.b_o, activation::PlaFunc::kSig},
      {"f", &l.w_f, &l.u_f, &l.b_f, activation::PlaFunc::kSig},
      {"i", &l.w_i, &l.u_i, &l.b_i, activation::PlaFunc::kSig},
      {"c", &l.w_c, &l.u_c, &l.b_c, activation::PlaFunc::kTanh},
  };
  Region wreg[4], ureg[4], breg[4], greg[4];
  for (int g = 0; g < 4; ++g) {
    std::string tag = gates[g].tag;
    wreg[g] = b.data_halves("w_" + tag, *gates[g].w);
    ureg[g] = b.data_halves("u_" + tag, *gates[g].u);
    breg[g] = b.data_words("b_" + tag, shifted_bias(*gates[g].bias));
    greg[g] = b.scratch("g_" + tag, static_cast<uint32_t>(n) * 2);
  }
  Region acc = b.scratch("acc", static_cast<uint32_t>(n) * 4);
  Region tanh_c = b.scratch("tanh_c", static_cast<uint32_t>(n) * 2);
  Region h_out = b.scratch("h_out", static_cast<uint32_t>(n) * 2);
  Region c_out = b.scratch("c_out", static_cast<uint32_t>(n) * 2);
  Region acc0{0, 0};
  if (opt.level == Level::kA) acc0 = b.scratch("acc0", 4);
  if (!hw_act) add_sw_act_tables(b);

  int rHi = b.pool.alloc("saturation high");
  int rLo = b.pool.alloc("saturation low");
  int rT = b.pool.alloc("requantize temp");
  b.set_sat_regs(rHi, rLo, rT);

  // Eight matrix-vector passes over one template: per gate, W x seeds the
  // 32-bit accumulators from the bias and parks them raw; U h reloads them
  // and requantizes into the gate pre-activation vector.
  for (int g = 0; g < 4; ++g) {
    Matvec wpass;
    wpass.rows = n;
    wpass.width = l.n_in;
    wpass.w_base = wreg[g].base;
    wpass.row_stride = static_cast<uint32_t>(l.n_in) * 2;
    wpass.x_base = x.base;
    wpass.init_base = breg[g].base;
    wpass.sink_raw32 = true;
    wpass.sink_base = acc.base;
    emit_matvec(b, wpass, opt, acc0.base);

    Matvec upass;
    upass.rows = n;
    upass.width = n;
    upass.w_base = ureg[g].base;
    upass.row_stride = static_cast<uint32_t>(n) * 2;
    upass.x_base = h_in.base;
    upass.init_base = acc.base;
    upass.sink_base = greg[g].base;
    emit_matvec(b, upass, opt, acc0.base);
  }

  for (int g = 0; g < 4; ++g)
    emit_act_pass(b, greg[g].base, greg[g].base, n, gates[g].act, hw_act);

  // c_t = f o c_prev + i o g   (gate order in greg: o, f, i, c)
  emit_cell_update(b, greg[1].base, c_in.base, greg[2].base, greg[3].base,
                   c_out.base, n, opt.level);
  emit_act_pass(b, c_out.base, tanh_c.base, n, activation::PlaFunc::kTanh,
                hw_act);
  // h_t = o o tanh(c_t)
  emit_hadamard(b, greg[0].base, tanh_c.base, h_out.base, n, opt.level);

  b.finalize();
  return {std::move(b.prog), std::move(b.layout), mac_count(l)};
}

KernelBuild build_conv_kernel(const ConvLayer& l, const OptLevel& opt) {
  (void)golden_conv_q(
      l, std::vector<int16_t>(static_cast<size_t>(l.h_im) * l.w_im * l.n_in));
  validate_opts(opt);
  OptLevel eff = opt;
  if (eff.level == Level::kD || eff.level == Level::kE)
    eff.level = Level::kC;  // weight streams restart every kernel row
  if (eff.level != Level::kA && l.n_in % 2 != 0)
    throw std::invalid_argument("conv: n_in must be even at levels B-E");

  const uint32_t w_pad = static_cast<uint32_t>(l.w_im + l.w_k - 1);
  const uint32_t h_pad = static_cast<uint32_t>(l.h_im + l.h_k - 1);

  KB b(false);
  Region x_pad =
      b.scratch("x_pad", h_pad * w_pad * static_cast<uint32_t>(l.n_in) * 2);
  Region w = b.data_halves("w", l.w);
  Region bias = b.data_words("b", shifted_bias(l.b));
  Region y = b.scratch(
      "y", static_cast<uint32_t>(l.h_im) * l.w_im * l.n_out * 2);
  Region acc0{0, 0};
  if (eff.level == Level::kA) acc0 = b.scratch("acc0", 4);

  int rHi = b.pool.alloc("saturation high");
  int rLo = b.pool.alloc("saturation low");
  int rT = b.pool.alloc("requantize temp");
  b.set_sat_regs(rHi, rLo, rT);

  int pY = b.pool.alloc("output pointer");
  int rWin = b.pool.alloc("window base");
  int rPy = b.pool.alloc("row counter");
  int rPx = b.pool.alloc("column counter");
  b.li(pY, static_cast<int32_t>(y.base));
  b.li(rWin, static_cast<int32_t>(x_pad.base));

  Matvec mv;
  mv.rows = l.n_out;
  mv.width = l.w_k * l.n_in;
  mv.segments = l.h_k;
  mv.w_base = w.base;
  mv.row_stride = static_cast<uint32_t>(l.h_k * l.w_k * l.n_in) * 2;
  mv.x_base_reg = rWin;
  mv.x_seg_skip = (w_pad - static_cast<uint32_t>(l.w_k)) *
                  static_cast<uint32_t>(l.n_in) * 2;
  mv.init_base = bias.base;
  mv.sink_ptr_reg = pY;

  b.counted_loop(rPy, l.h_im, [&] {
    b.counted_loop(rPx, l.w_im, [&] {
      emit_matvec(b, mv, eff, acc0.base);
      b.emit(Op::kAddi, rWin, rWin, 0, l.n_in * 2);
    });
    b.emit(Op::kAddi, rWin, rWin, 0, (l.w_k - 1) * l.n_in * 2);
  });

  b.finalize();
  return {std::move(b.prog), std::move(b.layout), mac_count(l)};
}

FcRun run_fc(const FcLayer& l, const OptLevel& opt, std::span<const int16_t> x,
             sim::SimConfig cfg) {
  KernelBuild kb = build_fc_kernel(l, opt);
  sim::Core core(kb.prog, cfg);
  write_vec(core.mem(), kb.layout.at("x").base, x);
  core.run();
  return {read_vec(core.mem(), kb.layout.at("y").base,
                   static_cast<size_t>(l.c_out)),
          core.stats()};
}

LstmRun run_lstm(const LstmLayer& l, const OptLevel& opt,
                 std::span<const int16_t> x, const LstmStateQ& prev,
                 sim::SimConfig cfg) {
  KernelBuild kb = build_lstm_kernel(l, opt);
  sim::Core core(kb.prog, cfg);
  write_vec(core.mem(), kb.layout.at("x").base, x);
  write_vec(core.mem(), kb.layout.at("h_in").base, prev.h);
  write_vec(core.mem(), kb.layout.at("c_in").base, prev.c);
  core.run();
  size_t n = static_cast<size_t>(l.n_hidden);
  return {LstmStateQ{read_vec(core.mem(), kb.layout.at("h_out").base, n),
                     read_vec(core.mem(), kb.layout.at("c_out").base, n)},
          core.stats()};
}

ConvRun run_conv(const ConvLayer& l, const OptLevel& opt,
                 std::span<const int16_t> x, sim::SimConfig cfg) {
  KernelBuild kb = build_conv_kernel(l, opt);
  sim::Core core(kb.prog, cfg);
  write_conv_input(core.mem(), l, kb.layout, x);
  core.run();
  return {read_vec(core.mem(), kb.layout.at("y").base,
                   static_cast<size_t>(l.h_im) * l.w_im * l.n_out),
          core.stats()};
}

}  // namespace rvnn::kernels
