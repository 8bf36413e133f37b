#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "rvnn/activation.hpp"
#include "rvnn/fixp.hpp"
#include "rvnn/kernels.hpp"

using namespace rvnn;
using namespace rvnn::kernels;

namespace {

OptLevel opt(Level l, int tile = 4, int ifm = 2, bool hw = true) {
  OptLevel o;
  o.level = l;
  o.tile_n = tile;
  o.ifm_tile = ifm;
  o.hw_act = hw;
  return o;
}

const Level kLevels[] = {Level::kA, Level::kB, Level::kC, Level::kD, Level::kE};

int16_t q(double v) { return fixp::from_real(v); }

}  // namespace

TEST_CASE("level letters round-trip") {
  CHECK(level_letter(Level::kA) == 'A');
  CHECK(level_letter(Level::kE) == 'E');
  CHECK(level_from_letter('C') == Level::kC);
  CHECK(level_from_letter('b') == Level::kB);
  CHECK_THROWS_AS(level_from_letter('F'), std::invalid_argument);
}

TEST_CASE("worked example: 2-wide dot product of halves") {
  FcLayer fc;
  fc.c_in = 2;
  fc.c_out = 1;
  fc.w = {q(0.5), q(0.5)};
  fc.b = {0};
  std::vector<int16_t> x = {q(0.5), q(0.5)};

  std::vector<int16_t> gold = golden_fc_q(fc, x);
  REQUIRE(gold.size() == 1);
  CHECK(gold[0] == q(0.5));  // 0.5*0.5 + 0.5*0.5

  for (Level l : kLevels) {
    FcRun r = run_fc(fc, opt(l), x);
    CHECK(r.y == gold);
  }
}

TEST_CASE("golden fc equals the float model under floor quantization") {
  // With c_in this small there is no wrap or saturation, so the Q3.12
  // output must be exactly floor(float * 4096).
  std::mt19937 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    FcLayer fc = make_fc(4, 5, rng);
    std::vector<int16_t> x = random_q(4, rng);
    std::vector<double> xf(x.size());
    for (size_t i = 0; i < x.size(); ++i) xf[i] = x[i] / 4096.0;

    std::vector<int16_t> yq = golden_fc_q(fc, x);
    std::vector<double> yf = golden_fc_float(fc, xf);
    REQUIRE(yq.size() == yf.size());
    for (size_t i = 0; i < yq.size(); ++i)
      CHECK(yq[i] == static_cast<int16_t>(std::floor(yf[i] * 4096.0)));
  }
}

TEST_CASE("fc kernels are bit-identical to the golden model at every level") {
  std::mt19937 rng(21);
  struct Dim { int c_in, c_out; };
  for (Dim d : {Dim{2, 2}, Dim{8, 8}, Dim{16, 4}, Dim{32, 12}, Dim{64, 8},
                Dim{128, 16}}) {
    FcLayer fc = make_fc(d.c_in, d.c_out, rng);
    std::vector<int16_t> x = random_q(static_cast<size_t>(d.c_in), rng);
    std::vector<int16_t> gold = golden_fc_q(fc, x);
    for (Level l : kLevels) {
      for (int tile : {2, 4, 8}) {
        FcRun r = run_fc(fc, opt(l, tile), x);
        REQUIRE(r.y.size() == gold.size());
        CHECK(r.y == gold);
      }
    }
  }
}

TEST_CASE("odd widths run at the scalar level and are rejected when packed") {
  std::mt19937 rng(3);
  FcLayer fc = make_fc(7, 3, rng);
  std::vector<int16_t> x = random_q(7, rng);
  FcRun r = run_fc(fc, opt(Level::kA), x);
  CHECK(r.y == golden_fc_q(fc, x));
  for (Level l : {Level::kB, Level::kC, Level::kD, Level::kE})
    CHECK_THROWS_AS(run_fc(fc, opt(l), x), std::invalid_argument);
}

TEST_CASE("oversized tiles exhaust the register pool") {
  std::mt19937 rng(4);
  FcLayer fc = make_fc(32, 32, rng);
  CHECK_THROWS_AS(build_fc_kernel(fc, opt(Level::kD, 16)), std::invalid_argument);
  try {
    build_fc_kernel(fc, opt(Level::kD, 16));
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("register budget") != std::string::npos);
  }
  CHECK_THROWS_AS(build_fc_kernel(fc, opt(Level::kA, 0)), std::invalid_argument);
  CHECK_THROWS_AS(build_fc_kernel(fc, opt(Level::kE, 4, 0)), std::invalid_argument);
}

TEST_CASE("lstm with zero weights follows the closed-form gate algebra") {
  LstmLayer l;
  l.n_in = 2;
  l.n_hidden = 2;
  auto zeros = [](int n) { return std::vector<int16_t>(static_cast<size_t>(n), 0); };
  l.w_o = l.w_f = l.w_i = l.w_c = zeros(4);
  l.u_o = l.u_f = l.u_i = l.u_c = zeros(4);
  l.b_o = l.b_f = l.b_i = l.b_c = zeros(2);

  const auto& tanh_t = activation::default_tanh_table();
  const auto& sig_t = activation::default_sig_table();
  int16_t half = activation::pla_eval(sig_t, 0);  // sigmoid(0)
  CHECK(half == 2048);

  LstmStateQ prev;
  prev.h = {0, 0};
  prev.c = {q(1.0), q(-0.5)};
  std::vector<int16_t> x = {q(0.25), q(-0.25)};

  // All pre-activations are zero, so every sigmoid gate is exactly 0.5 and
  // the candidate is tanh(0).
  int16_t tanh0 = activation::pla_eval(tanh_t, 0);
  for (int j = 0; j < 2; ++j) {
    int16_t ct = static_cast<int16_t>(
        fixp::requantize(fixp::q_mul(half, prev.c[j])) +
        fixp::requantize(fixp::q_mul(half, tanh0)));
    int16_t ht = fixp::requantize(
        fixp::q_mul(half, activation::pla_eval(tanh_t, ct)));
    LstmStateQ gold = golden_lstm_step_q(l, x, prev);
    CHECK(gold.c[j] == ct);
    CHECK(gold.h[j] == ht);
  }

  for (Level lev : kLevels) {
    LstmRun r = run_lstm(l, opt(lev, 2), x, prev);
    LstmStateQ gold = golden_lstm_step_q(l, x, prev);
    CHECK(r.state.h == gold.h);
    CHECK(r.state.c == gold.c);
  }
}

TEST_CASE("quantized lstm tracks the float model within 1e-2 per element") {
  std::mt19937 rng(11);
  LstmLayer l = make_lstm(16, 16, rng);
  std::vector<int16_t> x = random_q(16, rng);

  LstmStateQ prevq;
  prevq.h = random_q(16, rng);
  prevq.c = random_q(16, rng);
  LstmStateF prevf;
  for (int16_t v : prevq.h) prevf.h.push_back(v / 4096.0);
  for (int16_t v : prevq.c) prevf.c.push_back(v / 4096.0);
  std::vector<double> xf;
  for (int16_t v : x) xf.push_back(v / 4096.0);

  LstmStateQ sq = golden_lstm_step_q(l, x, prevq);
  LstmStateF sf = golden_lstm_step_float(l, xf, prevf);
  for (int j = 0; j < 16; ++j) {
    CHECK(std::abs(sq.h[j] / 4096.0 - sf.h[j]) <= 0.01);
    CHECK(std::abs(sq.c[j] / 4096.0 - sf.c[j]) <= 0.01);
  }
}

TEST_CASE("lstm kernels are bit-identical to golden across chained steps") {
  std::mt19937 rng(31);
  LstmLayer l = make_lstm(8, 8, rng);
  std::vector<std::vector<int16_t>> xs;
  for (int s = 0; s < 3; ++s) xs.push_back(random_q(8, rng));

  LstmStateQ gold;
  gold.h.assign(8, 0);
  gold.c.assign(8, 0);
  for (int s = 0; s < 3; ++s) gold = golden_lstm_step_q(l, xs[s], gold);

  auto chain = [&](const OptLevel& o) {
    LstmStateQ st;
    st.h.assign(8, 0);
    st.c.assign(8, 0);
    for (int s = 0; s < 3; ++s) st = run_lstm(l, o, xs[s], st).state;
    return st;
  };

  for (Level lev : kLevels) {
    LstmStateQ st = chain(opt(lev));
    CHECK(st.h == gold.h);
    CHECK(st.c == gold.c);
  }
  LstmStateQ sw = chain(opt(Level::kC, 4, 2, /*hw=*/false));
  CHECK(sw.h == gold.h);
  CHECK(sw.c == gold.c);
}

TEST_CASE("software PLA is bit-equal to the activation instructions, slower") {
  std::mt19937 rng(13);
  LstmLayer l = make_lstm(16, 16, rng);
  std::vector<int16_t> x = random_q(16, rng);
  LstmStateQ prev;
  prev.h = random_q(16, rng);
  prev.c = random_q(16, rng);

  LstmRun hw = run_lstm(l, opt(Level::kC), x, prev);
  LstmRun sw = run_lstm(l, opt(Level::kC, 4, 2, /*hw=*/false), x, prev);
  CHECK(hw.state.h == sw.state.h);
  CHECK(hw.state.c == sw.state.c);
  CHECK(sw.stats.cycles > hw.stats.cycles);
}

TEST_CASE("conv center-tap kernel is an identity, corner impulse spreads") {
  std::mt19937 rng(17);
  ConvLayer cv;
  cv.n_in = 2;
  cv.n_out = 2;
  cv.h_k = cv.w_k = 3;
  cv.h_im = cv.w_im = 4;
  cv.w.assign(static_cast<size_t>(2 * 3 * 3 * 2), 0);
  cv.b.assign(2, 0);
  // out channel o takes input channel o's center tap: w[o][1][1][o] = 1.0
  for (int o = 0; o < 2; ++o)
    cv.w[static_cast<size_t>(((o * 3 + 1) * 3 + 1) * 2 + o)] = q(1.0);

  std::vector<int16_t> x = random_q(static_cast<size_t>(4 * 4 * 2), rng);
  std::vector<int16_t> gold = golden_conv_q(cv, x);
  CHECK(gold == x);  // identity in HWC because channels map one-to-one

  for (Level lev : kLevels) {
    ConvRun r = run_conv(cv, opt(lev), x);
    CHECK(r.y == gold);
  }

  // All-ones 3x3 kernel, single impulse at the corner of channel 0: outputs
  // within one pixel of the corner see the impulse once, everything else 0.
  ConvLayer ones;
  ones.n_in = 2;
  ones.n_out = 1;
  ones.h_k = ones.w_k = 3;
  ones.h_im = ones.w_im = 4;
  ones.w.assign(static_cast<size_t>(3 * 3 * 2), 0);
  for (int t = 0; t < 9; ++t) ones.w[static_cast<size_t>(t * 2)] = q(1.0);
  ones.b.assign(1, 0);
  std::vector<int16_t> imp(static_cast<size_t>(4 * 4 * 2), 0);
  imp[0] = q(1.0);  // pixel (0,0), channel 0
  std::vector<int16_t> y = golden_conv_q(ones, imp);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      CHECK(y[static_cast<size_t>(r * 4 + c)] ==
            (r <= 1 && c <= 1 ? q(1.0) : 0));
  ConvRun rr = run_conv(ones, opt(Level::kB), imp);
  CHECK(rr.y == y);
}

TEST_CASE("conv kernels are bit-identical to golden at every level") {
  std::mt19937 rng(19);
  ConvLayer cv = make_conv(2, 3, 3, 3, 4, 5, rng);
  std::vector<int16_t> x = random_q(static_cast<size_t>(4 * 5 * 2), rng);
  std::vector<int16_t> gold = golden_conv_q(cv, x);
  for (Level lev : kLevels) {
    ConvRun r = run_conv(cv, opt(lev), x);
    REQUIRE(r.y.size() == gold.size());
    CHECK(r.y == gold);
  }
  // 1x1 kernels and single-channel images exercise the degenerate walks.
  ConvLayer one = make_conv(2, 2, 1, 1, 3, 3, rng);
  std::vector<int16_t> x1 = random_q(static_cast<size_t>(3 * 3 * 2), rng);
  std::vector<int16_t> g1 = golden_conv_q(one, x1);
  for (Level lev : kLevels) CHECK(run_conv(one, opt(lev), x1).y == g1);
}

TEST_CASE("conv merged-load levels fall back to the level-C schedule") {
  std::mt19937 rng(23);
  ConvLayer cv = make_conv(4, 4, 3, 3, 4, 4, rng);
  KernelBuild c = build_conv_kernel(cv, opt(Level::kC));
  KernelBuild d = build_conv_kernel(cv, opt(Level::kD));
  KernelBuild e = build_conv_kernel(cv, opt(Level::kE));
  CHECK(d.prog == c.prog);
  CHECK(e.prog == c.prog);
}

TEST_CASE("steady-state cycle costs per schedule, isolated by differencing") {
  // Two runs that differ only in input width: the cycle difference is pure
  // inner-loop steady state, free of prologue/epilogue noise. Weights are
  // scaled down so no output saturates — the saturation slow path takes
  // data-dependent branches that would smear the exact counts.
  std::mt19937 rng(29);
  auto cycles_at = [&](int c_in, const OptLevel& o) {
    FcLayer fc = make_fc(c_in, 4, rng);
    for (int16_t& v : fc.w) v = static_cast<int16_t>(v / 16);
    for (int16_t& v : fc.b) v = static_cast<int16_t>(v / 16);
    std::vector<int16_t> x = random_q(static_cast<size_t>(c_in), rng);
    return run_fc(fc, o, x).stats.cycles;
  };

  // Level A: 8-instruction scalar loop plus the taken-branch cycle per MAC.
  uint64_t a = cycles_at(256, opt(Level::kA)) - cycles_at(128, opt(Level::kA));
  CHECK(a == 4ull * 128 * 9);

  // Level B: lw!+lw!+pv.sdotsp plus one load-use bubble per input word.
  uint64_t b = cycles_at(256, opt(Level::kB)) - cycles_at(128, opt(Level::kB));
  CHECK(b == 4ull * 64 * 4);

  // Level C, tile 4: 9 cycles per shared input word = 8 MACs.
  uint64_t c = cycles_at(256, opt(Level::kC)) - cycles_at(128, opt(Level::kC));
  CHECK(c == 64ull * 9);

  // Level D, tile 4: 6 cycles per input word (lw! + bubble + 4 streams).
  uint64_t d = cycles_at(256, opt(Level::kD)) - cycles_at(128, opt(Level::kD));
  CHECK(d == 64ull * 6);

  // Level E, tile 4, two words per group: 10 cycles per 16 MACs.
  uint64_t e = cycles_at(256, opt(Level::kE)) - cycles_at(128, opt(Level::kE));
  CHECK(e == 32ull * 10);
}

TEST_CASE("explicit load counts drop as the schedules specialize") {
  std::mt19937 rng(37);
  FcLayer fc = make_fc(256, 4, rng);
  std::vector<int16_t> x = random_q(256, rng);
  auto loads = [&](const OptLevel& o) {
    sim::CycleStats s = run_fc(fc, o, x).stats;
    return s.by_op[static_cast<int>(isa::Op::kLw)].instrs +
           s.by_op[static_cast<int>(isa::Op::kLwPi)].instrs +
           s.by_op[static_cast<int>(isa::Op::kLh)].instrs +
           s.by_op[static_cast<int>(isa::Op::kLhPi)].instrs;
  };
  // B reloads the input for every row; C shares it across the tile; D and E
  // move the weight traffic into the stream registers entirely.
  uint64_t lb = loads(opt(Level::kB));
  uint64_t lc = loads(opt(Level::kC));
  uint64_t ld = loads(opt(Level::kD));
  uint64_t le = loads(opt(Level::kE));
  CHECK(lb == 4 + 4ull * 128 * 2);  // bias inits + (w word + x word) per row
  CHECK(lc == 4 + 128 + 4ull * 128);  // bias + shared x + one w load per row
  CHECK(ld == 4 + 128);               // bias + x only
  CHECK(le == 4 + 128);
  CHECK(lc < lb);
  CHECK(ld < lc);
}

TEST_CASE("data layouts expose the documented regions") {
  std::mt19937 rng(41);
  FcLayer fc = make_fc(8, 4, rng);
  KernelBuild a = build_fc_kernel(fc, opt(Level::kA));
  for (const char* r : {"x", "w", "b", "y"}) CHECK(a.layout.has(r));
  CHECK(a.layout.has("acc0"));  // scalar level keeps its accumulator in memory
  KernelBuild c = build_fc_kernel(fc, opt(Level::kC));
  CHECK(!c.layout.has("acc0"));
  CHECK_THROWS_AS(c.layout.at("nope"), std::out_of_range);
  CHECK(a.macs == 32);

  // Regions are 4-byte aligned and non-overlapping.
  std::vector<Region> rs;
  for (const auto& [name, r] : c.layout.regions) rs.push_back(r);
  for (const Region& r : rs) CHECK(r.base % 4 == 0);
  for (size_t i = 0; i < rs.size(); ++i)
    for (size_t j = i + 1; j < rs.size(); ++j) {
      bool disjoint = rs[i].base + rs[i].bytes <= rs[j].base ||
                      rs[j].base + rs[j].bytes <= rs[i].base;
      CHECK(disjoint);
    }

  std::mt19937 rng2(43);
  LstmLayer l = make_lstm(8, 8, rng2);
  KernelBuild hw = build_lstm_kernel(l, opt(Level::kC));
  for (const char* r : {"x", "h_in", "c_in", "w_o", "u_c", "b_f", "g_i",
                        "tanh_c", "h_out", "c_out", "acc"})
    CHECK(hw.layout.has(r));
  CHECK(!hw.layout.has("pla_tanh_m"));
  KernelBuild sw = build_lstm_kernel(l, opt(Level::kC, 4, 2, /*hw=*/false));
  CHECK(sw.layout.has("pla_tanh_m"));
  CHECK(sw.layout.has("pla_sig_q"));
}

TEST_CASE("conv input helper zero-fills the halo border") {
  std::mt19937 rng(47);
  ConvLayer cv = make_conv(2, 2, 3, 3, 4, 4, rng);
  KernelBuild kb = build_conv_kernel(cv, opt(Level::kB));
  const Region& pad = kb.layout.at("x_pad");
  // 3x3 kernel on a 4x4 image: padded buffer is 6x6 x 2 channels.
  CHECK(pad.bytes == 6u * 6u * 2u * 2u);

  std::vector<int16_t> x(static_cast<size_t>(4 * 4 * 2), q(0.999));
  sim::Memory mem;
  write_conv_input(mem, cv, kb.layout, x);
  auto at = [&](int r, int c, int ch) {
    return mem.read_i16(pad.base +
                        static_cast<uint32_t>(((r * 6 + c) * 2 + ch) * 2));
  };
  CHECK(at(0, 0, 0) == 0);
  CHECK(at(0, 3, 1) == 0);
  CHECK(at(5, 5, 1) == 0);
  CHECK(at(3, 0, 0) == 0);
  CHECK(at(1, 1, 0) == x[0]);  // image origin lands at (1,1)
  CHECK(at(4, 4, 1) == x[static_cast<size_t>((3 * 4 + 3) * 2 + 1)]);
}

TEST_CASE("lstm rejects odd dimensions at packed levels") {
  std::mt19937 rng(53);
  LstmLayer l = make_lstm(6, 7, rng);
  std::vector<int16_t> x = random_q(6, rng);
  LstmStateQ prev;
  prev.h.assign(7, 0);
  prev.c.assign(7, 0);
  LstmRun a = run_lstm(l, opt(Level::kA), x, prev);  // odd is fine scalar
  LstmStateQ gold = golden_lstm_step_q(l, x, prev);
  CHECK(a.state.h == gold.h);
  CHECK(a.state.c == gold.c);
  CHECK_THROWS_AS(run_lstm(l, opt(Level::kC), x, prev), std::invalid_argument);
}

TEST_CASE("golden models validate their dimensions") {
  FcLayer fc;
  fc.c_in = 4;
  fc.c_out = 2;
  fc.w.assign(7, 0);  // should be 8
  fc.b.assign(2, 0);
  std::vector<int16_t> x(4, 0);
  CHECK_THROWS_AS(golden_fc_q(fc, x), std::invalid_argument);
  CHECK_THROWS_AS(build_fc_kernel(fc, opt(Level::kA)), std::invalid_argument);
  fc.w.assign(8, 0);
  std::vector<int16_t> xshort(3, 0);
  CHECK_THROWS_AS(golden_fc_q(fc, xshort), std::invalid_argument);
}
