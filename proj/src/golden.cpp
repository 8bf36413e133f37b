#include "rvnn/kernels.hpp"

#include <cmath>
#include <stdexcept>

#include "rvnn/activation.hpp"
#include "rvnn/fixp.hpp"

namespace rvnn::kernels {

namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_fc(const FcLayer& l) {
  require(l.c_in > 0 && l.c_out > 0, "fc: channel counts must be positive");
  require(l.w.size() == static_cast<size_t>(l.c_in) * l.c_out,
          "fc: weight matrix size must be c_out*c_in");
  require(l.b.size() == static_cast<size_t>(l.c_out), "fc: bias size must be c_out");
}

void check_lstm(const LstmLayer& l) {
  require(l.n_in > 0 && l.n_hidden > 0, "lstm: dims must be positive");
  size_t wsz = static_cast<size_t>(l.n_hidden) * l.n_in;
  size_t usz = static_cast<size_t>(l.n_hidden) * l.n_hidden;
  size_t bsz = static_cast<size_t>(l.n_hidden);
  for (const auto* m : {&l.w_o, &l.w_f, &l.w_i, &l.w_c})
    require(m->size() == wsz, "lstm: W gate matrix size must be n_hidden*n_in");
  for (const auto* m : {&l.u_o, &l.u_f, &l.u_i, &l.u_c})
    require(m->size() == usz, "lstm: U gate matrix size must be n_hidden*n_hidden");
  for (const auto* v : {&l.b_o, &l.b_f, &l.b_i, &l.b_c})
    require(v->size() == bsz, "lstm: bias size must be n_hidden");
}

void check_conv(const ConvLayer& l) {
  require(l.n_in > 0 && l.n_out > 0 && l.h_im > 0 && l.w_im > 0,
          "conv: dims must be positive");
  require(l.h_k > 0 && l.w_k > 0 && l.h_k % 2 == 1 && l.w_k % 2 == 1,
          "conv: kernel dims must be odd (same-padding)");
  require(l.w.size() == static_cast<size_t>(l.n_out) * l.h_k * l.w_k * l.n_in,
          "conv: weight size must be n_out*h_k*w_k*n_in");
  require(l.b.size() == static_cast<size_t>(l.n_out), "conv: bias size must be n_out");
}

double real(int16_t q) { return fixp::to_real(q); }

}  // namespace

std::vector<double> golden_fc_float(const FcLayer& l, std::span<const double> x) {
  check_fc(l);
  require(x.size() == static_cast<size_t>(l.c_in), "fc: input size must be c_in");
  std::vector<double> y(l.c_out);
  for (int j = 0; j < l.c_out; ++j) {
    double acc = real(l.b[j]);
    const int16_t* row = &l.w[static_cast<size_t>(j) * l.c_in];
    for (int k = 0; k < l.c_in; ++k) acc += real(row[k]) * x[k];
    y[j] = acc;
  }
  return y;
}

std::vector<int16_t> golden_fc_q(const FcLayer& l, std::span<const int16_t> x) {
  check_fc(l);
  require(x.size() == static_cast<size_t>(l.c_in), "fc: input size must be c_in");
  std::vector<int16_t> y(l.c_out);
  for (int j = 0; j < l.c_out; ++j) {
    fixp::acc32_t acc = static_cast<int32_t>(l.b[j]) << fixp::kFracBits;
    const int16_t* row = &l.w[static_cast<size_t>(j) * l.c_in];
    for (int k = 0; k < l.c_in; ++k)
      acc = fixp::add_wrap(acc, fixp::q_mul(row[k], x[k]));
    y[j] = fixp::requantize(acc);
  }
  return y;
}

namespace {

// One matrix-vector gate pre-activation: requantize(b<<12 + W x + U h).
std::vector<int16_t> gate_preact_q(std::span<const int16_t> w,
                                   std::span<const int16_t> u,
                                   std::span<const int16_t> b,
                                   std::span<const int16_t> x,
                                   std::span<const int16_t> h, int n_in,
                                   int n_hidden) {
  std::vector<int16_t> g(n_hidden);
  for (int j = 0; j < n_hidden; ++j) {
    fixp::acc32_t acc = static_cast<int32_t>(b[j]) << fixp::kFracBits;
    const int16_t* wr = &w[static_cast<size_t>(j) * n_in];
    for (int k = 0; k < n_in; ++k) acc = fixp::add_wrap(acc, fixp::q_mul(wr[k], x[k]));
    const int16_t* ur = &u[static_cast<size_t>(j) * n_hidden];
    for (int k = 0; k < n_hidden; ++k)
      acc = fixp::add_wrap(acc, fixp::q_mul(ur[k], h[k]));
    g[j] = fixp::requantize(acc);
  }
  return g;
}

std::vector<double> gate_preact_float(std::span<const int16_t> w,
                                      std::span<const int16_t> u,
                                      std::span<const int16_t> b,
                                      std::span<const double> x,
                                      std::span<const double> h, int n_in,
                                      int n_hidden) {
  std::vector<double> g(n_hidden);
  for (int j = 0; j < n_hidden; ++j) {
    double acc = real(b[j]);
    const int16_t* wr = &w[static_cast<size_t>(j) * n_in];
    for (int k = 0; k < n_in; ++k) acc += real(wr[k]) * x[k];
    const int16_t* ur = &u[static_cast<size_t>(j) * n_hidden];
    for (int k = 0; k < n_hidden; ++k) acc += real(ur[k]) * h[k];
    g[j] = acc;
  }
  return g;
}

}  // namespace

LstmStateF golden_lstm_step_float(const LstmLayer& l, std::span<const double> x,
                                  const LstmStateF& prev) {
  check_lstm(l);
  require(x.size() == static_cast<size_t>(l.n_in), "lstm: input size must be n_in");
  require(prev.h.size() == static_cast<size_t>(l.n_hidden) &&
              prev.c.size() == static_cast<size_t>(l.n_hidden),
          "lstm: state size must be n_hidden");
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  auto o = gate_preact_float(l.w_o, l.u_o, l.b_o, x, prev.h, l.n_in, l.n_hidden);
  auto f = gate_preact_float(l.w_f, l.u_f, l.b_f, x, prev.h, l.n_in, l.n_hidden);
  auto i = gate_preact_float(l.w_i, l.u_i, l.b_i, x, prev.h, l.n_in, l.n_hidden);
  auto g = gate_preact_float(l.w_c, l.u_c, l.b_c, x, prev.h, l.n_in, l.n_hidden);
  LstmStateF out;
  out.h.resize(l.n_hidden);
  out.c.resize(l.n_hidden);
  for (int j = 0; j < l.n_hidden; ++j) {
    double ct = sig(f[j]) * prev.c[j] + sig(i[j]) * std::tanh(g[j]);
    out.c[j] = ct;
    out.h[j] = sig(o[j]) * std::tanh(ct);
  }
  return out;
}

LstmStateQ golden_lstm_step_q(const LstmLayer& l, std::span<const int16_t> x,
                              const LstmStateQ& prev) {
  check_lstm(l);
  require(x.size() == static_cast<size_t>(l.n_in), "lstm: input size must be n_in");
  require(prev.h.size() == static_cast<size_t>(l.n_hidden) &&
              prev.c.size() == static_cast<size_t>(l.n_hidden),
          "lstm: state size must be n_hidden");
  const auto& tanh_t = activation::default_tanh_table();
  const auto& sig_t = activation::default_sig_table();
  auto o = gate_preact_q(l.w_o, l.u_o, l.b_o, x, prev.h, l.n_in, l.n_hidden);
  auto f = gate_preact_q(l.w_f, l.u_f, l.b_f, x, prev.h, l.n_in, l.n_hidden);
  auto i = gate_preact_q(l.w_i, l.u_i, l.b_i, x, prev.h, l.n_in, l.n_hidden);
  auto g = gate_preact_q(l.w_c, l.u_c, l.b_c, x, prev.h, l.n_in, l.n_hidden);
  LstmStateQ out;
  out.h.resize(l.n_hidden);
  out.c.resize(l.n_hidden);
  // Hadamard products requantize with shift 12; the two c_t terms add with
  // 16-bit wrap-around, matching the packed-lane add the kernels use. Every
  // product here has one factor in [0, 1.0], so the requantized value always
  // fits in 16 bits and the kernels' plain shift-and-store is equivalent.
  for (int j = 0; j < l.n_hidden; ++j) {
    int16_t fo = fixp::requantize(fixp::q_mul(activation::pla_eval(sig_t, f[j]), prev.c[j]));
    int16_t ig = fixp::requantize(fixp::q_mul(activation::pla_eval(sig_t, i[j]),
                                              activation::pla_eval(tanh_t, g[j])));
    int16_t ct = static_cast<int16_t>(
        static_cast<uint16_t>(fo) + static_cast<uint16_t>(ig));
    out.c[j] = ct;
    out.h[j] = fixp::requantize(fixp::q_mul(activation::pla_eval(sig_t, o[j]),
                                            activation::pla_eval(tanh_t, ct)));
  }
  return out;
}

std::vector<double> golden_conv_float(const ConvLayer& l, std::span<const double> x) {
  check_conv(l);
  require(x.size() == static_cast<size_t>(l.h_im) * l.w_im * l.n_in,
          "conv: input size must be h_im*w_im*n_in");
  int ph = (l.h_k - 1) / 2, pw = (l.w_k - 1) / 2;
  std::vector<double> y(static_cast<size_t>(l.h_im) * l.w_im * l.n_out);
  for (int oy = 0; oy < l.h_im; ++oy)
    for (int ox = 0; ox < l.w_im; ++ox)
      for (int oc = 0; oc < l.n_out; ++oc) {
        double acc = real(l.b[oc]);
        const int16_t* wr =
            &l.w[static_cast<size_t>(oc) * l.h_k * l.w_k * l.n_in];
        for (int dy = 0; dy < l.h_k; ++dy)
          for (int dx = 0; dx < l.w_k; ++dx) {
            int iy = oy + dy - ph, ix = ox + dx - pw;
            if (iy < 0 || iy >= l.h_im || ix < 0 || ix >= l.w_im) continue;
            const double* px = &x[(static_cast<size_t>(iy) * l.w_im + ix) * l.n_in];
            const int16_t* wk = &wr[(static_cast<size_t>(dy) * l.w_k + dx) * l.n_in];
            for (int ci = 0; ci < l.n_in; ++ci) acc += real(wk[ci]) * px[ci];
          }
        y[(static_cast<size_t>(oy) * l.w_im + ox) * l.n_out + oc] = acc;
      }
  return y;
}

std::vector<int16_t> golden_conv_q(const ConvLayer& l, std::span<const int16_t> x) {
  check_conv(l);
  require(x.size() == static_cast<size_t>(l.h_im) * l.w_im * l.n_in,
          "conv: input size must be h_im*w_im*n_in");
  int ph = (l.h_k - 1) / 2, pw = (l.w_k - 1) / 2;
  std::vector<int16_t> y(static_cast<size_t>(l.h_im) * l.w_im * l.n_out);
  for (int oy = 0; oy < l.h_im; ++oy)
    for (int ox = 0; ox < l.w_im; ++ox)
      for (int oc = 0; oc < l.n_out; ++oc) {
        fixp::acc32_t acc = static_cast<int32_t>(l.b[oc]) << fixp::kFracBits;
        const int16_t* wr =
            &l.w[static_cast<size_t>(oc) * l.h_k * l.w_k * l.n_in];
        for (int dy = 0; dy < l.h_k; ++dy)
          for (int dx = 0; dx < l.w_k; ++dx) {
            int iy = oy + dy - ph, ix = ox + dx - pw;
            if (iy < 0 || iy >= l.h_im || ix < 0 || ix >= l.w_im) continue;
            const int16_t* px = &x[(static_cast<size_t>(iy) * l.w_im + ix) * l.n_in];
            const int16_t* wk = &wr[(static_cast<size_t>(dy) * l.w_k + dx) * l.n_in];
            for (int ci = 0; ci < l.n_in; ++ci)
              acc = fixp::add_wrap(acc, fixp::q_mul(wk[ci], px[ci]));
          }
        y[(static_cast<size_t>(oy) * l.w_im + ox) * l.n_out + oc] =
            fixp::requantize(acc);
      }
  return y;
}

uint64_t mac_count(const FcLayer& l) {
  return static_cast<uint64_t>(l.c_in) * l.c_out;
}

uint64_t mac_count(const LstmLayer& l) {
  return 4ull * l.n_hidden * (static_cast<uint64_t>(l.n_in) + l.n_hidden);
}

uint64_t mac_count(const ConvLayer& l) {
  return static_cast<uint64_t>(l.n_in) * l.n_out * l.h_im * l.w_im * l.h_k * l.w_k;
}

void write_vec(sim::Memory& mem, uint32_t base, std::span<const int16_t> v) {
  for (size_t i = 0; i < v.size(); ++i)
    mem.write16(base + 2 * static_cast<uint32_t>(i), static_cast<uint16_t>(v[i]));
}

std::vector<int16_t> read_vec(const sim::Memory& mem, uint32_t base, size_t n) {
  std::vector<int16_t> v(n);
  for (size_t i = 0; i < n; ++i)
    v[i] = mem.read_i16(base + 2 * static_cast<uint32_t>(i));
  return v;
}

void write_conv_input(sim::Memory& mem, const ConvLayer& l, const DataLayout& layout,
                      std::span<const int16_t> x) {
  check_conv(l);
  require(x.size() == static_cast<size_t>(l.h_im) * l.w_im * l.n_in,
          "conv: input size must be h_im*w_im*n_in");
  const Region& pad = layout.at("x_pad");
  int ph = (l.h_k - 1) / 2, pw = (l.w_k - 1) / 2;
  uint32_t w_pad = static_cast<uint32_t>(l.w_im + l.w_k - 1);
  for (int iy = 0; iy < l.h_im; ++iy) {
    uint32_t dst = pad.base +
                   ((static_cast<uint32_t>(iy + ph) * w_pad + static_cast<uint32_t>(pw)) *
                    static_cast<uint32_t>(l.n_in)) * 2;
    write_vec(mem, dst, x.subspan(static_cast<size_t>(iy) * l.w_im * l.n_in,
                                  static_cast<size_t>(l.w_im) * l.n_in));
  }
}

std::vector<int16_t> random_q(size_t n, std::mt19937& rng) {
  std::uniform_int_distribution<int> dist(-4096, 4095);
  std::vector<int16_t> v(n);
  for (auto& e : v) e = static_cast<int16_t>(dist(rng));
  return v;
}

FcLayer make_fc(int c_in, int c_out, std::mt19937& rng) {
  FcLayer l;
  l.c_in = c_in;
  l.c_out = c_out;
  l.w = random_q(static_cast<size_t>(c_in) * c_out, rng);
  l.b = random_q(static_cast<size_t>(c_out), rng);
  return l;
}

LstmLayer make_lstm(int n_in, int n_hidden, std::mt19937& rng) {
  LstmLayer l;
  l.n_in = n_in;
  l.n_hidden = n_hidden;
  size_t wsz = static_cast<size_t>(n_hidden) * n_in;
  size_t usz = static_cast<size_t>(n_hidden) * n_hidden;
  for (auto* m : {&l.w_o, &l.w_f, &l.w_i, &l.w_c}) *m = random_q(wsz, rng);
  for (auto* m : {&l.u_o, &l.u_f, &l.u_i, &l.u_c}) *m = random_q(usz, rng);
  for (auto* v : {&l.b_o, &l.b_f, &l.b_i, &l.b_c})
    *v = random_q(static_cast<size_t>(n_hidden), rng);
  return l;
}

ConvLayer make_conv(int n_in, int n_out, int h_k, int w_k, int h_im, int w_im,
                    std::mt19937& rng) {
  ConvLayer l;
  l.n_in = n_in;
  l.n_out = n_out;
  l.h_k = h_k;
  l.w_k = w_k;
  l.h_im = h_im;
  l.w_im = w_im;
  l.w = random_q(static_cast<size_t>(n_out) * h_k * w_k * n_in, rng);
  l.b = random_q(static_cast<size_t>(n_out), rng);
  return l;
}

const Region& DataLayout::at(const std::string& name) const {
  auto it = regions.find(name);
  if (it == regions.end())
    throw std::out_of_range("data layout has no region named '" + name + "'");
  return it->second;
}

}  // namespace rvnn::kernels
