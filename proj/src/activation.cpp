#include "rvnn/activation.hpp"

#include <cmath>
#include <stdexcept>

namespace rvnn::activation {

namespace {

bool is_pow2(int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

int64_t round_q(double v) { return std::llround(v * fixp::kOne); }

}  // namespace

double ref_eval(PlaFunc func, double x) {
  return func == PlaFunc::kTanh ? std::tanh(x) : 1.0 / (1.0 + std::exp(-x));
}

PlaTable build_table(PlaFunc func, double range_bound, int m_count) {
  if (range_bound <= 0.0 || range_bound > 8.0)
    throw std::invalid_argument("activation range bound must be in (0, 8]");
  if (!is_pow2(m_count))
    throw std::invalid_argument("interval count must be a power of two");
  double step_real = range_bound * fixp::kOne / m_count;
  auto step_raw = static_cast<int64_t>(step_real);
  if (static_cast<double>(step_raw) != step_real || !is_pow2(step_raw))
    throw std::invalid_argument("interval size must be a power of two raw units");

  PlaTable t;
  t.func = func;
  t.range_bound = range_bound;
  t.m_count = m_count;
  t.n_log2 = 0;
  while ((int64_t{1} << t.n_log2) < step_raw) ++t.n_log2;
  t.slopes.resize(m_count);
  t.offsets.resize(m_count);

  for (int k = 0; k < m_count; ++k) {
    int64_t x0_raw = k * step_raw;
    int64_t x1_raw = (k + 1) * step_raw;
    double x0 = static_cast<double>(x0_raw) / fixp::kOne;
    double x1 = static_cast<double>(x1_raw) / fixp::kOne;
    double secant = (ref_eval(func, x1) - ref_eval(func, x0)) / (x1 - x0);
    int64_t m = std::llround(secant * fixp::kOne);
    // Pin the interval-start value to the rounded reference given the
    // quantized slope and truncating shift, then shave the slope until the
    // interval's last value cannot overshoot the next interval's pinned
    // start; this keeps the full evaluation monotone.
    int64_t v_start = round_q(ref_eval(func, x0));
    int64_t v_next = (k + 1 < m_count) ? round_q(ref_eval(func, x1)) : fixp::kOne;
    while (m > 0) {
      int64_t q = v_start - ((m * x0_raw) >> fixp::kFracBits);
      if (q + ((m * (x1_raw - 1)) >> fixp::kFracBits) <= v_next) break;
      --m;
    }
    int64_t q = v_start - ((m * x0_raw) >> fixp::kFracBits);
    t.slopes[k] = fixp::sat16(static_cast<int32_t>(m));
    t.offsets[k] = fixp::sat16(static_cast<int32_t>(q));
  }
  return t;
}

const PlaTable& default_tanh_table() {
  static const PlaTable t = build_table(PlaFunc::kTanh);
  return t;
}

const PlaTable& default_sig_table() {
  static const PlaTable t = build_table(PlaFunc::kSig);
  return t;
}

int16_t pla_eval(const PlaTable& table, int16_t x) {
  bool neg = x < 0;
  int32_t ax = neg ? -static_cast<int32_t>(x) : x;
  if (ax > fixp::kMaxRaw) ax = fixp::kMaxRaw;  // |-8.0| saturates anyway
  uint32_t id = static_cast<uint32_t>(ax) >> table.n_log2;
  int32_t y;
  if (id >= static_cast<uint32_t>(table.m_count)) {
    y = fixp::kOne;
  } else {
    y = ((static_cast<int32_t>(table.slopes[id]) * ax) >> fixp::kFracBits) +
        table.offsets[id];
  }
  if (table.func == PlaFunc::kTanh) return static_cast<int16_t>(neg ? -y : y);
  return static_cast<int16_t>(neg ? fixp::kOne - y : y);
}

std::vector<SweepRow> error_sweep(PlaFunc func,
                                  const std::vector<double>& range_bounds,
                                  const std::vector<int>& m_counts) {
  std::vector<SweepRow> rows;
  for (double r : range_bounds)
    for (int m : m_counts) rows.push_back({func, r, m, 0.0, 0.0});

  // Each (range, m_count) cell is independent; the 65536-point evaluation
  // grid makes this worth fanning out.
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (size_t i = 0; i < rows.size(); ++i) {  // NOLINT(modernize-loop-convert)
    PlaTable t = build_table(func, rows[i].range_bound, rows[i].m_count);
    double sum_sq = 0.0;
    double max_abs = 0.0;
    for (int raw = -32768; raw <= 32767; ++raw) {
      double approx = fixp::to_real(pla_eval(t, static_cast<int16_t>(raw)));
      double err = approx - ref_eval(func, static_cast<double>(raw) / fixp::kOne);
      sum_sq += err * err;
      max_abs = std::max(max_abs, std::abs(err));
    }
    rows[i].mse = sum_sq / 65536.0;
    rows[i].max_abs_err = max_abs;
  }
  return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "func,range_bound,m_count,mse,max_abs_err\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%g,%d,%.6e,%.6e\n",
                  r.func == PlaFunc::kTanh ? "tanh" : "sig", r.range_bound,
                  r.m_count, r.mse, r.max_abs_err);
    out += line;
  }
  return out;
}

}  // namespace rvnn::activation
