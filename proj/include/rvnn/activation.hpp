#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rvnn/fixp.hpp"

// Piecewise-linear activation engine for q3.12 tanh and sigmoid.
//
// A table covers |x| in [0, range_bound) with m_count uniform intervals of
// 2^n_log2 raw units each. Evaluation: take |x|, derive the interval id by a
// right shift; ids beyond the table saturate (tanh -> +-1, sig -> 1 or 0);
// otherwise y = (slope * |x| >> 12) + offset, and the sign is fixed up by
// symmetry (tanh is odd, sig satisfies sig(-x) = 1 - sig(x)). All arithmetic
// is integer and matches the simulator's activation instructions bit for bit.

namespace rvnn::activation {

enum class PlaFunc { kTanh, kSig };

struct PlaTable {
  PlaFunc func = PlaFunc::kTanh;
  double range_bound = 4.0;
  int m_count = 32;
  int n_log2 = 9;  // log2 of interval size in raw q3.12 units
  std::vector<int16_t> slopes;   // q3.12
  std::vector<int16_t> offsets;  // q3.12
};

// Builds a table; range_bound * 4096 / m_count must be a power of two and
// m_count itself a power of two (throws std::invalid_argument otherwise).
PlaTable build_table(PlaFunc func, double range_bound = 4.0, int m_count = 32);

// Hardwired tables used by the simulator's activation instructions.
const PlaTable& default_tanh_table();
const PlaTable& default_sig_table();

int16_t pla_eval(const PlaTable& table, int16_t x);

// Double-precision references the tables approximate.
double ref_eval(PlaFunc func, double x);

struct SweepRow {
  PlaFunc func;
  double range_bound;
  int m_count;
  double mse;          // mean squared error over all 65536 q3.12 inputs
  double max_abs_err;  // worst |pla - ref| over the same domain
};

// Exhaustive accuracy measurement for every (range, m_count) combination.
std::vector<SweepRow> error_sweep(PlaFunc func,
                                  const std::vector<double>& range_bounds,
                                  const std::vector<int>& m_counts);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

}  // namespace rvnn::activation
