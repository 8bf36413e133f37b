#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

// Instruction set for the simulated core: the RV32IM subset the kernels
// need, a scalar multiply-accumulate, post-increment loads/stores, two
// zero-overhead hardware loops, packed-SIMD halfword ops, and the RNN
// extension (single-cycle PLA activations plus a merged load-and-compute
// dot-product with two stream prefetch registers).
//
// Instructions are decoded records, not binary encodings: the program
// counter is an index into the text vector and immediates are plain 32-bit
// integers. Branch/jump immediates are byte offsets relative to the
// instruction (always multiples of 4).

namespace rvnn::isa {

enum class Op : uint8_t {
  // RV32I subset + M
  kAdd, kAddi, kSub, kLui,
  kAnd, kOr, kXor,
  kSll, kSlli, kSrl, kSrli, kSra, kSrai,
  kSlt, kSltu,
  kLw, kLh, kLb, kSw, kSh,
  kBeq, kBne, kBlt, kBge, kBltu, kBgeu,
  kJal, kJalr,
  kMul, kMac,
  // post-increment memory ops: lw!/lh!/sw!/sh! bump the base register by a
  // fixed +4 (word) or +2 (half) after the access
  kLwPi, kLhPi, kSwPi, kShPi,
  // hardware loops (two nesting levels, id 0 = innermost by convention)
  kLpSetup, kLpSetupi,
  // packed SIMD on halfword pairs
  kPvSdotspH,  // rd += rs1.lo*rs2.lo + rs1.hi*rs2.hi
  kPvAddH,     // lane-wise wrapping 16-bit add
  kPvMulH,     // lane-wise q3.12 multiply: sat16((a*b) >> 12)
  // RNN extension
  kPlTanh, kPlSig,            // rd = pla(rs1.lo), single cycle
  kPlSdotspH0, kPlSdotspH1,   // rd += spr[k] . rs2; spr[k] <- mem[rs1], rs1 += 4
  kHalt,
  kCount
};

inline constexpr int kOpCount = static_cast<int>(Op::kCount);

// Operand shapes drive parsing, printing, and the read/write sets used by
// hazard tracking.
enum class OpFormat : uint8_t {
  kNone,        // halt
  kRdRs1Rs2,    // add rd, rs1, rs2
  kRdRs1Imm,    // addi rd, rs1, imm
  kRdImm20,     // lui rd, imm
  kRdMem,       // lw rd, imm(rs1)  /  lw rd, imm(rs1!)
  kStoreMem,    // sw rs2, imm(rs1) /  sw rs2, imm(rs1!)
  kBranch,      // beq rs1, rs2, offset
  kJal,         // jal rd, offset
  kJalr,        // jalr rd, rs1, imm
  kRdRs1,       // pl.tanh rd, rs1
  kLpSetup,     // lp.setup id, rs1, offset
  kLpSetupi,    // lp.setupi id, count, offset
};

struct OpInfo {
  const char* name;  // canonical mnemonic, e.g. "pl.sdotsp.h.0"
  OpFormat format;
  bool is_load;        // writes rd from memory
  bool reads_rd;       // rd is read-modify-write (mac, accumulating dots)
};

const OpInfo& op_info(Op op);
Op op_from_name(const std::string& name);  // throws on unknown mnemonic

struct Instr {
  Op op = Op::kHalt;
  uint8_t rd = 0;
  uint8_t rs1 = 0;
  uint8_t rs2 = 0;
  int32_t imm = 0;    // immediate / branch byte offset / loop count (setupi)
  int32_t imm2 = 0;   // loop end byte offset for lp.setup/lp.setupi
  bool operator==(const Instr&) const = default;
};

struct DataSegment {
  uint32_t base = 0;
  std::vector<uint8_t> bytes;
  bool operator==(const DataSegment&) const = default;
};

struct Program {
  std::vector<Instr> text;
  std::vector<DataSegment> data;
  std::map<std::string, uint32_t> labels;  // label -> instruction index
  bool operator==(const Program& o) const {
    return text == o.text && data == o.data;  // labels are advisory
  }
};

class AsmError : public std::runtime_error {
 public:
  AsmError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Two-pass assembler. Pass 1 collects labels, pass 2 resolves operands.
// Supports `label:` definitions, `//` comments, `.alias NAME xN`,
// `.text`, `.data ADDR`, `.word V[, V...]`, `.half V[, V...]`, and both
// x0..x31 and aliased register names. Branch targets may be labels or
// numeric byte offsets.
Program assemble(const std::string& source);

// Canonical text form; assemble(disassemble(p)) reproduces p exactly.
std::string disassemble(const Program& p);
std::string format_instr(const Instr& i);

nlohmann::json program_to_json(const Program& p);
Program program_from_json(const nlohmann::json& j);

}  // namespace rvnn::isa
