#include "rvnn/sim.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "rvnn/activation.hpp"
#include "rvnn/fixp.hpp"

namespace rvnn::sim {

using isa::Instr;
using isa::Op;

const std::vector<uint8_t>* Memory::page(uint32_t addr) const {
  auto it = pages_.find(addr >> kPageBits);
  return it == pages_.end() ? nullptr : &it->second;
}

std::vector<uint8_t>& Memory::page_mut(uint32_t addr) {
  auto& p = pages_[addr >> kPageBits];
  if (p.empty()) p.resize(1u << kPageBits, 0);
  return p;
}

uint8_t Memory::read8(uint32_t addr) const {
  const auto* p = page(addr);
  return p ? (*p)[addr & ((1u << kPageBits) - 1)] : 0;
}

void Memory::write8(uint32_t addr, uint8_t v) {
  page_mut(addr)[addr & ((1u << kPageBits) - 1)] = v;
}

uint16_t Memory::read16(uint32_t addr) const {
  return static_cast<uint16_t>(read8(addr) | (read8(addr + 1) << 8));
}

uint32_t Memory::read32(uint32_t addr) const {
  return read16(addr) | (static_cast<uint32_t>(read16(addr + 2)) << 16);
}

void Memory::write16(uint32_t addr, uint16_t v) {
  write8(addr, v & 0xFF);
  write8(addr + 1, v >> 8);
}

void Memory::write32(uint32_t addr, uint32_t v) {
  write16(addr, v & 0xFFFF);
  write16(addr + 2, static_cast<uint16_t>(v >> 16));
}

void CycleStats::merge(const CycleStats& o) {
  for (int i = 0; i < isa::kOpCount; ++i) {
    by_op[i].instrs += o.by_op[i].instrs;
    by_op[i].cycles += o.by_op[i].cycles;
  }
  instrs += o.instrs;
  cycles += o.cycles;
  load_use_stalls += o.load_use_stalls;
  branch_taken_stalls += o.branch_taken_stalls;
}

nlohmann::json CycleStats::to_json() const {
  nlohmann::json by = nlohmann::json::object();
  for (int i = 0; i < isa::kOpCount; ++i) {
    if (by_op[i].instrs == 0) continue;
    by[isa::op_info(static_cast<Op>(i)).name] = {{"instrs", by_op[i].instrs},
                                                 {"cycles", by_op[i].cycles}};
  }
  return {{"instrs", instrs},
          {"cycles", cycles},
          {"load_use_stalls", load_use_stalls},
          {"branch_taken_stalls", branch_taken_stalls},
          {"by_op", by}};
}

std::vector<std::pair<Op, OpCount>> CycleStats::ranked() const {
  std::vector<std::pair<Op, OpCount>> v;
  for (int i = 0; i < isa::kOpCount; ++i)
    if (by_op[i].instrs) v.emplace_back(static_cast<Op>(i), by_op[i]);
  std::stable_sort(v.begin(), v.end(),
                   [](const auto& a, const auto& b) { return a.second.cycles > b.second.cycles; });
  return v;
}

void load_data(Memory& mem, const isa::Program& prog) {
  for (const auto& seg : prog.data)
    for (size_t i = 0; i < seg.bytes.size(); ++i)
      mem.write8(seg.base + static_cast<uint32_t>(i), seg.bytes[i]);
}

Core::Core(const isa::Program& prog, SimConfig cfg) : prog_(prog), cfg_(cfg) {
  load_data(mem_, prog);
}

bool Core::reads_reg(const Instr& ins, uint8_t reg) const {
  if (reg == 0) return false;
  const isa::OpInfo& info = isa::op_info(ins.op);
  switch (info.format) {
    case isa::OpFormat::kNone:
    case isa::OpFormat::kRdImm20:
      return false;
    case isa::OpFormat::kRdRs1Rs2:
      return ins.rs1 == reg || ins.rs2 == reg || (info.reads_rd && ins.rd == reg);
    case isa::OpFormat::kRdRs1Imm:
    case isa::OpFormat::kRdMem:
    case isa::OpFormat::kJalr:
    case isa::OpFormat::kRdRs1:
    case isa::OpFormat::kLpSetup:
      return ins.rs1 == reg;
    case isa::OpFormat::kStoreMem:
    case isa::OpFormat::kBranch:
      return ins.rs1 == reg || ins.rs2 == reg;
    case isa::OpFormat::kJal:
    case isa::OpFormat::kLpSetupi:
      return false;
  }
  return false;
}

void Core::take_branch(int32_t byte_offset) {
  if (byte_offset % 4 != 0)
    throw SimTrap("misaligned branch target", pc_, cycles_);
  int64_t target = static_cast<int64_t>(pc_) + byte_offset / 4;
  if (target < 0 || target > static_cast<int64_t>(prog_.text.size()))
    throw SimTrap("branch target outside program", pc_, cycles_);
  pc_ = static_cast<uint32_t>(target);
  branch_redirect_ = true;
}

bool Core::step() {
  if (halted_) return false;
  if (pc_ >= prog_.text.size())
    throw SimTrap("pc ran off the end of the program", pc_, cycles_);
  const Instr& ins = prog_.text[pc_];

  // Stall accounting happens before execution so `cycles_` is the cycle at
  // which the instruction starts.
  if (pending_load_reg_ >= 0) {
    if (reads_reg(ins, static_cast<uint8_t>(pending_load_reg_))) {
      cycles_ += cfg_.load_use_stall;
      stats_.load_use_stalls += cfg_.load_use_stall;
      stats_.by_op[static_cast<size_t>(pending_load_op_)].cycles += cfg_.load_use_stall;
    }
    pending_load_reg_ = -1;
  }
  if (ins.op == Op::kPlSdotspH0 || ins.op == Op::kPlSdotspH1) {
    int slot = ins.op == Op::kPlSdotspH0 ? 0 : 1;
    if (spr_ready_[slot] > cycles_) {
      uint64_t wait = spr_ready_[slot] - cycles_;
      cycles_ += wait;
      stats_.load_use_stalls += wait;
      stats_.by_op[static_cast<size_t>(ins.op)].cycles += wait;
    }
  }

  uint32_t writeback = 0;
  uint32_t start_pc = pc_;
  uint64_t start_cycle = cycles_;
  branch_redirect_ = false;
  exec(ins, &writeback);

  auto& oc = stats_.by_op[static_cast<size_t>(ins.op)];
  oc.instrs += 1;
  oc.cycles += 1;
  stats_.instrs += 1;
  cycles_ += 1;

  if (branch_redirect_) {
    cycles_ += cfg_.branch_taken_penalty;
    stats_.branch_taken_stalls += cfg_.branch_taken_penalty;
    oc.cycles += cfg_.branch_taken_penalty;
  } else if (!halted_) {
    // Sequential flow; a retiring hardware-loop body end wraps for free.
    uint32_t next = start_pc + 1;
    for (int l = 0; l < 2; ++l) {
      if (loop_[l].count > 0 && start_pc == loop_[l].end) {
        if (loop_[l].count > 1) {
          --loop_[l].count;
          next = loop_[l].start;
        } else {
          loop_[l].count = 0;
        }
        break;  // loop 0 is innermost
      }
    }
    pc_ = next;
  }

  const isa::OpInfo& info = isa::op_info(ins.op);
  if (info.is_load && ins.rd != 0) {
    pending_load_reg_ = ins.rd;
    pending_load_op_ = ins.op;
  }

  if (trace) trace({start_cycle, start_pc, ins, writeback});
  stats_.cycles = cycles_;
  return !halted_;
}

void Core::run() {
  while (step()) {
    if (cycles_ > cfg_.max_cycles)
      throw SimTrap("cycle limit exceeded", pc_, cycles_);
  }
}

void Core::exec(const Instr& ins, uint32_t* writeback) {
  auto rd = [&](uint32_t v) {
    if (ins.rd != 0) x_[ins.rd] = v;
    *writeback = ins.rd != 0 ? v : 0;
  };
  auto rs1 = [&] { return x_[ins.rs1]; };
  auto rs2 = [&] { return x_[ins.rs2]; };
  auto srs1 = [&] { return static_cast<int32_t>(x_[ins.rs1]); };
  auto srs2 = [&] { return static_cast<int32_t>(x_[ins.rs2]); };
  auto check_align = [&](uint32_t addr, uint32_t sz) {
    if (addr % sz != 0)
      throw SimTrap("misaligned memory access at address " + std::to_string(addr),
                    pc_, cycles_);
  };

  switch (ins.op) {
    case Op::kAdd: rd(rs1() + rs2()); break;
    case Op::kAddi: rd(rs1() + static_cast<uint32_t>(ins.imm)); break;
    case Op::kSub: rd(rs1() - rs2()); break;
    case Op::kLui: rd(static_cast<uint32_t>(ins.imm) << 12); break;
    case Op::kAnd: rd(rs1() & rs2()); break;
    case Op::kOr: rd(rs1() | rs2()); break;
    case Op::kXor: rd(rs1() ^ rs2()); break;
    case Op::kSll: rd(rs1() << (rs2() & 31)); break;
    case Op::kSlli: rd(rs1() << (ins.imm & 31)); break;
    case Op::kSrl: rd(rs1() >> (rs2() & 31)); break;
    case Op::kSrli: rd(rs1() >> (ins.imm & 31)); break;
    case Op::kSra: rd(static_cast<uint32_t>(srs1() >> (rs2() & 31))); break;
    case Op::kSrai: rd(static_cast<uint32_t>(srs1() >> (ins.imm & 31))); break;
    case Op::kSlt: rd(srs1() < srs2() ? 1 : 0); break;
    case Op::kSltu: rd(rs1() < rs2() ? 1 : 0); break;
    case Op::kMul: rd(rs1() * rs2()); break;
    case Op::kMac: rd(x_[ins.rd] + rs1() * rs2()); break;

    case Op::kLw: {
      uint32_t a = rs1() + static_cast<uint32_t>(ins.imm);
      check_align(a, 4);
      rd(mem_.read32(a));
      break;
    }
    case Op::kLh: {
      uint32_t a = rs1() + static_cast<uint32_t>(ins.imm);
      check_align(a, 2);
      rd(static_cast<uint32_t>(static_cast<int32_t>(mem_.read_i16(a))));
      break;
    }
    case Op::kLb: {
      uint32_t a = rs1() + static_cast<uint32_t>(ins.imm);
      rd(static_cast<uint32_t>(static_cast<int32_t>(static_cast<int8_t>(mem_.read8(a)))));
      break;
    }
    case Op::kSw: {
      uint32_t a = rs1() + static_cast<uint32_t>(ins.imm);
      check_align(a, 4);
      mem_.write32(a, rs2());
      break;
    }
    case Op::kSh: {
      uint32_t a = rs1() + static_cast<uint32_t>(ins.imm);
      check_align(a, 2);
      mem_.write16(a, static_cast<uint16_t>(rs2()));
      break;
    }
    case Op::kLwPi: {
      uint32_t a = rs1() + static_cast<uint32_t>(ins.imm);
      check_align(a, 4);
      uint32_t v = mem_.read32(a);
      x_[ins.rs1] += 4;  // fixed word stride
      rd(v);
      break;
    }
    case Op::kLhPi: {
      uint32_t a = rs1() + static_cast<uint32_t>(ins.imm);
      check_align(a, 2);
      int32_t v = mem_.read_i16(a);
      x_[ins.rs1] += 2;
      rd(static_cast<uint32_t>(v));
      break;
    }
    case Op::kSwPi: {
      uint32_t a = rs1() + static_cast<uint32_t>(ins.imm);
      check_align(a, 4);
      mem_.write32(a, rs2());
      x_[ins.rs1] += 4;
      break;
    }
    case Op::kShPi: {
      uint32_t a = rs1() + static_cast<uint32_t>(ins.imm);
      check_align(a, 2);
      mem_.write16(a, static_cast<uint16_t>(rs2()));
      x_[ins.rs1] += 2;
      break;
    }

    case Op::kBeq: if (rs1() == rs2()) take_branch(ins.imm); break;
    case Op::kBne: if (rs1() != rs2()) take_branch(ins.imm); break;
    case Op::kBlt: if (srs1() < srs2()) take_branch(ins.imm); break;
    case Op::kBge: if (srs1() >= srs2()) take_branch(ins.imm); break;
    case Op::kBltu: if (rs1() < rs2()) take_branch(ins.imm); break;
    case Op::kBgeu: if (rs1() >= rs2()) take_branch(ins.imm); break;
    case Op::kJal:
      rd((pc_ + 1) * 4);  // byte address of the next instruction
      take_branch(ins.imm);
      break;
    case Op::kJalr: {
      uint32_t target = rs1() + static_cast<uint32_t>(ins.imm);
      rd((pc_ + 1) * 4);
      if (target % 4 != 0) throw SimTrap("misaligned jalr target", pc_, cycles_);
      take_branch(static_cast<int32_t>(target) - static_cast<int32_t>(pc_ * 4));
      break;
    }

    case Op::kLpSetup:
    case Op::kLpSetupi: {
      int l = ins.rd;
      uint32_t count = ins.op == Op::kLpSetup ? rs1() : static_cast<uint32_t>(ins.imm);
      if (count == 0) throw SimTrap("hardware loop with zero count", pc_, cycles_);
      loop_[l].start = pc_ + 1;
      loop_[l].end = pc_ + static_cast<uint32_t>(ins.imm2) / 4;
      loop_[l].count = count;
      if (loop_[l].end >= prog_.text.size())
        throw SimTrap("hardware loop body extends past program end", pc_, cycles_);
      if (loop_[l].end < loop_[l].start)
        throw SimTrap("hardware loop end precedes start", pc_, cycles_);
      // with both loops active the inner one must nest inside the outer
      int o = 1 - l;
      if (loop_[o].count > 0) {
        bool l_is_inner = loop_[l].start >= loop_[o].start && loop_[l].end < loop_[o].end;
        bool l_is_outer = loop_[o].start > loop_[l].start && loop_[o].end <= loop_[l].end;
        if (!l_is_inner && !l_is_outer)
          throw SimTrap("hardware loops must nest", pc_, cycles_);
      }
      break;
    }

    case Op::kPvSdotspH:
      rd(static_cast<uint32_t>(fixp::sdotp(rs1(), rs2(), static_cast<int32_t>(x_[ins.rd]))));
      break;
    case Op::kPvAddH: {
      uint32_t a = rs1(), b = rs2();
      uint16_t lo = static_cast<uint16_t>((a & 0xFFFF) + (b & 0xFFFF));
      uint16_t hi = static_cast<uint16_t>((a >> 16) + (b >> 16));
      rd(fixp::pack_pair(static_cast<int16_t>(lo), static_cast<int16_t>(hi)));
      break;
    }
    case Op::kPvMulH: {
      uint32_t a = rs1(), b = rs2();
      int16_t lo = fixp::requantize(fixp::q_mul(fixp::pair_lo(a), fixp::pair_lo(b)));
      int16_t hi = fixp::requantize(fixp::q_mul(fixp::pair_hi(a), fixp::pair_hi(b)));
      rd(fixp::pack_pair(lo, hi));
      break;
    }

    case Op::kPlTanh:
      rd(static_cast<uint32_t>(static_cast<int32_t>(
          activation::pla_eval(activation::default_tanh_table(),
                               static_cast<int16_t>(rs1() & 0xFFFF)))));
      break;
    case Op::kPlSig:
      rd(static_cast<uint32_t>(static_cast<int32_t>(
          activation::pla_eval(activation::default_sig_table(),
                               static_cast<int16_t>(rs1() & 0xFFFF)))));
      break;

    case Op::kPlSdotspH0:
    case Op::kPlSdotspH1: {
      int slot = ins.op == Op::kPlSdotspH0 ? 0 : 1;
      // compute with the current stream word, then fetch the next one
      rd(static_cast<uint32_t>(
          fixp::sdotp(spr_[slot], rs2(), static_cast<int32_t>(x_[ins.rd]))));
      uint32_t a = rs1();
      check_align(a, 4);
      spr_[slot] = mem_.read32(a);
      spr_ready_[slot] = cycles_ + static_cast<uint64_t>(cfg_.mem_latency);
      if (ins.rs1 != 0) x_[ins.rs1] += 4;
      break;
    }

    case Op::kHalt:
      halted_ = true;
      break;
    case Op::kCount:
      throw SimTrap("invalid opcode", pc_, cycles_);
  }
}

CycleStats run_program(const isa::Program& prog, SimConfig cfg) {
  Core core(prog, cfg);
  core.run();
  return core.stats();
}

}  // namespace rvnn::sim
