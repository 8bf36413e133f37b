#include "rvnn/isa.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rvnn::isa {

namespace {

// Indexed by Op; order must match the enum.
constexpr std::array<OpInfo, kOpCount> kOpTable = {{
    {"add", OpFormat::kRdRs1Rs2, false, false},
    {"addi", OpFormat::kRdRs1Imm, false, false},
    {"sub", OpFormat::kRdRs1Rs2, false, false},
    {"lui", OpFormat::kRdImm20, false, false},
    {"and", OpFormat::kRdRs1Rs2, false, false},
    {"or", OpFormat::kRdRs1Rs2, false, false},
    {"xor", OpFormat::kRdRs1Rs2, false, false},
    {"sll", OpFormat::kRdRs1Rs2, false, false},
    {"slli", OpFormat::kRdRs1Imm, false, false},
    {"srl", OpFormat::kRdRs1Rs2, false, false},
    {"srli", OpFormat::kRdRs1Imm, false, false},
    {"sra", OpFormat::kRdRs1Rs2, false, false},
    {"srai", OpFormat::kRdRs1Imm, false, false},
    {"slt", OpFormat::kRdRs1Rs2, false, false},
    {"sltu", OpFormat::kRdRs1Rs2, false, false},
    {"lw", OpFormat::kRdMem, true, false},
    {"lh", OpFormat::kRdMem, true, false},
    {"lb", OpFormat::kRdMem, true, false},
    {"sw", OpFormat::kStoreMem, false, false},
    {"sh", OpFormat::kStoreMem, false, false},
    {"beq", OpFormat::kBranch, false, false},
    {"bne", OpFormat::kBranch, false, false},
    {"blt", OpFormat::kBranch, false, false},
    {"bge", OpFormat::kBranch, false, false},
    {"bltu", OpFormat::kBranch, false, false},
    {"bgeu", OpFormat::kBranch, false, false},
    {"jal", OpFormat::kJal, false, false},
    {"jalr", OpFormat::kJalr, false, false},
    {"mul", OpFormat::kRdRs1Rs2, false, false},
    {"mac", OpFormat::kRdRs1Rs2, false, true},
    {"lw!", OpFormat::kRdMem, true, false},
    {"lh!", OpFormat::kRdMem, true, false},
    {"sw!", OpFormat::kStoreMem, false, false},
    {"sh!", OpFormat::kStoreMem, false, false},
    {"lp.setup", OpFormat::kLpSetup, false, false},
    {"lp.setupi", OpFormat::kLpSetupi, false, false},
    {"pv.sdotsp.h", OpFormat::kRdRs1Rs2, false, true},
    {"pv.add.h", OpFormat::kRdRs1Rs2, false, false},
    {"pv.mul.h", OpFormat::kRdRs1Rs2, false, false},
    {"pl.tanh", OpFormat::kRdRs1, false, false},
    {"pl.sig", OpFormat::kRdRs1, false, false},
    {"pl.sdotsp.h.0", OpFormat::kRdRs1Rs2, false, true},
    {"pl.sdotsp.h.1", OpFormat::kRdRs1Rs2, false, true},
    {"halt", OpFormat::kNone, false, false},
}};

Op postinc_variant(Op op, int line) {
  switch (op) {
    case Op::kLw: return Op::kLwPi;
    case Op::kLh: return Op::kLhPi;
    case Op::kSw: return Op::kSwPi;
    case Op::kSh: return Op::kShPi;
    case Op::kPlSdotspH0:
    case Op::kPlSdotspH1: return op;  // increment is implied
    default: throw AsmError(line, "post-increment not supported for this mnemonic");
  }
}

struct Token {
  std::string text;
};

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Splits an operand list on commas that are not inside parentheses.
std::vector<std::string> split_operands(const std::string& s) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      out.push_back(strip(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  std::string last = strip(cur);
  if (!last.empty()) out.push_back(last);
  return out;
}

class Parser {
 public:
  explicit Parser(const std::string& source) : source_(source) {}

  Program run() {
    first_pass();
    second_pass();
    return std::move(prog_);
  }

 private:
  struct Line {
    int number;
    std::string text;  // label/comment free
  };

  void first_pass() {
    std::istringstream in(source_);
    std::string raw;
    int number = 0;
    uint32_t index = 0;
    bool in_data = false;
    while (std::getline(in, raw)) {
      ++number;
      if (auto pos = raw.find("//"); pos != std::string::npos) raw.erase(pos);
      std::string line = strip(raw);
      while (true) {  // labels, possibly followed by an instruction
        size_t colon = line.find(':');
        if (colon == std::string::npos) break;
        std::string name = strip(line.substr(0, colon));
        if (name.empty() || !is_identifier(name))
          throw AsmError(number, "malformed label '" + name + "'");
        if (prog_.labels.count(name))
          throw AsmError(number, "duplicate label '" + name + "'");
        prog_.labels[name] = index;
        line = strip(line.substr(colon + 1));
      }
      if (line.empty()) continue;
      if (line[0] == '.') {
        std::string dir = line.substr(0, line.find_first_of(" \t"));
        if (dir == ".data") in_data = true;
        else if (dir == ".text") in_data = false;
        lines_.push_back({number, line});
        continue;
      }
      if (!in_data) ++index;
      lines_.push_back({number, line});
    }
  }

  void second_pass() {
    index_ = 0;
    in_data_ = false;
    for (const auto& line : lines_) parse_line(line);
    // late validation: every hardware-loop body must lie inside the text
    for (size_t i = 0; i < prog_.text.size(); ++i) {
      const Instr& ins = prog_.text[i];
      if (ins.op != Op::kLpSetup && ins.op != Op::kLpSetupi) continue;
      if (ins.imm2 <= 0 || ins.imm2 % 4 != 0)
        throw AsmError(0, "hardware-loop end offset must be a positive multiple of 4");
      if (i + static_cast<size_t>(ins.imm2) / 4 >= prog_.text.size())
        throw AsmError(0, "hardware-loop body extends past end of program");
    }
  }

  void parse_line(const Line& line) {
    if (line.text[0] == '.') {
      parse_directive(line);
      return;
    }
    if (in_data_) throw AsmError(line.number, "instruction inside data section");
    size_t sp = line.text.find_first_of(" \t");
    std::string mnem = line.text.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : strip(line.text.substr(sp));
    Op op;
    try {
      op = op_from_name(mnem);
    } catch (const std::exception&) {
      throw AsmError(line.number, "unknown mnemonic '" + mnem + "'");
    }
    Instr ins;
    ins.op = op;
    auto ops = split_operands(rest);
    const OpInfo& info = op_info(op);
    auto want = [&](size_t n) {
      if (ops.size() != n)
        throw AsmError(line.number, "expected " + std::to_string(n) +
                                        " operands for '" + mnem + "'");
    };
    switch (info.format) {
      case OpFormat::kNone:
        want(0);
        break;
      case OpFormat::kRdRs1Rs2:
        want(3);
        ins.rd = reg(ops[0], line.number);
        ins.rs1 = reg(ops[1], line.number);
        ins.rs2 = reg(ops[2], line.number);
        break;
      case OpFormat::kRdRs1Imm:
        want(3);
        ins.rd = reg(ops[0], line.number);
        ins.rs1 = reg(ops[1], line.number);
        ins.imm = imm(ops[2], line.number);
        break;
      case OpFormat::kRdImm20:
        want(2);
        ins.rd = reg(ops[0], line.number);
        ins.imm = imm(ops[1], line.number);
        break;
      case OpFormat::kRdMem: {
        want(2);
        ins.rd = reg(ops[0], line.number);
        bool post_inc = false;
        parse_mem(ops[1], line.number, ins.imm, ins.rs1, post_inc);
        if (post_inc) ins.op = postinc_variant(op, line.number);
        break;
      }
      case OpFormat::kStoreMem: {
        want(2);
        ins.rs2 = reg(ops[0], line.number);
        bool post_inc = false;
        parse_mem(ops[1], line.number, ins.imm, ins.rs1, post_inc);
        if (post_inc) ins.op = postinc_variant(op, line.number);
        break;
      }
      case OpFormat::kRdRs1:
        want(2);
        ins.rd = reg(ops[0], line.number);
        ins.rs1 = reg(ops[1], line.number);
        break;
      case OpFormat::kBranch:
        want(3);
        ins.rs1 = reg(ops[0], line.number);
        ins.rs2 = reg(ops[1], line.number);
        ins.imm = target_offset(ops[2], line.number);
        break;
      case OpFormat::kJal:
        want(2);
        ins.rd = reg(ops[0], line.number);
        ins.imm = target_offset(ops[1], line.number);
        break;
      case OpFormat::kJalr:
        want(3);
        ins.rd = reg(ops[0], line.number);
        ins.rs1 = reg(ops[1], line.number);
        ins.imm = imm(ops[2], line.number);
        break;
      case OpFormat::kLpSetup:
        want(3);
        ins.imm = imm(ops[0], line.number);  // loop id
        ins.rs1 = reg(ops[1], line.number);
        ins.imm2 = imm(ops[2], line.number);
        check_loop_id(ins.imm, line.number);
        break;
      case OpFormat::kLpSetupi:
        want(3);
        ins.rd = static_cast<uint8_t>(imm(ops[0], line.number));  // loop id
        check_loop_id(ins.rd, line.number);
        ins.imm = imm(ops[1], line.number);  // iteration count
        ins.imm2 = imm(ops[2], line.number);
        break;
    }
    if (info.format == OpFormat::kLpSetup) {
      ins.rd = static_cast<uint8_t>(ins.imm);  // loop id lives in rd
      ins.imm = 0;
    }
    prog_.text.push_back(ins);
    ++index_;
  }

  void parse_directive(const Line& line) {
    size_t sp = line.text.find_first_of(" \t");
    std::string dir = line.text.substr(0, sp);
    std::string rest = sp == std::string::npos ? "" : strip(line.text.substr(sp));
    if (dir == ".alias") {
      // `.alias NAME xN`; whitespace or a comma may separate the operands
      std::vector<std::string> ops;
      std::string cur;
      for (char c : rest) {
        if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
          if (!cur.empty()) ops.push_back(std::move(cur)), cur.clear();
        } else {
          cur += c;
        }
      }
      if (!cur.empty()) ops.push_back(std::move(cur));
      if (ops.size() != 2)
        throw AsmError(line.number, ".alias needs a name and a register");
      if (!is_identifier(ops[0]))
        throw AsmError(line.number, "malformed alias name '" + ops[0] + "'");
      aliases_[ops[0]] = reg(ops[1], line.number);
    } else if (dir == ".text") {
      in_data_ = false;
    } else if (dir == ".data") {
      in_data_ = true;
      uint32_t base = static_cast<uint32_t>(imm(rest, line.number));
      prog_.data.push_back({base, {}});
    } else if (dir == ".word" || dir == ".half" || dir == ".byte") {
      if (!in_data_ || prog_.data.empty())
        throw AsmError(line.number, dir + " outside a .data section");
      auto& bytes = prog_.data.back().bytes;
      for (const auto& v : split_operands(rest)) {
        auto value = static_cast<uint32_t>(imm(v, line.number));
        int n = dir == ".word" ? 4 : dir == ".half" ? 2 : 1;
        for (int b = 0; b < n; ++b) bytes.push_back((value >> (8 * b)) & 0xFF);
      }
    } else {
      throw AsmError(line.number, "unknown directive '" + dir + "'");
    }
  }

  static bool is_identifier(const std::string& s) {
    if (s.empty() || (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_' && s[0] != '.'))
      return false;
    for (char c : s)
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') return false;
    return true;
  }

  uint8_t reg(const std::string& name, int line) const {
    if (auto it = aliases_.find(name); it != aliases_.end()) return it->second;
    if (name.size() >= 2 && name[0] == 'x') {
      int v = 0;
      auto [p, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), v);
      if (ec == std::errc() && p == name.data() + name.size() && v >= 0 && v < 32)
        return static_cast<uint8_t>(v);
    }
    throw AsmError(line, "bad register '" + name + "'");
  }

  static int32_t imm(const std::string& s, int line) {
    std::string t = strip(s);
    if (t.empty()) throw AsmError(line, "missing immediate");
    bool negative = t[0] == '-';
    size_t pos = negative || t[0] == '+' ? 1 : 0;
    int base = 10;
    if (t.size() > pos + 1 && t[pos] == '0' && (t[pos + 1] == 'x' || t[pos + 1] == 'X')) {
      base = 16;
      pos += 2;
    }
    int64_t v = 0;
    auto [p, ec] = std::from_chars(t.data() + pos, t.data() + t.size(), v, base);
    if (ec != std::errc() || p != t.data() + t.size())
      throw AsmError(line, "bad immediate '" + s + "'");
    return static_cast<int32_t>(negative ? -v : v);
  }

  void parse_mem(const std::string& s, int line, int32_t& off, uint8_t& base,
                 bool& post_inc) const {
    size_t open = s.find('(');
    size_t close = s.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open)
      throw AsmError(line, "malformed memory operand '" + s + "'");
    off = imm(s.substr(0, open), line);
    std::string r = strip(s.substr(open + 1, close - open - 1));
    post_inc = !r.empty() && r.back() == '!';
    if (post_inc) r = strip(r.substr(0, r.size() - 1));
    base = reg(r, line);
  }

  // Branch/jump target: a label or a numeric byte offset.
  int32_t target_offset(const std::string& s, int line) const {
    if (auto it = prog_.labels.find(s); it != prog_.labels.end())
      return (static_cast<int32_t>(it->second) - static_cast<int32_t>(index_)) * 4;
    if (is_identifier(s)) throw AsmError(line, "unresolved label '" + s + "'");
    int32_t off = imm(s, line);
    if (off % 4 != 0) throw AsmError(line, "branch offset must be a multiple of 4");
    return off;
  }

  static void check_loop_id(int32_t id, int line) {
    if (id != 0 && id != 1) throw AsmError(line, "hardware loop id must be 0 or 1");
  }

  const std::string& source_;
  std::vector<Line> lines_;
  Program prog_;
  std::map<std::string, uint8_t> aliases_;
  uint32_t index_ = 0;
  bool in_data_ = false;
};

std::string reg_name(uint8_t r) { return "x" + std::to_string(r); }

}  // namespace

const OpInfo& op_info(Op op) { return kOpTable[static_cast<size_t>(op)]; }

Op op_from_name(const std::string& name) {
  for (int i = 0; i < kOpCount; ++i)
    if (name == kOpTable[i].name) return static_cast<Op>(i);
  throw std::invalid_argument("unknown mnemonic '" + name + "'");
}

Program assemble(const std::string& source) { return Parser(source).run(); }

std::string format_instr(const Instr& i) {
  const OpInfo& info = op_info(i.op);
  std::string name = info.name;
  bool post_inc = false;
  if (name.back() == '!') {  // printed as lw rd, imm(rs1!)
    name.pop_back();
    post_inc = true;
  }
  auto mem = [&](int32_t off, uint8_t base) {
    return std::to_string(off) + "(" + reg_name(base) + (post_inc ? "!)" : ")");
  };
  switch (info.format) {
    case OpFormat::kNone: return name;
    case OpFormat::kRdRs1Rs2:
      return name + " " + reg_name(i.rd) + ", " + reg_name(i.rs1) + ", " + reg_name(i.rs2);
    case OpFormat::kRdRs1Imm:
      return name + " " + reg_name(i.rd) + ", " + reg_name(i.rs1) + ", " + std::to_string(i.imm);
    case OpFormat::kRdImm20:
      return name + " " + reg_name(i.rd) + ", " + std::to_string(i.imm);
    case OpFormat::kRdMem:
      return name + " " + reg_name(i.rd) + ", " + mem(i.imm, i.rs1);
    case OpFormat::kStoreMem:
      return name + " " + reg_name(i.rs2) + ", " + mem(i.imm, i.rs1);
    case OpFormat::kBranch:
      return name + " " + reg_name(i.rs1) + ", " + reg_name(i.rs2) + ", " + std::to_string(i.imm);
    case OpFormat::kJal:
      return name + " " + reg_name(i.rd) + ", " + std::to_string(i.imm);
    case OpFormat::kJalr:
      return name + " " + reg_name(i.rd) + ", " + reg_name(i.rs1) + ", " + std::to_string(i.imm);
    case OpFormat::kRdRs1:
      return name + " " + reg_name(i.rd) + ", " + reg_name(i.rs1);
    case OpFormat::kLpSetup:
      return name + " " + std::to_string(i.rd) + ", " + reg_name(i.rs1) + ", " + std::to_string(i.imm2);
    case OpFormat::kLpSetupi:
      return name + " " + std::to_string(i.rd) + ", " + std::to_string(i.imm) + ", " + std::to_string(i.imm2);
  }
  return name;
}

std::string disassemble(const Program& p) {
  std::string out;
  for (const auto& i : p.text) out += format_instr(i) + "\n";
  for (const auto& seg : p.data) {
    out += ".data " + std::to_string(seg.base) + "\n";
    if (seg.bytes.size() % 2 == 0) {
      for (size_t k = 0; k < seg.bytes.size(); k += 2) {
        unsigned v = seg.bytes[k] | (unsigned{seg.bytes[k + 1]} << 8);
        out += ".half " + std::to_string(v) + "\n";
      }
    } else {
      for (uint8_t b : seg.bytes) out += ".byte " + std::to_string(b) + "\n";
    }
  }
  return out;
}

nlohmann::json program_to_json(const Program& p) {
  nlohmann::json j;
  j["format"] = "rvnn-program";
  j["version"] = 1;
  auto& text = j["text"] = nlohmann::json::array();
  for (const auto& i : p.text)
    text.push_back({op_info(i.op).name, i.rd, i.rs1, i.rs2, i.imm, i.imm2});
  auto& data = j["data"] = nlohmann::json::array();
  for (const auto& seg : p.data) {
    static const char* hex = "0123456789abcdef";
    std::string s;
    s.reserve(seg.bytes.size() * 2);
    for (uint8_t b : seg.bytes) {
      s += hex[b >> 4];
      s += hex[b & 0xF];
    }
    data.push_back({{"base", seg.base}, {"bytes", s}});
  }
  auto& labels = j["labels"] = nlohmann::json::object();
  for (const auto& [name, idx] : p.labels) labels[name] = idx;
  return j;
}

Program program_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "rvnn-program" || j.value("version", 0) != 1)
    throw std::invalid_argument("not a rvnn-program v1 document");
  Program p;
  for (const auto& e : j.at("text")) {
    Instr i;
    i.op = op_from_name(e.at(0).get<std::string>());
    i.rd = e.at(1).get<uint8_t>();
    i.rs1 = e.at(2).get<uint8_t>();
    i.rs2 = e.at(3).get<uint8_t>();
    i.imm = e.at(4).get<int32_t>();
    i.imm2 = e.at(5).get<int32_t>();
    p.text.push_back(i);
  }
  for (const auto& e : j.value("data", nlohmann::json::array())) {
    DataSegment seg;
    seg.base = e.at("base").get<uint32_t>();
    const std::string& s = e.at("bytes").get_ref<const std::string&>();
    if (s.size() % 2) throw std::invalid_argument("odd hex byte string");
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      throw std::invalid_argument("bad hex digit in data bytes");
    };
    for (size_t k = 0; k < s.size(); k += 2)
      seg.bytes.push_back(static_cast<uint8_t>(nibble(s[k]) * 16 + nibble(s[k + 1])));
    p.data.push_back(std::move(seg));
  }
  const nlohmann::json labels = j.value("labels", nlohmann::json::object());
  for (auto it = labels.begin(); it != labels.end(); ++it)
    p.labels[it.key()] = it.value().get<uint32_t>();
  return p;
}

}  // namespace rvnn::isa
