/*
 * Licensed to the Apache Software Foundation (ASF) under one
 * or more contributor license agreements.  See the NOTICE file
 * distributed with this work for additional information
 * regarding copyright ownership.  The ASF licenses this file
 * to you under the Apache License, Version 2.0 (the
 * "License"); you may not use this file except in compliance
 * with the License.  You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing,
 * software distributed under the License is distributed on an
 * "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
 * KIND, either express or implied.  See the License for the
 * specific language governing permissions and limitations
 * under the License.
 */

/*!
 * \file structural.cc
 * \brief Alpha-equivalence, hashing, printing and JSON serialization.
 */
#include <functional>
#include <sstream>

#include "json.hpp"

#include "metasched/ir.h"

namespace metasched {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Equality and hashing modulo loop-variable renaming
// ---------------------------------------------------------------------------

namespace {

class AlphaComparer {
 public:
  bool Stmts(const std::vector<Stmt>& a, const std::vector<Stmt>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
      if (!StmtEq(a[i], b[i])) return false;
    }
    return true;
  }

  bool ExprEq(const Expr& a, const Expr& b) {
    if (a->kind != b->kind || a->args.size() != b->args.size()) return false;
    switch (a->kind) {
      case ExprKind::kInt:
        return a->value == b->value;
      case ExprKind::kVar: {
        auto it = vmap_.find(a->name);
        if (it == vmap_.end()) return a->name == b->name;
        return it->second == b->name;
      }
      case ExprKind::kLoad:
        if (a->name != b->name) return false;
        break;
      default:
        break;
    }
    for (size_t i = 0; i < a->args.size(); ++i) {
      if (!ExprEq(a->args[i], b->args[i])) return false;
    }
    return true;
  }

 private:
  bool Exprs(const std::vector<Expr>& a, const std::vector<Expr>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
      if (!ExprEq(a[i], b[i])) return false;
    }
    return true;
  }

  bool OptEq(const std::optional<Expr>& a, const std::optional<Expr>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || ExprEq(*a, *b);
  }

  bool StmtEq(const Stmt& a, const Stmt& b) {
    if (a.node.index() != b.node.index()) return false;
    if (a.IsLoop()) {
      const Loop& x = a.AsLoop();
      const Loop& y = b.AsLoop();
      if (x.extent != y.extent || x.kind != y.kind) return false;
      auto saved = vmap_.find(x.var) == vmap_.end() ? std::nullopt
                                                     : std::optional<std::string>(vmap_[x.var]);
      vmap_[x.var] = y.var;
      bool ok = Stmts(x.body, y.body);
      if (saved) {
        vmap_[x.var] = *saved;
      } else {
        vmap_.erase(x.var);
      }
      return ok;
    }
    if (a.IsCompute()) {
      const Compute& x = a.AsCompute();
      const Compute& y = b.AsCompute();
      return x.block == y.block && x.buffer == y.buffer && Exprs(x.indices, y.indices) &&
             ExprEq(x.value, y.value) && OptEq(x.init, y.init) && OptEq(x.epilogue, y.epilogue);
    }
    const Intrinsic& x = a.AsIntrinsic();
    const Intrinsic& y = b.AsIntrinsic();
    if (x.name != y.name || x.block != y.block || x.operands.size() != y.operands.size()) {
      return false;
    }
    for (size_t i = 0; i < x.operands.size(); ++i) {
      if (x.operands[i].buffer != y.operands[i].buffer) return false;
      if (!Exprs(x.operands[i].base, y.operands[i].base)) return false;
    }
    return OptEq(x.init, y.init);
  }

  std::map<std::string, std::string> vmap_;
};

class Hasher {
 public:
  uint64_t Result() const { return h_; }

  void Mix(uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h_ ^= (v >> (i * 8)) & 0xffu;
      h_ *= 1099511628211ull;
    }
  }
  void Mix(const std::string& s) {
    Mix(static_cast<uint64_t>(s.size()));
    for (unsigned char c : s) {
      h_ ^= c;
      h_ *= 1099511628211ull;
    }
  }

  void HashExpr(const Expr& e) {
    Mix(static_cast<uint64_t>(e->kind) + 101);
    switch (e->kind) {
      case ExprKind::kInt:
        Mix(static_cast<uint64_t>(e->value));
        return;
      case ExprKind::kVar: {
        auto it = index_.find(e->name);
        if (it == index_.end()) {
          Mix(e->name);
        } else {
          Mix(static_cast<uint64_t>(it->second) + 0x5bd1e995u);
        }
        return;
      }
      case ExprKind::kLoad:
        Mix(e->name);
        break;
      default:
        break;
    }
    Mix(static_cast<uint64_t>(e->args.size()));
    for (const Expr& a : e->args) HashExpr(a);
  }

  void HashOpt(const std::optional<Expr>& e) {
    Mix(static_cast<uint64_t>(e.has_value()));
    if (e) HashExpr(*e);
  }

  void HashStmts(const std::vector<Stmt>& stmts) {
    Mix(static_cast<uint64_t>(stmts.size()));
    for (const Stmt& s : stmts) HashStmt(s);
  }

  void HashStmt(const Stmt& s) {
    Mix(static_cast<uint64_t>(s.node.index()) + 7);
    if (s.IsLoop()) {
      const Loop& l = s.AsLoop();
      Mix(static_cast<uint64_t>(l.extent));
      Mix(static_cast<uint64_t>(l.kind));
      index_[l.var] = depth_++;
      HashStmts(l.body);
      --depth_;
      index_.erase(l.var);
    } else if (s.IsCompute()) {
      const Compute& c = s.AsCompute();
      Mix(c.block);
      Mix(c.buffer);
      for (const Expr& e : c.indices) HashExpr(e);
      HashExpr(c.value);
      HashOpt(c.init);
      HashOpt(c.epilogue);
    } else {
      const Intrinsic& in = s.AsIntrinsic();
      Mix(in.name);
      Mix(in.block);
      for (const Operand& op : in.operands) {
        Mix(op.buffer);
        for (const Expr& e : op.base) HashExpr(e);
      }
      HashOpt(in.init);
    }
  }

 private:
  uint64_t h_ = 1469598103934665603ull;
  std::map<std::string, size_t> index_;
  size_t depth_ = 0;
};

}  // namespace

bool ExprEqual(const Expr& a, const Expr& b) { return AlphaComparer().ExprEq(a, b); }

bool StructuralEqual(const TensorProgram& a, const TensorProgram& b) {
  if (a.buffers != b.buffers) return false;
  return AlphaComparer().Stmts(a.root, b.root);
}

uint64_t StructuralHash(const TensorProgram& p) {
  Hasher h;
  h.Mix(static_cast<uint64_t>(p.buffers.size()));
  for (const Buffer& b : p.buffers) {
    h.Mix(b.name);
    h.Mix(static_cast<uint64_t>(b.role));
    h.Mix(static_cast<uint64_t>(b.shape.size()));
    for (int64_t s : b.shape) h.Mix(static_cast<uint64_t>(s));
  }
  h.HashStmts(p.root);
  return h.Result();
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace {

class Printer {
 public:
  explicit Printer(bool normalize) : normalize_(normalize) {}

  std::string Expr(const metasched::Expr& e) {
    switch (e->kind) {
      case ExprKind::kInt:
        return std::to_string(e->value);
      case ExprKind::kVar: {
        auto it = rename_.find(e->name);
        return it == rename_.end() ? e->name : it->second;
      }
      case ExprKind::kLoad:
        return e->name + "[" + List(e->args) + "]";
      case ExprKind::kAdd:
        return "(" + Expr(e->args[0]) + " + " + Expr(e->args[1]) + ")";
      case ExprKind::kSub:
        return "(" + Expr(e->args[0]) + " - " + Expr(e->args[1]) + ")";
      case ExprKind::kMul:
        return Expr(e->args[0]) + "*" + Expr(e->args[1]);
      case ExprKind::kFloorDiv:
        return "(" + Expr(e->args[0]) + " // " + Expr(e->args[1]) + ")";
      case ExprKind::kFloorMod:
        return "(" + Expr(e->args[0]) + " % " + Expr(e->args[1]) + ")";
      case ExprKind::kMax:
        return "max(" + Expr(e->args[0]) + ", " + Expr(e->args[1]) + ")";
      case ExprKind::kMin:
        return "min(" + Expr(e->args[0]) + ", " + Expr(e->args[1]) + ")";
      case ExprKind::kLt:
        return "(" + Expr(e->args[0]) + " < " + Expr(e->args[1]) + ")";
      case ExprKind::kSelect:
        return "select(" + Expr(e->args[0]) + ", " + Expr(e->args[1]) + ", " + Expr(e->args[2]) + ")";
    }
    return "?";
  }

  std::string List(const std::vector<metasched::Expr>& es) {
    std::string out;
    for (size_t i = 0; i < es.size(); ++i) {
      if (i) out += ", ";
      out += Expr(es[i]);
    }
    return out;
  }

  void Stmts(const std::vector<Stmt>& stmts, int indent) {
    for (const Stmt& s : stmts) StmtLine(s, indent);
  }

  void StmtLine(const Stmt& s, int indent) {
    std::string pad(static_cast<size_t>(indent) * 2, ' ');
    if (s.IsLoop()) {
      const Loop& l = s.AsLoop();
      std::string name = normalize_ ? "v" + std::to_string(counter_++) : l.var;
      rename_[l.var] = name;
      os_ << pad << "for " << name << " in range(" << l.extent << ")";
      if (l.kind != LoopKind::kSerial) os_ << " " << LoopKindName(l.kind);
      os_ << ":\n";
      Stmts(l.body, indent + 1);
      rename_.erase(l.var);
    } else if (s.IsCompute()) {
      const Compute& c = s.AsCompute();
      std::string lhs = c.buffer + "[" + List(c.indices) + "]";
      if (c.init) os_ << pad << c.block << ": init " << lhs << " = " << Expr(*c.init) << "\n";
      os_ << pad << c.block << ": " << lhs << " = " << Expr(c.value) << "\n";
      if (c.epilogue) os_ << pad << c.block << ": epilogue " << lhs << " = " << Expr(*c.epilogue) << "\n";
    } else {
      const Intrinsic& in = s.AsIntrinsic();
      os_ << pad << in.block << ": " << in.name << "(";
      for (size_t i = 0; i < in.operands.size(); ++i) {
        if (i) os_ << ", ";
        os_ << in.operands[i].buffer << "[" << List(in.operands[i].base) << "]";
      }
      os_ << ")";
      if (in.init) os_ << " init " << Expr(*in.init);
      os_ << "\n";
    }
  }

  std::string Program(const TensorProgram& p) {
    for (const Buffer& b : p.buffers) {
      os_ << "buffer " << b.name << "[";
      for (size_t i = 0; i < b.shape.size(); ++i) os_ << (i ? ", " : "") << b.shape[i];
      os_ << "] "
          << (b.role == BufferRole::kInput    ? "input"
              : b.role == BufferRole::kOutput ? "output"
                                              : "intermediate")
          << "\n";
    }
    Stmts(p.root, 0);
    return os_.str();
  }

 private:
  bool normalize_;
  int counter_ = 0;
  std::map<std::string, std::string> rename_;
  std::ostringstream os_;
};

}  // namespace

std::string ExprToString(const Expr& e) { return Printer(false).Expr(e); }

std::string PrettyPrint(const TensorProgram& p, bool normalize_vars) {
  return Printer(normalize_vars).Program(p);
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace {

const char* RoleName(BufferRole r) {
  switch (r) {
    case BufferRole::kInput: return "input";
    case BufferRole::kOutput: return "output";
    case BufferRole::kIntermediate: return "intermediate";
  }
  return "?";
}

json ExprToJson(const Expr& e) {
  switch (e->kind) {
    case ExprKind::kInt:
      return json{{"int", e->value}};
    case ExprKind::kVar:
      return json{{"var", e->name}};
    case ExprKind::kLoad: {
      json idx = json::array();
      for (const Expr& a : e->args) idx.push_back(ExprToJson(a));
      return json{{"load", {{"buffer", e->name}, {"indices", idx}}}};
    }
    default: {
      json args = json::array();
      for (const Expr& a : e->args) args.push_back(ExprToJson(a));
      return json{{ExprKindName(e->kind), args}};
    }
  }
}

json ExprsToJson(const std::vector<Expr>& es) {
  json out = json::array();
  for (const Expr& e : es) out.push_back(ExprToJson(e));
  return out;
}

json StmtToJson(const Stmt& s) {
  if (s.IsLoop()) {
    const Loop& l = s.AsLoop();
    json body = json::array();
    for (const Stmt& c : l.body) body.push_back(StmtToJson(c));
    return json{{"loop",
                 {{"var", l.var}, {"extent", l.extent}, {"kind", LoopKindName(l.kind)}, {"body", body}}}};
  }
  if (s.IsCompute()) {
    const Compute& c = s.AsCompute();
    json j = {{"block", c.block},
              {"buffer", c.buffer},
              {"indices", ExprsToJson(c.indices)},
              {"value", ExprToJson(c.value)}};
    if (c.init) j["init"] = ExprToJson(*c.init);
    if (c.epilogue) j["epilogue"] = ExprToJson(*c.epilogue);
    return json{{"compute", j}};
  }
  const Intrinsic& in = s.AsIntrinsic();
  json ops = json::array();
  for (const Operand& op : in.operands) {
    ops.push_back({{"buffer", op.buffer}, {"base", ExprsToJson(op.base)}});
  }
  json j = {{"name", in.name}, {"block", in.block}, {"operands", ops}};
  if (in.init) j["init"] = ExprToJson(*in.init);
  return json{{"intrinsic", j}};
}

class JsonReader {
 public:
  TensorProgram Program(const json& j) {
    TensorProgram p;
    Require(j.is_object(), "", "program must be an object");
    const json& bufs = Field(j, "buffers", "");
    Require(bufs.is_array(), "/buffers", "expected an array");
    for (size_t i = 0; i < bufs.size(); ++i) {
      std::string at = "/buffers/" + std::to_string(i);
      const json& b = bufs[i];
      Buffer buf;
      buf.name = Str(Field(b, "name", at), at + "/name");
      const json& shape = Field(b, "shape", at);
      Require(shape.is_array(), at + "/shape", "expected an array");
      for (const json& s : shape) buf.shape.push_back(Int(s, at + "/shape"));
      std::string role = Str(Field(b, "role", at), at + "/role");
      if (role == "input") {
        buf.role = BufferRole::kInput;
      } else if (role == "output") {
        buf.role = BufferRole::kOutput;
      } else if (role == "intermediate") {
        buf.role = BufferRole::kIntermediate;
      } else {
        Fail(at + "/role", "unknown role '" + role + "'");
      }
      p.buffers.push_back(std::move(buf));
    }
    p.root = Stmts(Field(j, "root", ""), "/root");
    return p;
  }

 private:
  [[noreturn]] void Fail(const std::string& at, const std::string& why) {
    throw Error("program parse error at " + (at.empty() ? std::string("/") : at) + ": " + why);
  }
  void Require(bool ok, const std::string& at, const std::string& why) {
    if (!ok) Fail(at, why);
  }
  const json& Field(const json& j, const char* key, const std::string& at) {
    if (!j.is_object() || !j.contains(key)) Fail(at, std::string("missing field '") + key + "'");
    return j.at(key);
  }
  std::string Str(const json& j, const std::string& at) {
    Require(j.is_string(), at, "expected a string");
    return j.get<std::string>();
  }
  int64_t Int(const json& j, const std::string& at) {
    Require(j.is_number_integer(), at, "expected an integer");
    return j.get<int64_t>();
  }

  std::vector<Stmt> Stmts(const json& j, const std::string& at) {
    Require(j.is_array(), at, "expected an array");
    std::vector<Stmt> out;
    for (size_t i = 0; i < j.size(); ++i) out.push_back(StmtOf(j[i], at + "/" + std::to_string(i)));
    return out;
  }

  Stmt StmtOf(const json& j, const std::string& at) {
    Require(j.is_object() && j.size() == 1, at, "statement must be a single-key object");
    if (j.contains("loop")) {
      const json& l = j["loop"];
      std::string a = at + "/loop";
      Loop loop;
      loop.var = Str(Field(l, "var", a), a + "/var");
      loop.extent = Int(Field(l, "extent", a), a + "/extent");
      try {
        loop.kind = LoopKindFromName(Str(Field(l, "kind", a), a + "/kind"));
      } catch (const Error& e) {
        Fail(a + "/kind", e.what());
      }
      loop.body = Stmts(Field(l, "body", a), a + "/body");
      return Stmt{std::move(loop)};
    }
    if (j.contains("compute")) {
      const json& c = j["compute"];
      std::string a = at + "/compute";
      Compute comp;
      comp.block = Str(Field(c, "block", a), a + "/block");
      comp.buffer = Str(Field(c, "buffer", a), a + "/buffer");
      comp.indices = Exprs(Field(c, "indices", a), a + "/indices");
      comp.value = ExprOf(Field(c, "value", a), a + "/value");
      if (c.contains("init")) comp.init = ExprOf(c["init"], a + "/init");
      if (c.contains("epilogue")) comp.epilogue = ExprOf(c["epilogue"], a + "/epilogue");
      return Stmt{std::move(comp)};
    }
    if (j.contains("intrinsic")) {
      const json& c = j["intrinsic"];
      std::string a = at + "/intrinsic";
      Intrinsic in;
      in.name = Str(Field(c, "name", a), a + "/name");
      in.block = Str(Field(c, "block", a), a + "/block");
      const json& ops = Field(c, "operands", a);
      Require(ops.is_array(), a + "/operands", "expected an array");
      for (size_t i = 0; i < ops.size(); ++i) {
        std::string oa = a + "/operands/" + std::to_string(i);
        Operand op;
        op.buffer = Str(Field(ops[i], "buffer", oa), oa + "/buffer");
        op.base = Exprs(Field(ops[i], "base", oa), oa + "/base");
        in.operands.push_back(std::move(op));
      }
      if (c.contains("init")) in.init = ExprOf(c["init"], a + "/init");
      return Stmt{std::move(in)};
    }
    Fail(at, "unknown statement kind '" + j.begin().key() + "'");
  }

  std::vector<Expr> Exprs(const json& j, const std::string& at) {
    Require(j.is_array(), at, "expected an array");
    std::vector<Expr> out;
    for (size_t i = 0; i < j.size(); ++i) out.push_back(ExprOf(j[i], at + "/" + std::to_string(i)));
    return out;
  }

  Expr ExprOf(const json& j, const std::string& at) {
    Require(j.is_object() && j.size() == 1, at, "expression must be a single-key object");
    const std::string& key = j.begin().key();
    const json& v = j.begin().value();
    std::string a = at + "/" + key;
    if (key == "int") return IntImm(Int(v, a));
    if (key == "var") return VarRef(Str(v, a));
    if (key == "load") {
      return Load(Str(Field(v, "buffer", a), a + "/buffer"), Exprs(Field(v, "indices", a), a + "/indices"));
    }
    std::vector<Expr> args = Exprs(v, a);
    auto arity = [&](size_t n) {
      Require(args.size() == n, a, "expected " + std::to_string(n) + " operands");
    };
    // Raw nodes are rebuilt without folding so that the round trip is exact.
    auto node = std::make_shared<ExprNode>();
    node->args = args;
    if (key == "select") {
      arity(3);
      node->kind = ExprKind::kSelect;
      return node;
    }
    static const std::map<std::string, ExprKind> kBinary = {
        {"add", ExprKind::kAdd},           {"sub", ExprKind::kSub},
        {"mul", ExprKind::kMul},           {"floordiv", ExprKind::kFloorDiv},
        {"floormod", ExprKind::kFloorMod}, {"max", ExprKind::kMax},
        {"min", ExprKind::kMin},           {"lt", ExprKind::kLt}};
    auto it = kBinary.find(key);
    if (it == kBinary.end()) Fail(at, "unknown expression kind '" + key + "'");
    arity(2);
    node->kind = it->second;
    return node;
  }
};

}  // namespace

std::string SerializeProgram(const TensorProgram& p) {
  json bufs = json::array();
  for (const Buffer& b : p.buffers) {
    bufs.push_back({{"name", b.name}, {"shape", b.shape}, {"role", RoleName(b.role)}});
  }
  json root = json::array();
  for (const Stmt& s : p.root) root.push_back(StmtToJson(s));
  return json{{"buffers", bufs}, {"root", root}}.dump();
}

TensorProgram DeserializeProgram(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("program parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return JsonReader().Program(j);
}

}  // namespace metasched
