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
 * \file ir.cc
 * \brief Expression builders, validation and structural utilities.
 */
#include "metasched/ir.h"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include "metasched/analysis.h"

namespace metasched {

int64_t Buffer::NumElements() const {
  int64_t n = 1;
  for (int64_t s : shape) n *= s;
  return n;
}

namespace {

Expr Make(ExprKind kind, std::vector<Expr> args) {
  auto node = std::make_shared<ExprNode>();
  node->kind = kind;
  node->args = std::move(args);
  return node;
}

bool IsInt(const Expr& e) { return e->kind == ExprKind::kInt; }
bool IsInt(const Expr& e, int64_t v) { return e->kind == ExprKind::kInt && e->value == v; }

}  // namespace

int64_t FloorDivInt(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int64_t FloorModInt(int64_t a, int64_t b) { return a - FloorDivInt(a, b) * b; }

Expr IntImm(int64_t v) {
  auto node = std::make_shared<ExprNode>();
  node->kind = ExprKind::kInt;
  node->value = v;
  return node;
}

Expr VarRef(std::string name) {
  auto node = std::make_shared<ExprNode>();
  node->kind = ExprKind::kVar;
  node->name = std::move(name);
  return node;
}

Expr Load(std::string buffer, std::vector<Expr> indices) {
  auto node = std::make_shared<ExprNode>();
  node->kind = ExprKind::kLoad;
  node->name = std::move(buffer);
  node->args = std::move(indices);
  return node;
}

Expr Add(Expr a, Expr b) {
  if (IsInt(a) && IsInt(b)) return IntImm(a->value + b->value);
  if (IsInt(a, 0)) return b;
  if (IsInt(b, 0)) return a;
  return Make(ExprKind::kAdd, {std::move(a), std::move(b)});
}

Expr Sub(Expr a, Expr b) {
  if (IsInt(a) && IsInt(b)) return IntImm(a->value - b->value);
  if (IsInt(b, 0)) return a;
  return Make(ExprKind::kSub, {std::move(a), std::move(b)});
}

Expr Mul(Expr a, Expr b) {
  if (IsInt(a) && IsInt(b)) return IntImm(a->value * b->value);
  if (IsInt(a)) std::swap(a, b);
  if (IsInt(b, 1)) return a;
  if (IsInt(b, 0)) return b;
  if (IsInt(b) && a->kind == ExprKind::kMul && IsInt(a->args[1])) {
    return Mul(a->args[0], IntImm(a->args[1]->value * b->value));
  }
  return Make(ExprKind::kMul, {std::move(a), std::move(b)});
}

Expr FloorDiv(Expr a, Expr b) {
  if (IsInt(a) && IsInt(b) && b->value != 0) return IntImm(FloorDivInt(a->value, b->value));
  if (IsInt(b, 1)) return a;
  return Make(ExprKind::kFloorDiv, {std::move(a), std::move(b)});
}

Expr FloorMod(Expr a, Expr b) {
  if (IsInt(a) && IsInt(b) && b->value != 0) return IntImm(FloorModInt(a->value, b->value));
  if (IsInt(b, 1)) return IntImm(0);
  return Make(ExprKind::kFloorMod, {std::move(a), std::move(b)});
}

Expr Max(Expr a, Expr b) {
  if (IsInt(a) && IsInt(b)) return IntImm(std::max(a->value, b->value));
  return Make(ExprKind::kMax, {std::move(a), std::move(b)});
}

Expr Min(Expr a, Expr b) {
  if (IsInt(a) && IsInt(b)) return IntImm(std::min(a->value, b->value));
  return Make(ExprKind::kMin, {std::move(a), std::move(b)});
}

Expr Lt(Expr a, Expr b) {
  if (IsInt(a) && IsInt(b)) return IntImm(a->value < b->value ? 1 : 0);
  return Make(ExprKind::kLt, {std::move(a), std::move(b)});
}

Expr Select(Expr cond, Expr then_value, Expr else_value) {
  if (IsInt(cond)) return cond->value != 0 ? then_value : else_value;
  return Make(ExprKind::kSelect, {std::move(cond), std::move(then_value), std::move(else_value)});
}

const char* ExprKindName(ExprKind kind) {
  switch (kind) {
    case ExprKind::kInt: return "int";
    case ExprKind::kVar: return "var";
    case ExprKind::kLoad: return "load";
    case ExprKind::kAdd: return "add";
    case ExprKind::kSub: return "sub";
    case ExprKind::kMul: return "mul";
    case ExprKind::kFloorDiv: return "floordiv";
    case ExprKind::kFloorMod: return "floormod";
    case ExprKind::kMax: return "max";
    case ExprKind::kMin: return "min";
    case ExprKind::kLt: return "lt";
    case ExprKind::kSelect: return "select";
  }
  return "?";
}

bool IsBinary(ExprKind kind) {
  switch (kind) {
    case ExprKind::kAdd:
    case ExprKind::kSub:
    case ExprKind::kMul:
    case ExprKind::kFloorDiv:
    case ExprKind::kFloorMod:
    case ExprKind::kMax:
    case ExprKind::kMin:
    case ExprKind::kLt:
      return true;
    default:
      return false;
  }
}

const char* LoopKindName(LoopKind kind) {
  switch (kind) {
    case LoopKind::kSerial: return "serial";
    case LoopKind::kParallel: return "parallel";
    case LoopKind::kVectorized: return "vectorized";
    case LoopKind::kUnrolled: return "unrolled";
  }
  return "?";
}

LoopKind LoopKindFromName(const std::string& name) {
  if (name == "serial") return LoopKind::kSerial;
  if (name == "parallel") return LoopKind::kParallel;
  if (name == "vectorized") return LoopKind::kVectorized;
  if (name == "unrolled") return LoopKind::kUnrolled;
  throw Error("unknown loop kind '" + name + "'");
}

const std::string& Stmt::BlockName() const {
  static const std::string kEmpty;
  if (IsCompute()) return AsCompute().block;
  if (IsIntrinsic()) return AsIntrinsic().block;
  return kEmpty;
}

Stmt MakeLoop(std::string var, int64_t extent, std::vector<Stmt> body, LoopKind kind) {
  return Stmt{Loop{std::move(var), extent, kind, std::move(body)}};
}

Stmt MakeCompute(std::string block, std::string buffer, std::vector<Expr> indices, Expr value,
                 std::optional<Expr> init) {
  return Stmt{Compute{std::move(block), std::move(buffer), std::move(indices), std::move(value),
                      std::move(init), std::nullopt}};
}

const Buffer* TensorProgram::FindBuffer(const std::string& name) const {
  for (const Buffer& b : buffers) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

namespace {

void IndexBlocks(const std::vector<Stmt>& stmts, StmtPath* path,
                 std::vector<std::pair<std::string, StmtPath>>* out) {
  for (size_t i = 0; i < stmts.size(); ++i) {
    path->push_back(i);
    if (stmts[i].IsLoop()) {
      IndexBlocks(stmts[i].AsLoop().body, path, out);
    } else {
      out->emplace_back(stmts[i].BlockName(), *path);
    }
    path->pop_back();
  }
}

}  // namespace

std::map<std::string, StmtPath> TensorProgram::BlockIndex() const {
  std::vector<std::pair<std::string, StmtPath>> flat;
  StmtPath path;
  IndexBlocks(root, &path, &flat);
  return {flat.begin(), flat.end()};
}

std::vector<std::string> TensorProgram::BlockNames() const {
  std::vector<std::pair<std::string, StmtPath>> flat;
  StmtPath path;
  IndexBlocks(root, &path, &flat);
  std::vector<std::string> names;
  for (auto& [name, p] : flat) names.push_back(name);
  return names;
}

const Stmt& TensorProgram::At(const StmtPath& path) const {
  const std::vector<Stmt>* level = &root;
  const Stmt* s = nullptr;
  for (size_t i : path) {
    if (i >= level->size()) throw Error("statement path out of range");
    s = &(*level)[i];
    if (s->IsLoop()) level = &s->AsLoop().body;
  }
  if (s == nullptr) throw Error("empty statement path");
  return *s;
}

Stmt& TensorProgram::At(const StmtPath& path) {
  return const_cast<Stmt&>(static_cast<const TensorProgram&>(*this).At(path));
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace {

std::string PathString(const StmtPath& path) {
  std::ostringstream os;
  os << "root";
  for (size_t i : path) os << "/" << i;
  return os.str();
}

class Validator {
 public:
  explicit Validator(const TensorProgram& p) : p_(p) {}

  std::vector<std::string> Run() {
    std::set<std::string> names;
    for (const Buffer& b : p_.buffers) {
      if (!names.insert(b.name).second) Diag("buffer " + b.name, "duplicate buffer name");
      if (b.shape.empty()) Diag("buffer " + b.name, "empty shape");
      for (int64_t s : b.shape) {
        if (s < 1) Diag("buffer " + b.name, "non-positive extent");
      }
    }
    StmtPath path;
    std::vector<const Loop*> loops;
    Visit(p_.root, &path, &loops);
    for (const Buffer& b : p_.buffers) {
      bool written = writer_.count(b.name) > 0;
      if (b.role == BufferRole::kInput && written) Diag("buffer " + b.name, "input buffer is written");
      if (b.role == BufferRole::kOutput && !written) Diag("buffer " + b.name, "output buffer is never written");
    }
    return diags_;
  }

 private:
  void Diag(const std::string& where, const std::string& what) {
    diags_.push_back(where + ": " + what);
  }

  void Visit(const std::vector<Stmt>& stmts, StmtPath* path, std::vector<const Loop*>* loops) {
    for (size_t i = 0; i < stmts.size(); ++i) {
      path->push_back(i);
      const Stmt& s = stmts[i];
      if (s.IsLoop()) {
        const Loop& l = s.AsLoop();
        if (l.extent < 1) Diag(PathString(*path), "loop " + l.var + " has non-positive extent");
        if (!loop_vars_.insert(l.var).second) {
          Diag(PathString(*path), "loop variable " + l.var + " is bound twice");
        }
        if (l.body.empty()) Diag(PathString(*path), "loop " + l.var + " has an empty body");
        loops->push_back(&l);
        Visit(l.body, path, loops);
        loops->pop_back();
      } else {
        VisitLeaf(s, *path, *loops);
      }
      path->pop_back();
    }
  }

  void CheckExpr(const Expr& e, const std::set<std::string>& bound, const std::string& where) {
    switch (e->kind) {
      case ExprKind::kInt:
        return;
      case ExprKind::kVar:
        if (!bound.count(e->name)) Diag(where, "unbound variable " + e->name);
        return;
      case ExprKind::kLoad:
        CheckAccess(e->name, e->args, bound, where, false);
        return;
      default:
        for (const Expr& a : e->args) CheckExpr(a, bound, where);
    }
  }

  void CheckAccess(const std::string& buffer, const std::vector<Expr>& index,
                   const std::set<std::string>& bound, const std::string& where, bool is_write) {
    const Buffer* b = p_.FindBuffer(buffer);
    if (b == nullptr) {
      Diag(where, "undeclared buffer " + buffer);
      return;
    }
    if (b->shape.size() != index.size()) Diag(where, "rank mismatch on " + buffer);
    for (const Expr& ix : index) {
      if (!IsQuasiAffine(ix)) Diag(where, "non-affine index " + ExprToString(ix));
      CheckExpr(ix, bound, where);
    }
    if (!is_write) {
      reads_.insert(buffer);
    }
  }

  void VisitLeaf(const Stmt& s, const StmtPath& path, const std::vector<const Loop*>& loops) {
    std::string where = PathString(path) + " (block " + s.BlockName() + ")";
    if (!blocks_.insert(s.BlockName()).second) Diag(where, "duplicate block name");
    std::set<std::string> bound;
    for (const Loop* l : loops) bound.insert(l->var);
    const std::string& out = WrittenBuffer(s);
    reads_.clear();
    if (s.IsCompute()) {
      const Compute& c = s.AsCompute();
      CheckAccess(c.buffer, c.indices, bound, where, true);
      CheckExpr(c.value, bound, where);
      if (c.init) {
        CheckExpr(*c.init, bound, where);
        if (ReadsBuffer(*c.init, c.buffer)) Diag(where, "reduction init reads its own output");
        bool form_ok = c.value->kind == ExprKind::kAdd && c.value->args[0]->kind == ExprKind::kLoad &&
                       c.value->args[0]->name == c.buffer &&
                       c.value->args[0]->args.size() == c.indices.size() &&
                       !ReadsBuffer(c.value->args[1], c.buffer);
        for (size_t d = 0; form_ok && d < c.indices.size(); ++d) {
          form_ok = ExprEqual(c.value->args[0]->args[d], c.indices[d]);
        }
        if (!form_ok) Diag(where, "reduction must have the form out[idx] = out[idx] + rhs");
      } else if (ReadsBuffer(c.value, c.buffer)) {
        Diag(where, "data-parallel block reads its own output");
      }
      if (c.epilogue) {
        if (!c.init) Diag(where, "epilogue on a non-reduction block");
        CheckExpr(*c.epilogue, bound, where);
      }
    } else {
      const Intrinsic& in = s.AsIntrinsic();
      if (in.name != "tu.mma4") Diag(where, "unknown intrinsic " + in.name);
      if (in.operands.size() != 3) {
        Diag(where, "intrinsic expects 3 operands");
      } else {
        for (size_t k = 0; k < 3; ++k) {
          CheckAccess(in.operands[k].buffer, in.operands[k].base, bound, where, k == 0);
        }
      }
      if (in.init) CheckExpr(*in.init, bound, where);
    }
    if (IsReductionLeaf(s)) {
      std::set<std::string> used = WrittenVars(s);
      for (const std::string& v : ReductionVars(s, loops)) used.insert(v);
      for (const Loop* l : loops) {
        if (!used.count(l->var)) {
          Diag(where, "reduction block is nested in loop " + l->var + " it does not use");
        }
      }
    }
    if (writer_.count(out)) {
      Diag(where, "buffer " + out + " has more than one writer");
    }
    writer_[out] = s.BlockName();
    for (const std::string& r : reads_) {
      if (r == out) continue;
      const Buffer* b = p_.FindBuffer(r);
      if (b != nullptr && b->role != BufferRole::kInput && !writer_.count(r)) {
        Diag(where, "reads " + r + " before any block produces it");
      }
    }
  }

  const TensorProgram& p_;
  std::vector<std::string> diags_;
  std::set<std::string> loop_vars_;
  std::set<std::string> blocks_;
  std::map<std::string, std::string> writer_;
  std::set<std::string> reads_;
};

}  // namespace

std::vector<std::string> ValidateIR(const TensorProgram& p) { return Validator(p).Run(); }

void CheckValid(const TensorProgram& p) {
  std::vector<std::string> diags = ValidateIR(p);
  if (diags.empty()) return;
  std::string msg = "invalid program:";
  for (const std::string& d : diags) msg += "\n  " + d;
  throw Error(msg);
}

TensorProgram EraseLoopKinds(TensorProgram p) {
  std::function<void(std::vector<Stmt>&)> walk = [&](std::vector<Stmt>& stmts) {
    for (Stmt& s : stmts) {
      if (s.IsLoop()) {
        s.AsLoop().kind = LoopKind::kSerial;
        walk(s.AsLoop().body);
      }
    }
  };
  walk(p.root);
  return p;
}

}  // namespace metasched
