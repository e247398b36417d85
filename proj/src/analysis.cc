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
 * \file analysis.cc
 * \brief Affine index analysis helpers.
 */
#include "metasched/analysis.h"

#include <algorithm>
#include <limits>

namespace metasched {

bool DependsOn(const Expr& e, const std::string& var) {
  if (e->kind == ExprKind::kVar) return e->name == var;
  for (const Expr& a : e->args) {
    if (DependsOn(a, var)) return true;
  }
  return false;
}

void CollectVars(const Expr& e, std::set<std::string>* vars) {
  if (e->kind == ExprKind::kVar) vars->insert(e->name);
  for (const Expr& a : e->args) CollectVars(a, vars);
}

std::set<std::string> VarsOf(const Expr& e) {
  std::set<std::string> out;
  CollectVars(e, &out);
  return out;
}

bool ReadsBuffer(const Expr& e, const std::string& buffer) {
  if (e->kind == ExprKind::kLoad && e->name == buffer) return true;
  for (const Expr& a : e->args) {
    if (ReadsBuffer(a, buffer)) return true;
  }
  return false;
}

void CollectLoads(const Expr& e, std::vector<const ExprNode*>* loads) {
  if (e->kind == ExprKind::kLoad) {
    loads->push_back(e.get());
    return;
  }
  for (const Expr& a : e->args) CollectLoads(a, loads);
}

namespace {

Expr Rebuild(const Expr& e, std::vector<Expr> args) {
  switch (e->kind) {
    case ExprKind::kInt:
    case ExprKind::kVar:
      return e;
    case ExprKind::kLoad:
      return Load(e->name, std::move(args));
    case ExprKind::kAdd: return Add(args[0], args[1]);
    case ExprKind::kSub: return Sub(args[0], args[1]);
    case ExprKind::kMul: return Mul(args[0], args[1]);
    case ExprKind::kFloorDiv: return FloorDiv(args[0], args[1]);
    case ExprKind::kFloorMod: return FloorMod(args[0], args[1]);
    case ExprKind::kMax: return Max(args[0], args[1]);
    case ExprKind::kMin: return Min(args[0], args[1]);
    case ExprKind::kLt: return Lt(args[0], args[1]);
    case ExprKind::kSelect: return Select(args[0], args[1], args[2]);
  }
  return e;
}

}  // namespace

Expr Substitute(const Expr& e, const std::map<std::string, Expr>& vmap) {
  if (e->kind == ExprKind::kVar) {
    auto it = vmap.find(e->name);
    return it == vmap.end() ? e : it->second;
  }
  if (e->args.empty()) return e;
  std::vector<Expr> args;
  args.reserve(e->args.size());
  for (const Expr& a : e->args) args.push_back(Substitute(a, vmap));
  return Rebuild(e, std::move(args));
}

Expr ReplaceLoads(const Expr& e, const std::string& buffer,
                  const std::function<Expr(const std::vector<Expr>&)>& fn) {
  if (e->kind == ExprKind::kLoad && e->name == buffer) return fn(e->args);
  if (e->args.empty()) return e;
  std::vector<Expr> args;
  for (const Expr& a : e->args) args.push_back(ReplaceLoads(a, buffer, fn));
  return Rebuild(e, std::move(args));
}

bool IsQuasiAffine(const Expr& e) {
  switch (e->kind) {
    case ExprKind::kInt:
    case ExprKind::kVar:
      return true;
    case ExprKind::kAdd:
    case ExprKind::kSub:
      return IsQuasiAffine(e->args[0]) && IsQuasiAffine(e->args[1]);
    case ExprKind::kMul: {
      const Expr& a = e->args[0];
      const Expr& b = e->args[1];
      if (a->kind == ExprKind::kInt) return IsQuasiAffine(b);
      if (b->kind == ExprKind::kInt) return IsQuasiAffine(a);
      return false;
    }
    case ExprKind::kFloorDiv:
    case ExprKind::kFloorMod:
      return e->args[1]->kind == ExprKind::kInt && e->args[1]->value > 0 && IsQuasiAffine(e->args[0]);
    default:
      return false;
  }
}

int64_t CountArithOps(const Expr& e) {
  if (e->kind == ExprKind::kLoad || e->kind == ExprKind::kInt || e->kind == ExprKind::kVar) return 0;
  int64_t n = 1;
  for (const Expr& a : e->args) n += CountArithOps(a);
  return n;
}

namespace {

bool MentionsAny(const Expr& e, const std::set<std::string>& vars) {
  if (e->kind == ExprKind::kVar) return vars.count(e->name) > 0;
  for (const Expr& a : e->args) {
    if (MentionsAny(a, vars)) return true;
  }
  return false;
}

}  // namespace

std::optional<LinearSplit> SplitLinear(const Expr& e, const std::set<std::string>& inner) {
  if (!MentionsAny(e, inner)) return LinearSplit{e, {}};
  switch (e->kind) {
    case ExprKind::kVar:
      return LinearSplit{IntImm(0), {{e->name, 1}}};
    case ExprKind::kAdd:
    case ExprKind::kSub: {
      auto a = SplitLinear(e->args[0], inner);
      auto b = SplitLinear(e->args[1], inner);
      if (!a || !b) return std::nullopt;
      int64_t sign = e->kind == ExprKind::kAdd ? 1 : -1;
      LinearSplit out;
      out.outer = e->kind == ExprKind::kAdd ? Add(a->outer, b->outer) : Sub(a->outer, b->outer);
      out.coef = a->coef;
      for (auto& [v, c] : b->coef) out.coef[v] += sign * c;
      for (auto it = out.coef.begin(); it != out.coef.end();) {
        it = it->second == 0 ? out.coef.erase(it) : std::next(it);
      }
      return out;
    }
    case ExprKind::kMul: {
      const Expr* c = nullptr;
      const Expr* other = nullptr;
      if (e->args[0]->kind == ExprKind::kInt) {
        c = &e->args[0];
        other = &e->args[1];
      } else if (e->args[1]->kind == ExprKind::kInt) {
        c = &e->args[1];
        other = &e->args[0];
      } else {
        return std::nullopt;
      }
      auto s = SplitLinear(*other, inner);
      if (!s) return std::nullopt;
      int64_t k = (*c)->value;
      LinearSplit out;
      out.outer = Mul(s->outer, IntImm(k));
      for (auto& [v, x] : s->coef) {
        if (x * k != 0) out.coef[v] = x * k;
      }
      return out;
    }
    default:
      return std::nullopt;
  }
}

IntRange BoundOf(const Expr& e, const std::map<std::string, IntRange>& env) {
  constexpr int64_t kBig = std::numeric_limits<int32_t>::max();
  switch (e->kind) {
    case ExprKind::kInt:
      return {e->value, e->value};
    case ExprKind::kVar: {
      auto it = env.find(e->name);
      return it == env.end() ? IntRange{0, 0} : it->second;
    }
    case ExprKind::kLoad:
      return {-kBig, kBig};
    case ExprKind::kAdd: {
      IntRange a = BoundOf(e->args[0], env), b = BoundOf(e->args[1], env);
      return {a.lo + b.lo, a.hi + b.hi};
    }
    case ExprKind::kSub: {
      IntRange a = BoundOf(e->args[0], env), b = BoundOf(e->args[1], env);
      return {a.lo - b.hi, a.hi - b.lo};
    }
    case ExprKind::kMul: {
      IntRange a = BoundOf(e->args[0], env), b = BoundOf(e->args[1], env);
      int64_t c[4] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
      return {*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
    }
    case ExprKind::kFloorDiv: {
      IntRange a = BoundOf(e->args[0], env), b = BoundOf(e->args[1], env);
      if (b.lo != b.hi || b.lo <= 0) return {-kBig, kBig};
      return {FloorDivInt(a.lo, b.lo), FloorDivInt(a.hi, b.lo)};
    }
    case ExprKind::kFloorMod: {
      IntRange a = BoundOf(e->args[0], env), b = BoundOf(e->args[1], env);
      if (b.lo != b.hi || b.lo <= 0) return {-kBig, kBig};
      int64_t m = b.lo;
      if (a.Size() >= m) return {0, m - 1};
      int64_t lo = FloorModInt(a.lo, m), hi = FloorModInt(a.hi, m);
      if (lo <= hi) return {lo, hi};
      return {0, m - 1};
    }
    case ExprKind::kMax: {
      IntRange a = BoundOf(e->args[0], env), b = BoundOf(e->args[1], env);
      return {std::max(a.lo, b.lo), std::max(a.hi, b.hi)};
    }
    case ExprKind::kMin: {
      IntRange a = BoundOf(e->args[0], env), b = BoundOf(e->args[1], env);
      return {std::min(a.lo, b.lo), std::min(a.hi, b.hi)};
    }
    case ExprKind::kLt:
      return {0, 1};
    case ExprKind::kSelect: {
      IntRange a = BoundOf(e->args[1], env), b = BoundOf(e->args[2], env);
      return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)};
    }
  }
  return {-kBig, kBig};
}

namespace {

void Leaves(const std::vector<Stmt>& stmts, StmtPath* path, std::vector<const Loop*>* loops,
            std::vector<LeafInfo>* out) {
  for (size_t i = 0; i < stmts.size(); ++i) {
    path->push_back(i);
    const Stmt& s = stmts[i];
    if (s.IsLoop()) {
      loops->push_back(&s.AsLoop());
      Leaves(s.AsLoop().body, path, loops, out);
      loops->pop_back();
    } else {
      out->push_back(LeafInfo{*path, *loops, &s});
    }
    path->pop_back();
  }
}

}  // namespace

std::vector<LeafInfo> CollectLeaves(const TensorProgram& p) {
  std::vector<LeafInfo> out;
  StmtPath path;
  std::vector<const Loop*> loops;
  Leaves(p.root, &path, &loops, &out);
  return out;
}

std::optional<LeafInfo> FindLeaf(const TensorProgram& p, const std::string& block) {
  for (LeafInfo& leaf : CollectLeaves(p)) {
    if (leaf.stmt->BlockName() == block) return leaf;
  }
  return std::nullopt;
}

std::vector<Access> LeafAccesses(const Stmt& leaf) {
  std::vector<Access> out;
  if (leaf.IsCompute()) {
    const Compute& c = leaf.AsCompute();
    std::vector<const ExprNode*> loads;
    CollectLoads(c.value, &loads);
    for (const ExprNode* l : loads) out.push_back(Access{l->name, l->args, 1, false});
    out.push_back(Access{c.buffer, c.indices, 1, true});
    return out;
  }
  const Intrinsic& in = leaf.AsIntrinsic();
  for (size_t k = 0; k < in.operands.size(); ++k) {
    out.push_back(Access{in.operands[k].buffer, in.operands[k].base, 4, k == 0});
  }
  return out;
}

std::set<std::string> WrittenVars(const Stmt& leaf) {
  std::set<std::string> vars;
  if (leaf.IsCompute()) {
    for (const Expr& e : leaf.AsCompute().indices) CollectVars(e, &vars);
  } else if (!leaf.AsIntrinsic().operands.empty()) {
    for (const Expr& e : leaf.AsIntrinsic().operands[0].base) CollectVars(e, &vars);
  }
  return vars;
}

std::vector<std::string> ReductionVars(const Stmt& leaf, const std::vector<const Loop*>& loops) {
  std::set<std::string> written = WrittenVars(leaf);
  std::set<std::string> read;
  if (leaf.IsCompute()) {
    const Compute& c = leaf.AsCompute();
    if (!c.init) return {};
    CollectVars(c.value, &read);
  } else {
    const Intrinsic& in = leaf.AsIntrinsic();
    for (size_t k = 1; k < in.operands.size(); ++k) {
      for (const Expr& e : in.operands[k].base) CollectVars(e, &read);
    }
  }
  std::vector<std::string> out;
  for (const Loop* l : loops) {
    if (read.count(l->var) && !written.count(l->var)) out.push_back(l->var);
  }
  return out;
}

bool IsReductionLeaf(const Stmt& leaf) {
  return leaf.IsIntrinsic() || leaf.AsCompute().init.has_value();
}

const std::string& WrittenBuffer(const Stmt& leaf) {
  static const std::string kEmpty;
  if (leaf.IsCompute()) return leaf.AsCompute().buffer;
  const Intrinsic& in = leaf.AsIntrinsic();
  return in.operands.empty() ? kEmpty : in.operands[0].buffer;
}

std::set<std::string> ReadBuffers(const Stmt& leaf) {
  std::set<std::string> out;
  std::vector<const ExprNode*> loads;
  if (leaf.IsCompute()) {
    const Compute& c = leaf.AsCompute();
    CollectLoads(c.value, &loads);
    if (c.init) CollectLoads(*c.init, &loads);
    if (c.epilogue) CollectLoads(*c.epilogue, &loads);
    for (const ExprNode* l : loads) out.insert(l->name);
  } else {
    const Intrinsic& in = leaf.AsIntrinsic();
    for (size_t k = 1; k < in.operands.size(); ++k) out.insert(in.operands[k].buffer);
  }
  out.erase(WrittenBuffer(leaf));
  return out;
}

}  // namespace metasched
