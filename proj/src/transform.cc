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
 * \file transform.cc
 * \brief Loop and block rewrites used by the schedule primitives.
 */
#include "metasched/transform.h"

#include <algorithm>
#include <functional>
#include <map>
#include <sstream>

namespace metasched {

namespace {

bool FindLoopPath(const std::vector<Stmt>& stmts, const std::string& var, StmtPath* path) {
  for (size_t i = 0; i < stmts.size(); ++i) {
    if (!stmts[i].IsLoop()) continue;
    path->push_back(i);
    const Loop& l = stmts[i].AsLoop();
    if (l.var == var || FindLoopPath(l.body, var, path)) return true;
    path->pop_back();
  }
  return false;
}

StmtPath LoopPath(const TensorProgram& p, const std::string& var) {
  StmtPath path;
  if (!FindLoopPath(p.root, var, &path)) throw Error("no loop named " + var);
  return path;
}

std::vector<Stmt>& ListOf(TensorProgram* p, const StmtPath& path) {
  if (path.size() == 1) return p->root;
  StmtPath parent(path.begin(), path.end() - 1);
  return p->At(parent).AsLoop().body;
}

LeafInfo RequireLeaf(const TensorProgram& p, const std::string& block) {
  auto leaf = FindLeaf(p, block);
  if (!leaf) throw Error("no block named " + block);
  return *leaf;
}

std::vector<Expr> SubstAll(const std::vector<Expr>& es, const std::map<std::string, Expr>& vmap) {
  std::vector<Expr> out;
  out.reserve(es.size());
  for (const Expr& e : es) out.push_back(Substitute(e, vmap));
  return out;
}

void SubstituteLeaf(Stmt* s, const std::map<std::string, Expr>& vmap) {
  if (s->IsCompute()) {
    Compute& c = s->AsCompute();
    c.indices = SubstAll(c.indices, vmap);
    c.value = Substitute(c.value, vmap);
    if (c.init) c.init = Substitute(*c.init, vmap);
    if (c.epilogue) c.epilogue = Substitute(*c.epilogue, vmap);
  } else {
    Intrinsic& in = s->AsIntrinsic();
    for (Operand& op : in.operands) op.base = SubstAll(op.base, vmap);
    if (in.init) in.init = Substitute(*in.init, vmap);
  }
}

void SubstituteStmts(std::vector<Stmt>* stmts, const std::map<std::string, Expr>& vmap) {
  for (Stmt& s : *stmts) {
    if (s.IsLoop()) {
      SubstituteStmts(&s.AsLoop().body, vmap);
    } else {
      SubstituteLeaf(&s, vmap);
    }
  }
}

void ForEachLeaf(const std::vector<Stmt>& stmts, const std::function<void(const Stmt&)>& fn) {
  for (const Stmt& s : stmts) {
    if (s.IsLoop()) {
      ForEachLeaf(s.AsLoop().body, fn);
    } else {
      fn(s);
    }
  }
}

/*! \brief Removes a leaf and every loop left empty by its removal. */
void RemoveLeaf(TensorProgram* p, const std::string& block) {
  StmtPath path = RequireLeaf(*p, block).path;
  while (true) {
    std::vector<Stmt>& list = ListOf(p, path);
    list.erase(list.begin() + static_cast<std::ptrdiff_t>(path.back()));
    path.pop_back();
    if (path.empty() || !p->At(path).AsLoop().body.empty()) break;
  }
}

/*! \brief Path of the outermost loop owned by the block, or of the leaf itself. */
StmtPath NestRootPath(const LeafInfo& leaf) {
  return StmtPath(leaf.path.begin(), leaf.path.begin() + 1);
}

bool IsPureVar(const Expr& e) { return e->kind == ExprKind::kVar; }

void RemoveBuffer(TensorProgram* p, const std::string& name) {
  auto it = std::find_if(p->buffers.begin(), p->buffers.end(), [&](const Buffer& b) { return b.name == name; });
  if (it != p->buffers.end()) p->buffers.erase(it);
}

/*! \brief Commits `next` into `p` after validation; a failure is a bug in the rewrite. */
void Commit(TensorProgram* p, TensorProgram next, const char* what) {
  std::vector<std::string> diags = ValidateIR(next);
  if (!diags.empty()) throw Error(std::string(what) + ": result is invalid: " + diags.front());
  *p = std::move(next);
}

std::string Join(const std::vector<int64_t>& xs, const char* sep) {
  std::ostringstream os;
  for (size_t i = 0; i < xs.size(); ++i) os << (i ? sep : "") << xs[i];
  return os.str();
}

/*! \brief Common loads of `buffer`; nullopt when they use different indices. */
std::optional<std::vector<Expr>> UniqueLoadIndex(const std::vector<Expr>& exprs, const std::string& buffer) {
  std::optional<std::vector<Expr>> index;
  for (const Expr& e : exprs) {
    std::vector<const ExprNode*> loads;
    CollectLoads(e, &loads);
    for (const ExprNode* l : loads) {
      if (l->name != buffer) continue;
      if (!index) {
        index = l->args;
        continue;
      }
      for (size_t d = 0; d < l->args.size(); ++d) {
        if (!ExprEqual(l->args[d], (*index)[d])) return std::nullopt;
      }
    }
  }
  return index;
}

std::vector<Expr> LeafExprs(const Stmt& s) {
  std::vector<Expr> out;
  const Compute& c = s.AsCompute();
  out.push_back(c.value);
  if (c.init) out.push_back(*c.init);
  if (c.epilogue) out.push_back(*c.epilogue);
  return out;
}

/*!
 * \brief For a consumer reading `buffer` at distinct pure loop variables
 *  covering all of its loops, returns the variable at each buffer dimension.
 */
std::vector<std::string> PureReadVars(const TensorProgram& p, const LeafInfo& leaf, const std::string& buffer,
                                      const char* what) {
  const Buffer* b = p.FindBuffer(buffer);
  auto index = UniqueLoadIndex(LeafExprs(*leaf.stmt), buffer);
  if (!index) throw Error(std::string(what) + ": block " + leaf.stmt->BlockName() + " reads " + buffer + " at several indices");
  std::vector<std::string> vars;
  std::map<std::string, int64_t> extents;
  for (const Loop* l : leaf.loops) extents[l->var] = l->extent;
  for (size_t d = 0; d < index->size(); ++d) {
    const Expr& e = (*index)[d];
    if (!IsPureVar(e) || std::find(vars.begin(), vars.end(), e->name) != vars.end() ||
        extents[e->name] != b->shape[d]) {
      throw Error(std::string(what) + ": block " + leaf.stmt->BlockName() + " does not read " + buffer +
                  " at distinct loop variables spanning its shape");
    }
    vars.push_back(e->name);
  }
  if (vars.size() != leaf.loops.size()) {
    throw Error(std::string(what) + ": block " + leaf.stmt->BlockName() + " has loops not used to index " + buffer);
  }
  return vars;
}

}  // namespace

// ---------------------------------------------------------------------------
// Analysis helpers
// ---------------------------------------------------------------------------

NameSupply::NameSupply(const TensorProgram& p) {
  std::function<void(const std::vector<Stmt>&)> visit = [&](const std::vector<Stmt>& stmts) {
    for (const Stmt& s : stmts) {
      if (s.IsLoop()) {
        used_.insert(s.AsLoop().var);
        visit(s.AsLoop().body);
      }
    }
  };
  visit(p.root);
}

std::string NameSupply::Fresh(const std::string& hint) {
  std::string stem = hint.substr(0, hint.find('_'));
  if (stem.empty()) stem = "v";
  while (true) {
    std::string name = stem + "_" + std::to_string(counter_++);
    if (used_.insert(name).second) return name;
  }
}

std::vector<std::string> ReadersOf(const TensorProgram& p, const std::string& buffer) {
  std::vector<std::string> out;
  for (const LeafInfo& leaf : CollectLeaves(p)) {
    if (ReadBuffers(*leaf.stmt).count(buffer)) out.push_back(leaf.stmt->BlockName());
  }
  return out;
}

std::optional<Counterpart> FindCounterpart(const TensorProgram& p, const std::string& block) {
  LeafInfo leaf = RequireLeaf(p, block);
  std::vector<std::string> intermediates;
  for (const std::string& r : ReadBuffers(*leaf.stmt)) {
    const Buffer* b = p.FindBuffer(r);
    if (b && b->role == BufferRole::kIntermediate) intermediates.push_back(r);
  }
  if (intermediates.size() == 1 && ReadersOf(p, intermediates[0]) == std::vector<std::string>{block}) {
    for (const LeafInfo& other : CollectLeaves(p)) {
      if (WrittenBuffer(*other.stmt) == intermediates[0]) return Counterpart{other.stmt->BlockName(), true};
    }
  }
  const std::string& out = WrittenBuffer(*leaf.stmt);
  const Buffer* ob = p.FindBuffer(out);
  if (ob && ob->role == BufferRole::kIntermediate) {
    std::vector<std::string> readers = ReadersOf(p, out);
    if (readers.size() == 1 && readers[0] != block) return Counterpart{readers[0], false};
  }
  return std::nullopt;
}

bool IsElementwise(const TensorProgram& p, const std::string& block) {
  LeafInfo leaf = RequireLeaf(p, block);
  if (!leaf.stmt->IsCompute()) return false;
  const Compute& c = leaf.stmt->AsCompute();
  if (c.init) return false;
  std::set<std::string> store;
  for (const Expr& e : c.indices) {
    if (!IsPureVar(e) || !store.insert(e->name).second) return false;
  }
  std::set<std::string> loops;
  for (const Loop* l : leaf.loops) loops.insert(l->var);
  return store == loops;
}

bool OwnsLoopNest(const TensorProgram& p, const std::string& block) {
  LeafInfo leaf = RequireLeaf(p, block);
  for (const Loop* l : leaf.loops) {
    if (l->body.size() != 1) return false;
  }
  return true;
}

const Loop& FindLoop(const TensorProgram& p, const std::string& var) {
  return p.At(LoopPath(p, var)).AsLoop();
}

bool IsDataParallelLoop(const TensorProgram& p, const std::string& loop_var) {
  const Loop& loop = FindLoop(p, loop_var);
  bool ok = true;
  ForEachLeaf(loop.body, [&](const Stmt& s) { ok = ok && WrittenVars(s).count(loop_var) > 0; });
  return ok;
}

std::vector<std::string> LoopVarsOf(const TensorProgram& p, const std::string& block) {
  std::vector<std::string> out;
  for (const Loop* l : RequireLeaf(p, block).loops) out.push_back(l->var);
  return out;
}

// ---------------------------------------------------------------------------
// split / fuse / reorder
// ---------------------------------------------------------------------------

std::vector<std::string> SplitLoop(TensorProgram* p, const std::string& var, std::vector<int64_t> factors,
                                   NameSupply* names) {
  TensorProgram next = *p;
  StmtPath path = LoopPath(next, var);
  Loop old = next.At(path).AsLoop();
  if (factors.empty()) throw Error("split: empty factor list");
  int inferred = -1;
  int64_t known = 1;
  for (size_t t = 0; t < factors.size(); ++t) {
    if (factors[t] == -1 && inferred < 0) {
      inferred = static_cast<int>(t);
    } else if (factors[t] < 1) {
      throw Error("split: factor " + std::to_string(factors[t]) + " is not positive");
    } else {
      known *= factors[t];
    }
  }
  if (inferred >= 0) {
    if (old.extent % known != 0) {
      throw Error("split: product mismatch (" + std::to_string(known) + " does not divide extent " +
                  std::to_string(old.extent) + " of " + var + ")");
    }
    factors[inferred] = old.extent / known;
    known = old.extent;
  }
  if (known != old.extent) {
    throw Error("split: product mismatch (" + Join(factors, "*") + " = " + std::to_string(known) +
                ", extent of " + var + " is " + std::to_string(old.extent) + ")");
  }
  std::vector<std::string> vars;
  for (size_t t = 0; t < factors.size(); ++t) vars.push_back(names->Fresh(var));
  Expr recombined = IntImm(0);
  int64_t stride = 1;
  for (size_t t = factors.size(); t-- > 0;) {
    recombined = Add(Mul(VarRef(vars[t]), IntImm(stride)), recombined);
    stride *= factors[t];
  }
  SubstituteStmts(&old.body, {{var, recombined}});
  std::vector<Stmt> body = std::move(old.body);
  for (size_t t = factors.size(); t-- > 0;) body = {MakeLoop(vars[t], factors[t], std::move(body))};
  next.At(path) = std::move(body[0]);
  Commit(p, std::move(next), "split");
  return vars;
}

std::string FuseLoops(TensorProgram* p, const std::vector<std::string>& vars, NameSupply* names) {
  if (vars.empty()) throw Error("fuse: empty loop list");
  if (vars.size() == 1) {
    LoopPath(*p, vars[0]);
    return vars[0];
  }
  TensorProgram next = *p;
  StmtPath path = LoopPath(next, vars[0]);
  std::vector<const Loop*> chain = {&next.At(path).AsLoop()};
  for (size_t t = 1; t < vars.size(); ++t) {
    const Loop* prev = chain.back();
    if (prev->body.size() != 1 || !prev->body[0].IsLoop() || prev->body[0].AsLoop().var != vars[t]) {
      throw Error("fuse: " + vars[t] + " is not the only child of " + prev->var);
    }
    chain.push_back(&prev->body[0].AsLoop());
  }
  // all spatial or all reduction
  int spatial = 0;
  for (const Loop* l : chain) {
    int writes = 0, leaves = 0;
    ForEachLeaf(l->body, [&](const Stmt& s) {
      ++leaves;
      writes += WrittenVars(s).count(l->var) ? 1 : 0;
    });
    if (writes != 0 && writes != leaves) throw Error("fuse: loop " + l->var + " is both spatial and reduction");
    spatial += writes == leaves ? 1 : 0;
  }
  if (spatial != 0 && spatial != static_cast<int>(chain.size())) {
    throw Error("fuse: cannot fuse spatial loops with reduction loops");
  }
  std::string fused = names->Fresh(vars[0]);
  int64_t extent = 1;
  for (const Loop* l : chain) extent *= l->extent;
  std::map<std::string, Expr> vmap;
  int64_t stride = extent;
  for (size_t t = 0; t < chain.size(); ++t) {
    stride /= chain[t]->extent;
    Expr v = FloorDiv(VarRef(fused), IntImm(stride));
    if (t > 0) v = FloorMod(v, IntImm(chain[t]->extent));
    vmap[chain[t]->var] = v;
  }
  std::vector<Stmt> body = chain.back()->body;
  SubstituteStmts(&body, vmap);
  next.At(path) = MakeLoop(fused, extent, std::move(body));
  Commit(p, std::move(next), "fuse");
  return fused;
}

void ReorderLoops(TensorProgram* p, const std::vector<std::string>& vars) {
  if (vars.empty()) return;
  std::set<std::string> wanted(vars.begin(), vars.end());
  if (wanted.size() != vars.size()) throw Error("reorder: duplicate loop");
  StmtPath top;
  for (const std::string& v : vars) {
    StmtPath path = LoopPath(*p, v);
    if (top.empty() || path.size() < top.size()) top = path;
  }
  TensorProgram next = *p;
  std::vector<Loop> chain;
  const Loop* cur = &next.At(top).AsLoop();
  if (!wanted.count(cur->var)) throw Error("reorder: loops are not a contiguous perfect nest");
  while (true) {
    chain.push_back(Loop{cur->var, cur->extent, cur->kind, {}});
    if (chain.size() == vars.size()) break;
    if (cur->body.size() != 1 || !cur->body[0].IsLoop() || !wanted.count(cur->body[0].AsLoop().var)) {
      throw Error("reorder: loops are not a contiguous perfect nest");
    }
    cur = &cur->body[0].AsLoop();
  }
  std::vector<Stmt> body = cur->body;
  for (size_t t = vars.size(); t-- > 0;) {
    auto it = std::find_if(chain.begin(), chain.end(), [&](const Loop& l) { return l.var == vars[t]; });
    body = {MakeLoop(it->var, it->extent, std::move(body), it->kind)};
  }
  next.At(top) = std::move(body[0]);
  Commit(p, std::move(next), "reorder");
}

// ---------------------------------------------------------------------------
// compute_at / inline
// ---------------------------------------------------------------------------

void ComputeAtLoop(TensorProgram* p, const std::string& block, const std::string& loop_var, NameSupply* names) {
  auto cp = FindCounterpart(*p, block);
  if (!cp) throw Error("compute_at: block " + block + " has no unique producer or consumer");
  if (!OwnsLoopNest(*p, block)) throw Error("compute_at: block " + block + " does not own its loop nest");
  LeafInfo me = RequireLeaf(*p, block);
  LeafInfo other = RequireLeaf(*p, cp->block);
  size_t li = other.loops.size();
  for (size_t t = 0; t < other.loops.size(); ++t) {
    if (other.loops[t]->var == loop_var) li = t;
  }
  if (li == other.loops.size()) {
    throw Error("compute_at: loop " + loop_var + " does not enclose block " + cp->block);
  }
  std::set<std::string> inner;
  std::map<std::string, int64_t> extent;
  for (size_t t = li + 1; t < other.loops.size(); ++t) {
    inner.insert(other.loops[t]->var);
    extent[other.loops[t]->var] = other.loops[t]->extent;
  }
  if (!me.stmt->IsCompute() || me.stmt->AsCompute().init) {
    throw Error("compute_at: block " + block + " is not data-parallel");
  }
  Stmt leaf = *me.stmt;
  std::vector<std::pair<std::string, int64_t>> new_loops;
  std::map<std::string, Expr> vmap;

  if (cp->is_consumer) {
    if (!other.stmt->IsCompute() && !other.stmt->IsIntrinsic()) throw Error("compute_at: bad producer");
    const std::string& produced = WrittenBuffer(*other.stmt);
    std::vector<std::string> at_dim = PureReadVars(*p, me, produced, "compute_at");
    for (const std::string& r : ReductionVars(*other.stmt, other.loops)) {
      if (!inner.count(r)) {
        throw Error("compute_at: reduction loop " + r + " of " + cp->block + " is outside " + loop_var);
      }
    }
    if (!other.stmt->IsCompute()) throw Error("compute_at: producer " + cp->block + " is an intrinsic");
    const std::vector<Expr>& store = other.stmt->AsCompute().indices;
    std::set<std::string> seen;
    for (size_t d = 0; d < store.size(); ++d) {
      auto split = SplitLinear(store[d], inner);
      if (!split) throw Error("compute_at: non-affine region of " + produced);
      std::vector<std::pair<int64_t, std::string>> terms;
      for (auto& [v, c] : split->coef) {
        if (extent[v] == 1) continue;
        if (c <= 0 || !seen.insert(v).second) throw Error("compute_at: region of " + produced + " is not a box");
        terms.push_back({c, v});
      }
      std::sort(terms.begin(), terms.end());
      int64_t span = 1;
      for (auto& [c, v] : terms) {
        if (c != span) throw Error("compute_at: region of " + produced + " is not dense under " + loop_var);
        span *= extent[v];
      }
      Expr value = split->outer;
      if (span > 1) {
        std::string u = names->Fresh(at_dim[d]);
        new_loops.push_back({u, span});
        value = Add(value, VarRef(u));
      }
      vmap[at_dim[d]] = value;
    }
  } else {
    const std::string& produced = leaf.AsCompute().buffer;
    if (!IsElementwise(*p, block)) throw Error("compute_at: producer " + block + " is not elementwise");
    if (!other.stmt->IsCompute()) throw Error("compute_at: consumer " + cp->block + " is an intrinsic");
    const Buffer* b = p->FindBuffer(produced);
    size_t rank = b->shape.size();
    for (size_t d = 0; d < rank; ++d) {
      if (FindLoop(*p, leaf.AsCompute().indices[d]->name).extent != b->shape[d]) {
        throw Error("compute_at: producer " + block + " does not cover " + produced);
      }
    }
    std::vector<Expr> outer(rank);
    std::vector<int64_t> lo(rank, 0), hi(rank, 0);
    bool first = true;
    for (const Expr& e : LeafExprs(*other.stmt)) {
      std::vector<const ExprNode*> loads;
      CollectLoads(e, &loads);
      for (const ExprNode* l : loads) {
        if (l->name != produced) continue;
        for (size_t d = 0; d < rank; ++d) {
          auto split = SplitLinear(l->args[d], inner);
          if (!split) throw Error("compute_at: non-affine access to " + produced);
          int64_t a = 0, z = 0;
          for (auto& [v, c] : split->coef) {
            a += std::min<int64_t>(0, c * (extent[v] - 1));
            z += std::max<int64_t>(0, c * (extent[v] - 1));
          }
          if (first) {
            outer[d] = split->outer;
            lo[d] = a;
            hi[d] = z;
          } else {
            if (!ExprEqual(outer[d], split->outer)) {
              throw Error("compute_at: accesses to " + produced + " differ outside " + loop_var);
            }
            lo[d] = std::min(lo[d], a);
            hi[d] = std::max(hi[d], z);
          }
        }
        first = false;
      }
    }
    const std::vector<Expr>& store = leaf.AsCompute().indices;
    for (size_t d = 0; d < rank; ++d) {
      Expr value = Add(outer[d], IntImm(lo[d]));
      int64_t span = hi[d] - lo[d] + 1;
      if (span > 1) {
        std::string u = names->Fresh(store[d]->name);
        new_loops.push_back({u, span});
        value = Add(value, VarRef(u));
      }
      vmap[store[d]->name] = value;
    }
  }

  SubstituteLeaf(&leaf, vmap);
  std::vector<Stmt> nest = {leaf};
  for (size_t t = new_loops.size(); t-- > 0;) nest = {MakeLoop(new_loops[t].first, new_loops[t].second, nest)};

  TensorProgram next = *p;
  StmtPath root = NestRootPath(me);
  next.root.erase(next.root.begin() + static_cast<std::ptrdiff_t>(root[0]));
  Loop& target = next.At(LoopPath(next, loop_var)).AsLoop();
  if (cp->is_consumer) {
    target.body.push_back(std::move(nest[0]));
  } else {
    target.body.insert(target.body.begin(), std::move(nest[0]));
  }
  Commit(p, std::move(next), "compute_at");
}

void InlineBlock(TensorProgram* p, const std::string& block) {
  if (!IsElementwise(*p, block)) throw Error("inline: block " + block + " is not elementwise");
  LeafInfo me = RequireLeaf(*p, block);
  const Compute& mine = me.stmt->AsCompute();
  const Buffer* out = p->FindBuffer(mine.buffer);
  TensorProgram next = *p;

  std::vector<std::string> readers = ReadersOf(*p, mine.buffer);
  if (out->role == BufferRole::kIntermediate && readers.size() == 1) {
    LeafInfo consumer = RequireLeaf(*p, readers[0]);
    if (!consumer.stmt->IsCompute()) throw Error("inline: consumer " + readers[0] + " is an intrinsic");
    auto body = [&](const std::vector<Expr>& idx) {
      std::map<std::string, Expr> vmap;
      for (size_t d = 0; d < idx.size(); ++d) vmap[mine.indices[d]->name] = idx[d];
      return Substitute(mine.value, vmap);
    };
    Compute& c = next.At(consumer.path).AsCompute();
    c.value = ReplaceLoads(c.value, mine.buffer, body);
    if (c.init) c.init = ReplaceLoads(*c.init, mine.buffer, body);
    if (c.epilogue) c.epilogue = ReplaceLoads(*c.epilogue, mine.buffer, body);
    RemoveLeaf(&next, block);
    RemoveBuffer(&next, mine.buffer);
    Commit(p, std::move(next), "inline");
    return;
  }
  if (readers.size() > 1) throw Error("inline: block " + block + " has multiple consumers");

  auto cp = FindCounterpart(*p, block);
  if (!cp || !cp->is_consumer) throw Error("inline: block " + block + " has no unique producer to fold into");
  LeafInfo producer = RequireLeaf(*p, cp->block);
  if (!producer.stmt->IsCompute()) throw Error("inline: producer " + cp->block + " is an intrinsic");
  const Compute& prod = producer.stmt->AsCompute();
  const std::string& mid = prod.buffer;
  std::vector<std::string> at_dim = PureReadVars(*p, me, mid, "inline");
  std::map<std::string, Expr> vmap;
  for (size_t d = 0; d < at_dim.size(); ++d) vmap[at_dim[d]] = prod.indices[d];
  std::vector<Expr> new_index = SubstAll(mine.indices, vmap);
  Expr folded = Substitute(mine.value, vmap);

  Compute& c = next.At(producer.path).AsCompute();
  if (!c.init) {
    c.value = ReplaceLoads(folded, mid, [&](const std::vector<Expr>&) { return prod.value; });
  } else {
    Expr result = Load(mine.buffer, new_index);
    Expr reduced = c.epilogue ? ReplaceLoads(*c.epilogue, mid, [&](const std::vector<Expr>&) { return result; })
                              : result;
    c.epilogue = ReplaceLoads(folded, mid, [&](const std::vector<Expr>&) { return reduced; });
    c.value = ReplaceLoads(c.value, mid, [&](const std::vector<Expr>&) { return result; });
  }
  c.buffer = mine.buffer;
  c.indices = new_index;
  RemoveLeaf(&next, block);
  RemoveBuffer(&next, mid);
  Commit(p, std::move(next), "inline");
}

// ---------------------------------------------------------------------------
// annotations
// ---------------------------------------------------------------------------

namespace {

void SetKind(TensorProgram* p, const std::string& var, LoopKind kind) {
  TensorProgram next = *p;
  next.At(LoopPath(next, var)).AsLoop().kind = kind;
  *p = std::move(next);
}

}  // namespace

void ParallelizeLoop(TensorProgram* p, const std::string& var) {
  if (!IsDataParallelLoop(*p, var)) throw Error("parallel: loop " + var + " has a reduction-carried dependence");
  SetKind(p, var, LoopKind::kParallel);
}

void VectorizeLoop(TensorProgram* p, const std::string& var) {
  const Loop& l = FindLoop(*p, var);
  if (!IsDataParallelLoop(*p, var)) throw Error("vectorize: loop " + var + " has a reduction-carried dependence");
  for (const Stmt& s : l.body) {
    if (s.IsLoop()) throw Error("vectorize: loop " + var + " is not innermost");
  }
  SetKind(p, var, LoopKind::kVectorized);
}

void UnrollLoop(TensorProgram* p, const std::string& var) {
  const Loop& l = FindLoop(*p, var);
  if (l.extent > 64) throw Error("unroll: extent " + std::to_string(l.extent) + " of " + var + " exceeds 64");
  SetKind(p, var, LoopKind::kUnrolled);
}

// ---------------------------------------------------------------------------
// tensorize
// ---------------------------------------------------------------------------

void TensorizeLoop(TensorProgram* p, const std::string& var, const std::string& intrinsic) {
  if (intrinsic != "tu.mma4") throw Error("tensorize: unknown intrinsic " + intrinsic);
  auto fail = [](const std::string& why) { return Error("tensorize: pattern mismatch: " + why); };
  TensorProgram next = *p;
  StmtPath path = LoopPath(next, var);
  std::vector<const Loop*> tile = {&next.At(path).AsLoop()};
  while (tile.size() < 3) {
    const Loop* l = tile.back();
    if (l->body.size() != 1 || !l->body[0].IsLoop()) throw fail("loop " + l->var + " does not hold a 3-deep nest");
    tile.push_back(&l->body[0].AsLoop());
  }
  for (const Loop* l : tile) {
    if (l->extent != 4) throw fail("loop " + l->var + " has extent " + std::to_string(l->extent) + ", expected 4");
  }
  const Loop* last = tile.back();
  if (last->body.size() != 1 || !last->body[0].IsCompute()) throw fail("innermost body is not a single block");
  const Compute& c = last->body[0].AsCompute();
  if (!c.init || (*c.init)->kind != ExprKind::kInt) throw fail("block " + c.block + " has no constant init");
  if (c.epilogue) throw fail("block " + c.block + " has an epilogue");
  const Expr& rhs = c.value->args[1];
  if (rhs->kind != ExprKind::kMul || rhs->args[0]->kind != ExprKind::kLoad || rhs->args[1]->kind != ExprKind::kLoad) {
    throw fail("update is not a product of two loads");
  }
  if (c.indices.size() != 2) throw fail("output is not 2-D");
  std::set<std::string> tv = {tile[0]->var, tile[1]->var, tile[2]->var};

  // base + unit offset of exactly one tile variable per dimension
  struct Dim {
    Expr base;
    std::string var;
  };
  auto dims = [&](const std::vector<Expr>& index, const std::string& what) {
    if (index.size() != 2) throw fail(what + " is not 2-D");
    std::vector<Dim> out;
    for (const Expr& e : index) {
      auto s = SplitLinear(e, tv);
      if (!s || s->coef.size() != 1 || s->coef.begin()->second != 1) {
        throw fail(what + " index " + ExprToString(e) + " is not base + tile variable");
      }
      out.push_back({s->outer, s->coef.begin()->first});
    }
    return out;
  };
  std::vector<Dim> cd = dims(c.indices, c.buffer);
  const ExprNode* x = rhs->args[0].get();
  const ExprNode* y = rhs->args[1].get();
  std::vector<Dim> xd = dims(x->args, x->name);
  std::vector<Dim> yd = dims(y->args, y->name);
  if (xd[0].var != cd[0].var) {
    std::swap(x, y);
    std::swap(xd, yd);
  }
  std::string i = cd[0].var, j = cd[1].var;
  if (i == j) throw fail("output uses one tile variable twice");
  std::string k;
  for (const std::string& v : tv) {
    if (v != i && v != j) k = v;
  }
  if (xd[0].var != i || xd[1].var != k) throw fail("operand " + x->name + " is not indexed [i, k]");
  if (yd[0].var != k || yd[1].var != j) throw fail("operand " + y->name + " is not indexed [k, j]");

  Intrinsic in;
  in.name = intrinsic;
  in.block = c.block;
  in.operands = {{c.buffer, {cd[0].base, cd[1].base}},
                 {x->name, {xd[0].base, xd[1].base}},
                 {y->name, {yd[0].base, yd[1].base}}};
  in.init = c.init;
  next.At(path) = Stmt{std::move(in)};
  Commit(p, std::move(next), "tensorize");
}

}  // namespace metasched
