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
 * \file interpreter.cc
 * \brief Reference interpreter. The program is first lowered to a slot-indexed
 *  tree so that the hot loop does not touch strings.
 */
#include "metasched/interpreter.h"

#include <algorithm>
#include <random>
#include <sstream>

#include "metasched/analysis.h"

namespace metasched {

namespace {

constexpr int kMaxLanes = 16;

struct Node {
  ExprKind kind = ExprKind::kInt;
  int64_t value = 0;
  int slot = -1;
  int buffer = -1;
  std::vector<Node> args;
  // set when the node is an affine function of loop variables: aff_const + sum(coeff * env[slot])
  bool affine = false;
  int64_t aff_const = 0;
  std::vector<std::pair<int, int64_t>> aff_terms;
};

void AddTerms(std::vector<std::pair<int, int64_t>>* out, const std::vector<std::pair<int, int64_t>>& terms,
              int64_t scale) {
  for (const auto& [slot, coeff] : terms) {
    auto it = std::find_if(out->begin(), out->end(), [&](const auto& t) { return t.first == slot; });
    if (it == out->end()) {
      out->emplace_back(slot, coeff * scale);
    } else {
      it->second += coeff * scale;
    }
  }
  out->erase(std::remove_if(out->begin(), out->end(), [](const auto& t) { return t.second == 0; }), out->end());
}

void FoldAffine(Node* n) {
  switch (n->kind) {
    case ExprKind::kInt:
      n->affine = true;
      n->aff_const = n->value;
      return;
    case ExprKind::kVar:
      n->affine = true;
      n->aff_terms = {{n->slot, 1}};
      return;
    case ExprKind::kAdd:
    case ExprKind::kSub: {
      const Node& a = n->args[0];
      const Node& b = n->args[1];
      if (!a.affine || !b.affine) return;
      int64_t sign = n->kind == ExprKind::kAdd ? 1 : -1;
      n->affine = true;
      n->aff_const = a.aff_const + sign * b.aff_const;
      AddTerms(&n->aff_terms, a.aff_terms, 1);
      AddTerms(&n->aff_terms, b.aff_terms, sign);
      return;
    }
    case ExprKind::kMul: {
      const Node& a = n->args[0];
      const Node& b = n->args[1];
      if (!a.affine || !b.affine) return;
      const Node* scalar = a.aff_terms.empty() ? &a : (b.aff_terms.empty() ? &b : nullptr);
      if (!scalar) return;
      const Node& other = scalar == &a ? b : a;
      n->affine = true;
      n->aff_const = other.aff_const * scalar->aff_const;
      AddTerms(&n->aff_terms, other.aff_terms, scalar->aff_const);
      return;
    }
    default:
      return;
  }
}

struct Leaf {
  bool intrinsic = false;
  std::string block;
  int buffer = -1;
  std::vector<Node> indices;
  Node value;
  bool has_init = false;
  Node init;
  bool has_epilogue = false;
  Node epilogue;
  std::vector<int> red_slots;
  std::vector<int64_t> red_last;
  // intrinsic operands: C, A, B
  std::vector<int> op_buffers;
  std::vector<std::vector<Node>> op_bases;
};

struct CStmt {
  bool is_loop = false;
  int slot = -1;
  int64_t extent = 0;
  std::vector<CStmt> body;
  Leaf leaf;
};

struct BufferData {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<int64_t> strides;
  std::vector<int64_t> data;  // element-major, lanes innermost
};

class Machine {
 public:
  Machine(const TensorProgram& p, int lanes) : lanes_(lanes) {
    for (const Buffer& b : p.buffers) {
      BufferData d;
      d.name = b.name;
      d.shape = b.shape;
      d.strides.assign(b.shape.size(), 1);
      for (size_t i = b.shape.size(); i-- > 1;) d.strides[i - 1] = d.strides[i] * b.shape[i];
      d.data.assign(static_cast<size_t>(b.NumElements()) * lanes_, 0);
      buffer_index_[b.name] = static_cast<int>(buffers_.size());
      buffers_.push_back(std::move(d));
    }
    std::vector<const Loop*> loops;
    program_ = Lower(p.root, &loops);
    env_.assign(slots_.size(), 0);
  }

  void SetInput(const std::string& name, int lane, const TensorValue& v) {
    BufferData& b = buffers_[buffer_index_.at(name)];
    if (v.shape != b.shape) throw Error("input " + name + " has the wrong shape");
    if (v.data.size() * lanes_ != b.data.size()) throw Error("input " + name + " has the wrong size");
    for (size_t i = 0; i < v.data.size(); ++i) b.data[i * lanes_ + lane] = v.data[i];
  }

  TensorValue Get(const std::string& name, int lane) const {
    const BufferData& b = buffers_[buffer_index_.at(name)];
    TensorValue v;
    v.shape = b.shape;
    v.data.resize(b.data.size() / lanes_);
    for (size_t i = 0; i < v.data.size(); ++i) v.data[i] = b.data[i * lanes_ + lane];
    return v;
  }

  void Execute() { ExecStmts(program_); }

 private:
  int SlotOf(const std::string& var) {
    auto it = slot_index_.find(var);
    if (it != slot_index_.end()) return it->second;
    int s = static_cast<int>(slots_.size());
    slots_.push_back(var);
    slot_index_[var] = s;
    return s;
  }

  Node LowerExpr(const Expr& e) {
    Node n;
    n.kind = e->kind;
    n.value = e->value;
    if (e->kind == ExprKind::kVar) n.slot = SlotOf(e->name);
    if (e->kind == ExprKind::kLoad) n.buffer = buffer_index_.at(e->name);
    for (const Expr& a : e->args) n.args.push_back(LowerExpr(a));
    FoldAffine(&n);
    return n;
  }

  std::vector<Node> LowerExprs(const std::vector<Expr>& es) {
    std::vector<Node> out;
    for (const Expr& e : es) out.push_back(LowerExpr(e));
    return out;
  }

  std::vector<CStmt> Lower(const std::vector<Stmt>& stmts, std::vector<const Loop*>* loops) {
    std::vector<CStmt> out;
    for (const Stmt& s : stmts) {
      CStmt c;
      if (s.IsLoop()) {
        const Loop& l = s.AsLoop();
        c.is_loop = true;
        c.slot = SlotOf(l.var);
        c.extent = l.extent;
        loops->push_back(&l);
        c.body = Lower(l.body, loops);
        loops->pop_back();
      } else {
        Leaf& leaf = c.leaf;
        leaf.block = s.BlockName();
        for (const std::string& v : ReductionVars(s, *loops)) {
          leaf.red_slots.push_back(SlotOf(v));
          for (const Loop* l : *loops) {
            if (l->var == v) leaf.red_last.push_back(l->extent - 1);
          }
        }
        if (s.IsCompute()) {
          const Compute& comp = s.AsCompute();
          leaf.buffer = buffer_index_.at(comp.buffer);
          leaf.indices = LowerExprs(comp.indices);
          leaf.value = LowerExpr(comp.value);
          if (comp.init) {
            leaf.has_init = true;
            leaf.init = LowerExpr(*comp.init);
          }
          if (comp.epilogue) {
            leaf.has_epilogue = true;
            leaf.epilogue = LowerExpr(*comp.epilogue);
          }
        } else {
          const Intrinsic& in = s.AsIntrinsic();
          leaf.intrinsic = true;
          for (const Operand& op : in.operands) {
            leaf.op_buffers.push_back(buffer_index_.at(op.buffer));
            leaf.op_bases.push_back(LowerExprs(op.base));
          }
          if (in.init) {
            leaf.has_init = true;
            leaf.init = LowerExpr(*in.init);
          }
        }
      }
      out.push_back(std::move(c));
    }
    return out;
  }

  int64_t Index(const Node& n) const {
    if (n.affine) {
      int64_t v = n.aff_const;
      for (const auto& [slot, coeff] : n.aff_terms) v += coeff * env_[slot];
      return v;
    }
    switch (n.kind) {
      case ExprKind::kInt: return n.value;
      case ExprKind::kVar: return env_[n.slot];
      case ExprKind::kAdd: return Index(n.args[0]) + Index(n.args[1]);
      case ExprKind::kSub: return Index(n.args[0]) - Index(n.args[1]);
      case ExprKind::kMul: return Index(n.args[0]) * Index(n.args[1]);
      case ExprKind::kFloorDiv: return FloorDivInt(Index(n.args[0]), Index(n.args[1]));
      case ExprKind::kFloorMod: return FloorModInt(Index(n.args[0]), Index(n.args[1]));
      case ExprKind::kMax: return std::max(Index(n.args[0]), Index(n.args[1]));
      case ExprKind::kMin: return std::min(Index(n.args[0]), Index(n.args[1]));
      case ExprKind::kLt: return Index(n.args[0]) < Index(n.args[1]) ? 1 : 0;
      case ExprKind::kSelect: return Index(n.args[0]) != 0 ? Index(n.args[1]) : Index(n.args[2]);
      case ExprKind::kLoad: break;
    }
    throw Error("data-dependent index expression");
  }

  [[noreturn]] void OutOfBounds(const BufferData& b, const std::vector<int64_t>& idx) const {
    std::ostringstream os;
    os << "out-of-bounds access " << b.name << "[";
    for (size_t i = 0; i < idx.size(); ++i) os << (i ? ", " : "") << idx[i];
    os << "] (shape";
    for (int64_t s : b.shape) os << " " << s;
    os << ")";
    throw Error(os.str());
  }

  int64_t Address(const BufferData& b, const std::vector<Node>& index, int64_t offset_per_dim = 0,
                  const int64_t* extra = nullptr) const {
    int64_t flat = 0;
    for (size_t d = 0; d < index.size(); ++d) {
      int64_t i = Index(index[d]) + (extra ? extra[d] : offset_per_dim);
      if (i < 0 || i >= b.shape[d]) {
        std::vector<int64_t> idx;
        for (size_t k = 0; k < index.size(); ++k) {
          idx.push_back(Index(index[k]) + (extra ? extra[k] : offset_per_dim));
        }
        OutOfBounds(b, idx);
      }
      flat += i * b.strides[d];
    }
    return flat;
  }

  // Evaluates n for lanes [lo, hi) into out[lo..hi).
  void Eval(const Node& n, int64_t* out, int lo, int hi) const {
    switch (n.kind) {
      case ExprKind::kInt:
        std::fill(out + lo, out + hi, n.value);
        return;
      case ExprKind::kVar:
        std::fill(out + lo, out + hi, env_[n.slot]);
        return;
      case ExprKind::kLoad: {
        const BufferData& b = buffers_[n.buffer];
        int64_t base = Address(b, n.args) * lanes_;
        for (int l = lo; l < hi; ++l) out[l] = b.data[base + l];
        return;
      }
      case ExprKind::kSelect: {
        int64_t cond[kMaxLanes];
        Eval(n.args[0], cond, lo, hi);
        bool uniform = true;
        for (int l = lo + 1; l < hi; ++l) uniform = uniform && ((cond[l] != 0) == (cond[lo] != 0));
        if (uniform) {
          Eval(n.args[cond[lo] != 0 ? 1 : 2], out, lo, hi);
        } else {
          for (int l = lo; l < hi; ++l) Eval(n.args[cond[l] != 0 ? 1 : 2], out, l, l + 1);
        }
        return;
      }
      default:
        break;
    }
    int64_t rhs[kMaxLanes];
    Eval(n.args[0], out, lo, hi);
    Eval(n.args[1], rhs, lo, hi);
    for (int l = lo; l < hi; ++l) {
      int64_t a = out[l], b = rhs[l];
      switch (n.kind) {
        case ExprKind::kAdd: out[l] = a + b; break;
        case ExprKind::kSub: out[l] = a - b; break;
        case ExprKind::kMul: out[l] = a * b; break;
        case ExprKind::kFloorDiv:
          if (b == 0) throw Error("division by zero");
          out[l] = FloorDivInt(a, b);
          break;
        case ExprKind::kFloorMod:
          if (b == 0) throw Error("division by zero");
          out[l] = FloorModInt(a, b);
          break;
        case ExprKind::kMax: out[l] = std::max(a, b); break;
        case ExprKind::kMin: out[l] = std::min(a, b); break;
        case ExprKind::kLt: out[l] = a < b ? 1 : 0; break;
        default: break;
      }
    }
  }

  bool AllAt(const Leaf& leaf, bool last) const {
    for (size_t i = 0; i < leaf.red_slots.size(); ++i) {
      if (env_[leaf.red_slots[i]] != (last ? leaf.red_last[i] : 0)) return false;
    }
    return true;
  }

  void ExecCompute(const Leaf& leaf) {
    BufferData& b = buffers_[leaf.buffer];
    int64_t base = Address(b, leaf.indices) * lanes_;
    int64_t tmp[kMaxLanes];
    if (leaf.has_init && AllAt(leaf, false)) {
      Eval(leaf.init, tmp, 0, lanes_);
      std::copy(tmp, tmp + lanes_, b.data.begin() + base);
    }
    Eval(leaf.value, tmp, 0, lanes_);
    std::copy(tmp, tmp + lanes_, b.data.begin() + base);
    if (leaf.has_epilogue && AllAt(leaf, true)) {
      Eval(leaf.epilogue, tmp, 0, lanes_);
      std::copy(tmp, tmp + lanes_, b.data.begin() + base);
    }
  }

  void ExecIntrinsic(const Leaf& leaf) {
    BufferData& c = buffers_[leaf.op_buffers[0]];
    const BufferData& a = buffers_[leaf.op_buffers[1]];
    const BufferData& bb = buffers_[leaf.op_buffers[2]];
    if (leaf.has_init && AllAt(leaf, false)) {
      int64_t init[kMaxLanes];
      Eval(leaf.init, init, 0, lanes_);
      for (int64_t i = 0; i < 4; ++i) {
        for (int64_t j = 0; j < 4; ++j) {
          int64_t off[2] = {i, j};
          int64_t ca = Address(c, leaf.op_bases[0], 0, off) * lanes_;
          for (int l = 0; l < lanes_; ++l) c.data[ca + l] = init[l];
        }
      }
    }
    for (int64_t i = 0; i < 4; ++i) {
      for (int64_t j = 0; j < 4; ++j) {
        int64_t coff[2] = {i, j};
        int64_t ca = Address(c, leaf.op_bases[0], 0, coff) * lanes_;
        for (int64_t k = 0; k < 4; ++k) {
          int64_t aoff[2] = {i, k};
          int64_t boff[2] = {k, j};
          int64_t aa = Address(a, leaf.op_bases[1], 0, aoff) * lanes_;
          int64_t ba = Address(bb, leaf.op_bases[2], 0, boff) * lanes_;
          for (int l = 0; l < lanes_; ++l) c.data[ca + l] += a.data[aa + l] * bb.data[ba + l];
        }
      }
    }
  }

  void ExecStmts(const std::vector<CStmt>& stmts) {
    for (const CStmt& s : stmts) {
      if (s.is_loop) {
        for (int64_t i = 0; i < s.extent; ++i) {
          env_[s.slot] = i;
          ExecStmts(s.body);
        }
      } else if (s.leaf.intrinsic) {
        ExecIntrinsic(s.leaf);
      } else {
        ExecCompute(s.leaf);
      }
    }
  }

  int lanes_;
  std::vector<BufferData> buffers_;
  std::map<std::string, int> buffer_index_;
  std::vector<std::string> slots_;
  std::map<std::string, int> slot_index_;
  std::vector<int64_t> env_;
  std::vector<CStmt> program_;
};

std::vector<TensorMap> RunChunk(const TensorProgram& p, const std::vector<TensorMap>& inputs,
                                size_t begin, size_t end) {
  int lanes = static_cast<int>(end - begin);
  Machine m(p, lanes);
  for (const Buffer& b : p.buffers) {
    if (b.role != BufferRole::kInput) continue;
    for (size_t k = begin; k < end; ++k) {
      auto it = inputs[k].find(b.name);
      if (it == inputs[k].end()) throw Error("missing input " + b.name);
      m.SetInput(b.name, static_cast<int>(k - begin), it->second);
    }
  }
  m.Execute();
  std::vector<TensorMap> out(lanes);
  for (const Buffer& b : p.buffers) {
    if (b.role != BufferRole::kOutput) continue;
    for (int l = 0; l < lanes; ++l) out[l][b.name] = m.Get(b.name, l);
  }
  return out;
}

}  // namespace

std::vector<TensorMap> RunBatch(const TensorProgram& p, const std::vector<TensorMap>& inputs) {
  std::vector<TensorMap> out;
  for (size_t begin = 0; begin < inputs.size(); begin += kMaxLanes) {
    size_t end = std::min(inputs.size(), begin + kMaxLanes);
    for (TensorMap& m : RunChunk(p, inputs, begin, end)) out.push_back(std::move(m));
  }
  return out;
}

TensorMap Run(const TensorProgram& p, const TensorMap& inputs) { return RunBatch(p, {inputs})[0]; }

TensorMap RandomInputs(const TensorProgram& p, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> dist(-8, 8);
  TensorMap out;
  for (const Buffer& b : p.buffers) {
    if (b.role != BufferRole::kInput) continue;
    TensorValue v;
    v.shape = b.shape;
    v.data.resize(static_cast<size_t>(b.NumElements()));
    for (int64_t& x : v.data) x = dist(rng);
    out[b.name] = std::move(v);
  }
  return out;
}

}  // namespace metasched
