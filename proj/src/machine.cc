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
 * \file machine.cc
 */
#include "metasched/machine.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_map>

#include "metasched/analysis.h"

namespace metasched {

void MachineSpec::Validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw Error(std::string("machine spec: ") + name + " must be positive");
  };
  positive(static_cast<double>(cores), "cores");
  positive(static_cast<double>(vector_lanes), "vector_lanes");
  positive(static_cast<double>(cache_capacity), "cache_capacity");
  positive(hit_cost, "hit_cost");
  positive(miss_cost, "miss_cost");
  positive(flop_cost, "flop_cost");
  positive(static_cast<double>(unroll_max_extent), "unroll_max_extent");
  positive(tensor_unit_cost, "tensor_unit_cost");
  if (!(unroll_discount > 0 && unroll_discount <= 1)) {
    throw Error("machine spec: unroll_discount must lie in (0, 1]");
  }
}

MachineSpec MachineSpecFromJson(const Json& j) {
  if (!j.is_object()) throw Error("machine spec: expected a JSON object");
  MachineSpec spec;
  for (const auto& [key, value] : j.items()) {
    auto integer = [&, &key = key, &value = value](int64_t* out) {
      if (!value.is_number_integer()) throw Error("machine spec: " + key + " must be an integer");
      *out = value.get<int64_t>();
    };
    auto number = [&, &key = key, &value = value](double* out) {
      if (!value.is_number()) throw Error("machine spec: " + key + " must be a number");
      *out = value.get<double>();
    };
    if (key == "cores") {
      integer(&spec.cores);
    } else if (key == "vector_lanes") {
      integer(&spec.vector_lanes);
    } else if (key == "cache_capacity") {
      integer(&spec.cache_capacity);
    } else if (key == "hit_cost") {
      number(&spec.hit_cost);
    } else if (key == "miss_cost") {
      number(&spec.miss_cost);
    } else if (key == "flop_cost") {
      number(&spec.flop_cost);
    } else if (key == "unroll_discount") {
      number(&spec.unroll_discount);
    } else if (key == "unroll_max_extent") {
      integer(&spec.unroll_max_extent);
    } else if (key == "tensor_unit_cost") {
      number(&spec.tensor_unit_cost);
    } else {
      throw Error("machine spec: unknown key " + key);
    }
  }
  spec.Validate();
  return spec;
}

Json MachineSpecToJson(const MachineSpec& spec) {
  return Json{{"cores", spec.cores},
              {"vector_lanes", spec.vector_lanes},
              {"cache_capacity", spec.cache_capacity},
              {"hit_cost", spec.hit_cost},
              {"miss_cost", spec.miss_cost},
              {"flop_cost", spec.flop_cost},
              {"unroll_discount", spec.unroll_discount},
              {"unroll_max_extent", spec.unroll_max_extent},
              {"tensor_unit_cost", spec.tensor_unit_cost}};
}

namespace {

using Box = std::vector<IntRange>;

/*! \brief Bounding box of one access with loops [q, end) free and the rest at 0. */
Box AccessBox(const Access& a, const std::vector<const Loop*>& loops, size_t q, const TensorProgram& p) {
  std::map<std::string, IntRange> env;
  for (size_t k = q; k < loops.size(); ++k) env[loops[k]->var] = {0, loops[k]->extent - 1};
  const Buffer* buf = p.FindBuffer(a.buffer);
  Box box;
  for (size_t d = 0; d < a.index.size(); ++d) {
    IntRange r = BoundOf(a.index[d], env);
    r.hi += a.span - 1;
    if (buf != nullptr && d < buf->shape.size()) {
      r.lo = std::max<int64_t>(r.lo, 0);
      r.hi = std::min<int64_t>(r.hi, buf->shape[d] - 1);
      if (r.hi < r.lo) r.hi = r.lo;
    }
    box.push_back(r);
  }
  return box;
}

int64_t BoxSize(const Box& box) {
  int64_t n = 1;
  for (const IntRange& r : box) n *= r.Size();
  return n;
}

/*! \brief Accesses of a leaf with the number of times each runs per leaf execution. */
struct WeightedAccess {
  Access access;
  double weight;
};

std::vector<WeightedAccess> AllAccesses(const Stmt& leaf, double reduction_trips) {
  std::vector<WeightedAccess> out;
  for (const Access& a : LeafAccesses(leaf)) out.push_back({a, 1.0});
  if (leaf.IsCompute()) {
    const Compute& c = leaf.AsCompute();
    Access store{c.buffer, c.indices, 1, true};
    if (c.init) out.push_back({store, 1.0 / reduction_trips});
    if (c.epilogue) {
      std::vector<const ExprNode*> loads;
      CollectLoads(*c.epilogue, &loads);
      for (const ExprNode* l : loads) out.push_back({Access{l->name, l->args, 1, false}, 1.0 / reduction_trips});
      out.push_back({store, 1.0 / reduction_trips});
    }
  }
  return out;
}

std::map<std::string, int64_t> LevelFootprint(const std::vector<Access>& accesses, const std::vector<const Loop*>& loops,
                                              size_t q, const TensorProgram& p) {
  std::map<std::string, Box> boxes;
  for (const Access& a : accesses) {
    Box box = AccessBox(a, loops, q, p);
    auto it = boxes.find(a.buffer);
    if (it == boxes.end() || it->second.size() != box.size()) {
      boxes[a.buffer] = box;
      continue;
    }
    for (size_t d = 0; d < box.size(); ++d) {
      it->second[d].lo = std::min(it->second[d].lo, box[d].lo);
      it->second[d].hi = std::max(it->second[d].hi, box[d].hi);
    }
  }
  std::map<std::string, int64_t> out;
  for (const auto& [buffer, box] : boxes) out[buffer] = BoxSize(box);
  return out;
}

FootprintTable LeafFootprint(const LeafInfo& leaf, const TensorProgram& p) {
  FootprintTable table;
  for (const Loop* l : leaf.loops) table.loops.push_back(l->var);
  std::vector<Access> accesses = LeafAccesses(*leaf.stmt);
  for (size_t q = 0; q <= leaf.loops.size(); ++q) table.levels.push_back(LevelFootprint(accesses, leaf.loops, q, p));
  return table;
}

/*! \brief Per-execution cost of a leaf and the expected hits and misses per execution. */
struct LeafStats {
  double cost = 0;
  double hits = 0;
  double misses = 0;
};

LeafStats LeafCost(const LeafInfo& leaf, const TensorProgram& p, const MachineSpec& spec) {
  const Stmt& s = *leaf.stmt;
  double trips = 1;
  std::vector<std::string> rvars = ReductionVars(s, leaf.loops);
  for (const Loop* l : leaf.loops) {
    if (std::find(rvars.begin(), rvars.end(), l->var) != rvars.end()) trips *= static_cast<double>(l->extent);
  }
  if (s.IsIntrinsic()) {
    // 16 C + 16 A + 16 B operand elements, plus zeroing the C tile once per output tile
    double init = s.AsIntrinsic().init ? 16.0 / trips : 0.0;
    return {spec.tensor_unit_cost + (48.0 + init) * spec.hit_cost, 48.0 + init, 0.0};
  }
  const Compute& c = s.AsCompute();
  double flops = static_cast<double>(CountArithOps(c.value));
  if (c.init) flops += static_cast<double>(CountArithOps(*c.init)) / trips;
  if (c.epilogue) flops += static_cast<double>(CountArithOps(*c.epilogue)) / trips;

  FootprintTable table = LeafFootprint(leaf, p);
  size_t q = CacheSuffix(table, spec);
  double executions = 1;
  for (const Loop* l : leaf.loops) executions *= static_cast<double>(l->extent);

  LeafStats stats;
  double memory = 0;
  for (const WeightedAccess& wa : AllAccesses(s, trips)) {
    const Access& a = wa.access;
    // innermost loop above the suffix that moves this access
    size_t moving = 0;
    for (size_t k = 0; k < q; ++k) {
      for (const Expr& e : a.index) {
        if (DependsOn(e, leaf.loops[k]->var)) moving = k + 1;
      }
    }
    double miss_rate = 0;
    if (moving > 0) {
      double refetch = 1;
      for (size_t k = 0; k < moving; ++k) refetch *= static_cast<double>(leaf.loops[k]->extent);
      double misses = std::min(executions, static_cast<double>(BoxSize(AccessBox(a, leaf.loops, q, p))) * refetch);
      miss_rate = misses / executions;
    }
    memory += wa.weight * (spec.hit_cost + (spec.miss_cost - spec.hit_cost) * miss_rate);
    stats.hits += wa.weight * (1 - miss_rate);
    stats.misses += wa.weight * miss_rate;
  }
  stats.cost = spec.flop_cost * flops + memory;
  return stats;
}

void VisitLeaves(const std::vector<Stmt>& stmts, const std::function<void(const Stmt&)>& fn) {
  for (const Stmt& s : stmts) {
    if (s.IsLoop()) {
      VisitLeaves(s.AsLoop().body, fn);
    } else {
      fn(s);
    }
  }
}

/*! \brief Every access below `loop` that moves with its variable does so with unit stride in the last dimension. */
bool UnitStride(const Loop& loop) {
  bool ok = true;
  VisitLeaves(loop.body, [&](const Stmt& leaf) {
    for (const Access& a : LeafAccesses(leaf)) {
      if (a.index.empty()) continue;
      for (size_t d = 0; d + 1 < a.index.size(); ++d) ok = ok && !DependsOn(a.index[d], loop.var);
      const Expr& last = a.index.back();
      if (!DependsOn(last, loop.var)) continue;
      auto split = SplitLinear(last, {loop.var});
      ok = ok && a.span == 1 && split && split->coef.count(loop.var) && split->coef.at(loop.var) == 1;
    }
  });
  return ok;
}

class Simulator {
 public:
  Simulator(const TensorProgram& p, const MachineSpec& spec) : spec_(spec) {
    for (const LeafInfo& leaf : CollectLeaves(p)) leaf_cost_[leaf.stmt] = LeafCost(leaf, p, spec).cost;
  }

  double Cost(const std::vector<Stmt>& stmts, bool in_parallel) const {
    double total = 0;
    for (const Stmt& s : stmts) total += Cost(s, in_parallel);
    return total;
  }

 private:
  double Cost(const Stmt& s, bool in_parallel) const {
    if (!s.IsLoop()) return leaf_cost_.at(&s);
    const Loop& l = s.AsLoop();
    double e = static_cast<double>(l.extent);
    bool outer_parallel = l.kind == LoopKind::kParallel && !in_parallel;
    double body = Cost(l.body, in_parallel || l.kind == LoopKind::kParallel);
    switch (l.kind) {
      case LoopKind::kUnrolled:
        return l.extent <= spec_.unroll_max_extent ? e * body * spec_.unroll_discount : e * body;
      case LoopKind::kVectorized:
        return UnitStride(l) ? std::ceil(e / static_cast<double>(spec_.vector_lanes)) * body : e * body;
      case LoopKind::kParallel:
        return outer_parallel ? std::ceil(e / static_cast<double>(spec_.cores)) * body : e * body;
      default:
        return e * body;
    }
  }

  const MachineSpec& spec_;
  std::unordered_map<const Stmt*, double> leaf_cost_;
};

}  // namespace

int64_t FootprintTable::Total(size_t q) const {
  int64_t total = 0;
  for (const auto& [buffer, n] : levels.at(q)) total += n;
  return total;
}

FootprintTable Footprint(const TensorProgram& p, const std::string& block) {
  auto leaf = FindLeaf(p, block);
  if (!leaf) throw Error("footprint: no block named " + block);
  return LeafFootprint(*leaf, p);
}

size_t CacheSuffix(const FootprintTable& table, const MachineSpec& spec) {
  for (size_t q = 0; q < table.levels.size(); ++q) {
    if (table.Total(q) <= spec.cache_capacity) return q;
  }
  return table.levels.size() - 1;
}

std::vector<LeafAccessStats> AccessStats(const TensorProgram& p, const MachineSpec& spec) {
  std::vector<LeafAccessStats> out;
  for (const LeafInfo& leaf : CollectLeaves(p)) {
    LeafStats st = LeafCost(leaf, p, spec);
    double executions = 1;
    for (const Loop* l : leaf.loops) executions *= static_cast<double>(l->extent);
    out.push_back({executions * st.hits, executions * st.misses});
  }
  return out;
}

double SimulateLatency(const TensorProgram& p, const MachineSpec& spec) {
  spec.Validate();
  return Simulator(p, spec).Cost(p.root, false);
}

}  // namespace metasched
