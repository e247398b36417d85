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
 * \file schedule.cc
 * \brief Traced schedule primitives and sampling.
 */
#include "metasched/schedule.h"

#include <cmath>

#include "metasched/analysis.h"

namespace metasched {

namespace {

void Factorize(int64_t rest, int n, std::vector<int64_t>* cur, std::vector<std::vector<int64_t>>* out) {
  if (n == 1) {
    cur->push_back(rest);
    out->push_back(*cur);
    cur->pop_back();
    return;
  }
  for (int64_t d = 1; d <= rest; ++d) {
    if (rest % d != 0) continue;
    cur->push_back(d);
    Factorize(rest / d, n - 1, cur, out);
    cur->pop_back();
  }
}

}  // namespace

std::vector<std::vector<int64_t>> PerfectTilings(int64_t extent, int n) {
  if (n < 1) throw Error("sample_perfect_tile: n must be at least 1");
  if (extent < 1) throw Error("sample_perfect_tile: extent must be positive");
  std::vector<std::vector<int64_t>> out;
  std::vector<int64_t> cur;
  Factorize(extent, n, &cur, &out);
  return out;
}

Schedule::Schedule(TensorProgram program, uint64_t seed)
    : program_(std::move(program)), names_(program_), rng_(seed) {
  CheckValid(program_);
}

// ---------------------------------------------------------------------------
// reference table
// ---------------------------------------------------------------------------

std::string Schedule::NewRef(RefKind kind, RefValue value) {
  std::string id = "v" + std::to_string(next_ref_++);
  refs_[id] = Ref{kind, std::move(value)};
  return id;
}

const Schedule::Ref& Schedule::Lookup(const std::string& id, RefKind kind) const {
  auto it = refs_.find(id);
  static const char* kNames[] = {"loop", "block", "expr", "location"};
  if (it == refs_.end()) throw Error("unknown reference " + id);
  if (it->second.kind != kind) {
    throw Error("reference " + id + " is a " + kNames[static_cast<int>(it->second.kind)] + ", expected a " +
                kNames[static_cast<int>(kind)]);
  }
  return it->second;
}

std::string Schedule::LiveLoop(const std::string& id) const {
  const std::string& var = std::get<std::string>(Lookup(id, RefKind::kLoop).value);
  try {
    FindLoop(program_, var);
  } catch (const Error&) {
    throw Error("loop handle " + id + " (" + var + ") was consumed by an earlier transformation");
  }
  return var;
}

std::string Schedule::LiveBlock(const std::string& id) const {
  const std::string& name = std::get<std::string>(Lookup(id, RefKind::kBlock).value);
  if (!FindLeaf(program_, name)) throw Error("block handle " + id + " (" + name + ") no longer exists");
  return name;
}

int64_t Schedule::Value(const ExprRV& rv) const { return std::get<int64_t>(Lookup(rv.id, RefKind::kExpr).value); }

int64_t Schedule::Value(const LocationRV& rv) const {
  return std::get<int64_t>(Lookup(rv.id, RefKind::kLocation).value);
}

const std::string& Schedule::LoopVar(const LoopRV& rv) const {
  return std::get<std::string>(Lookup(rv.id, RefKind::kLoop).value);
}

const Loop& Schedule::GetLoop(const LoopRV& rv) const { return FindLoop(program_, LiveLoop(rv.id)); }

const std::string& Schedule::BlockName(const BlockRV& rv) const {
  return std::get<std::string>(Lookup(rv.id, RefKind::kBlock).value);
}

void Schedule::Record(Instruction inst) { trace_.instructions.push_back(std::move(inst)); }

Json Schedule::Draw(const std::string& op, const std::vector<Json>& domain, const std::vector<double>& weights) {
  SampleSite site{num_samples_++, op, &domain, &weights};
  if (hook_) {
    if (std::optional<Json> chosen = hook_(site)) {
      for (const Json& d : domain) {
        if (d == *chosen) return d;
      }
      throw Error(op + ": decision " + chosen->dump() + " is outside its domain of " +
                  std::to_string(domain.size()));
    }
  }
  bool uniform = std::all_of(weights.begin(), weights.end(), [&](double w) { return w == weights[0]; });
  if (uniform) {
    std::uniform_int_distribution<size_t> pick(0, domain.size() - 1);
    return domain[pick(rng_)];
  }
  double total = 0;
  for (double w : weights) total += w;
  double x = std::uniform_real_distribution<double>(0.0, total)(rng_);
  for (size_t i = 0; i < domain.size(); ++i) {
    x -= weights[i];
    if (x < 0) return domain[i];
  }
  return domain.back();
}

// ---------------------------------------------------------------------------
// analysis instructions
// ---------------------------------------------------------------------------

BlockRV Schedule::GetBlock(const std::string& name) {
  if (!FindLeaf(program_, name)) throw Error("get_block: no block named " + name);
  BlockRV rv{NewRef(RefKind::kBlock, name)};
  Record({"get_block", {}, Json{{"name", name}}, {rv.id}, std::nullopt});
  return rv;
}

std::vector<BlockRV> Schedule::GetBlocks() {
  std::vector<BlockRV> out;
  Instruction inst{"get_blocks", {}, Json::object(), {}, std::nullopt};
  for (const std::string& name : program_.BlockNames()) {
    out.push_back({NewRef(RefKind::kBlock, name)});
    inst.outputs.push_back(out.back().id);
  }
  Record(std::move(inst));
  return out;
}

std::vector<LoopRV> Schedule::GetLoops(const BlockRV& block) { return GetLoopsImpl(block.id); }

std::vector<LoopRV> Schedule::GetLoopsImpl(const std::string& block_id) {
  std::string name = LiveBlock(block_id);
  std::vector<LoopRV> out;
  Instruction inst{"get_loops", {block_id}, Json::object(), {}, std::nullopt};
  for (const std::string& var : LoopVarsOf(program_, name)) {
    out.push_back({NewRef(RefKind::kLoop, var)});
    inst.outputs.push_back(out.back().id);
  }
  Record(std::move(inst));
  return out;
}

// ---------------------------------------------------------------------------
// transformations
// ---------------------------------------------------------------------------

std::vector<LoopRV> Schedule::Split(const LoopRV& loop, const std::vector<FactorArg>& factors) {
  std::vector<Json> args;
  for (const FactorArg& f : factors) {
    if (std::holds_alternative<int64_t>(f)) {
      args.push_back(std::get<int64_t>(f));
    } else {
      args.push_back(std::get<ExprRV>(f).id);
    }
  }
  return SplitImpl(loop.id, args);
}

std::vector<LoopRV> Schedule::SplitImpl(const std::string& loop_id, const std::vector<Json>& factors) {
  std::string var = LiveLoop(loop_id);
  std::vector<int64_t> values;
  Instruction inst{"split", {loop_id}, Json::object(), {}, std::nullopt};
  for (const Json& f : factors) {
    values.push_back(f.is_string() ? Value(ExprRV{f.get<std::string>()}) : f.get<int64_t>());
    inst.inputs.push_back(f);
  }
  std::vector<LoopRV> out;
  for (const std::string& v : SplitLoop(&program_, var, values, &names_)) {
    out.push_back({NewRef(RefKind::kLoop, v)});
    inst.outputs.push_back(out.back().id);
  }
  Record(std::move(inst));
  return out;
}

LoopRV Schedule::Fuse(const std::vector<LoopRV>& loops) {
  std::vector<std::string> vars;
  Instruction inst{"fuse", {}, Json::object(), {}, std::nullopt};
  for (const LoopRV& l : loops) {
    vars.push_back(LiveLoop(l.id));
    inst.inputs.push_back(l.id);
  }
  LoopRV out{NewRef(RefKind::kLoop, FuseLoops(&program_, vars, &names_))};
  inst.outputs.push_back(out.id);
  Record(std::move(inst));
  return out;
}

void Schedule::Reorder(const std::vector<LoopRV>& loops) {
  std::vector<std::string> vars;
  Instruction inst{"reorder", {}, Json::object(), {}, std::nullopt};
  for (const LoopRV& l : loops) {
    vars.push_back(LiveLoop(l.id));
    inst.inputs.push_back(l.id);
  }
  ReorderLoops(&program_, vars);
  Record(std::move(inst));
}

void Schedule::ComputeAt(const BlockRV& block, const LoopRV& loop) { ComputeAtImpl(block.id, loop.id); }

void Schedule::ComputeAt(const BlockRV& block, const LocationRV& location) { ComputeAtImpl(block.id, location.id); }

void Schedule::ComputeAtImpl(const std::string& block_id, const std::string& target_id) {
  std::string name = LiveBlock(block_id);
  auto it = refs_.find(target_id);
  if (it == refs_.end()) throw Error("unknown reference " + target_id);
  if (it->second.kind == RefKind::kLocation) {
    int64_t loc = std::get<int64_t>(it->second.value);
    if (loc == kInlineLocation) {
      InlineBlock(&program_, name);
    } else if (loc != kRootLocation) {
      auto cp = FindCounterpart(program_, name);
      if (!cp) throw Error("compute_at: block " + name + " has no unique producer or consumer");
      std::vector<std::string> loops = LoopVarsOf(program_, cp->block);
      if (loc < 0 || loc >= static_cast<int64_t>(loops.size())) {
        throw Error("compute_at: location " + std::to_string(loc) + " is not a loop of " + cp->block);
      }
      ComputeAtLoop(&program_, name, loops[static_cast<size_t>(loc)], &names_);
    }
  } else {
    ComputeAtLoop(&program_, name, LiveLoop(target_id), &names_);
  }
  Record({"compute_at", {block_id, target_id}, Json::object(), {}, std::nullopt});
}

void Schedule::Inline(const BlockRV& block) {
  InlineBlock(&program_, LiveBlock(block.id));
  Record({"inline", {block.id}, Json::object(), {}, std::nullopt});
}

void Schedule::Parallel(const LoopRV& loop) {
  ParallelizeLoop(&program_, LiveLoop(loop.id));
  Record({"parallel", {loop.id}, Json::object(), {}, std::nullopt});
}

void Schedule::Vectorize(const LoopRV& loop) {
  VectorizeLoop(&program_, LiveLoop(loop.id));
  Record({"vectorize", {loop.id}, Json::object(), {}, std::nullopt});
}

void Schedule::Unroll(const LoopRV& loop) { UnrollImpl(loop.id, std::nullopt); }

void Schedule::Unroll(const LoopRV& loop, const ExprRV& depth) { UnrollImpl(loop.id, depth.id); }

void Schedule::UnrollImpl(const std::string& loop_id, const std::optional<std::string>& depth_id) {
  std::string var = LiveLoop(loop_id);
  Instruction inst{"unroll", {loop_id}, Json::object(), {}, std::nullopt};
  bool apply = true;
  if (depth_id) {
    int64_t depth = Value(ExprRV{*depth_id});
    apply = depth > 0 && FindLoop(program_, var).extent <= depth;
    inst.inputs.push_back(*depth_id);
  }
  if (apply) UnrollLoop(&program_, var);
  Record(std::move(inst));
}

void Schedule::Tensorize(const LoopRV& loop, const std::string& intrinsic) {
  TensorizeLoop(&program_, LiveLoop(loop.id), intrinsic);
  Record({"tensorize", {loop.id}, Json{{"intrinsic", intrinsic}}, {}, std::nullopt});
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

std::vector<ExprRV> Schedule::SamplePerfectTile(const LoopRV& loop, int n) { return SamplePerfectTileImpl(loop.id, n); }

std::vector<ExprRV> Schedule::SamplePerfectTileImpl(const std::string& loop_id, int n) {
  int64_t extent = FindLoop(program_, LiveLoop(loop_id)).extent;
  std::vector<Json> domain;
  for (const auto& t : PerfectTilings(extent, n)) domain.push_back(t);
  std::vector<double> weights(domain.size(), 1.0);
  Json decision = Draw("sample_perfect_tile", domain, weights);
  Instruction inst{"sample_perfect_tile",
                   {loop_id},
                   Json{{"n", n}, {"extent", extent}, {"domain_size", domain.size()}},
                   {},
                   decision};
  std::vector<ExprRV> out;
  for (const Json& f : decision) {
    out.push_back({NewRef(RefKind::kExpr, f.get<int64_t>())});
    inst.outputs.push_back(out.back().id);
  }
  Record(std::move(inst));
  return out;
}

ExprRV Schedule::SampleCategorical(const std::vector<int64_t>& candidates, const std::vector<double>& weights,
                                   const std::string& tag) {
  return SampleCategoricalImpl(candidates, weights, tag);
}

ExprRV Schedule::SampleCategoricalImpl(const std::vector<int64_t>& candidates, const std::vector<double>& weights,
                                       const std::string& tag) {
  if (candidates.size() != weights.size()) throw Error("sample_categorical: candidate and weight lengths differ");
  std::vector<Json> domain;
  std::vector<double> positive;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0) || !std::isfinite(weights[i])) throw Error("sample_categorical: negative weight");
    if (weights[i] > 0) {
      domain.push_back(static_cast<int64_t>(i));
      positive.push_back(weights[i]);
    }
  }
  if (domain.empty()) throw Error("sample_categorical: all weights are zero");
  Json decision = Draw("sample_categorical", domain, positive);
  ExprRV out{NewRef(RefKind::kExpr, candidates[decision.get<size_t>()])};
  Json attrs = {{"candidates", candidates}, {"weights", weights}};
  if (!tag.empty()) attrs["tag"] = tag;
  Record({"sample_categorical", {}, attrs, {out.id}, decision});
  return out;
}

std::vector<int64_t> Schedule::ComputeLocationDomain(const std::string& block) const {
  auto cp = FindCounterpart(program_, block);
  if (!cp || !OwnsLoopNest(program_, block)) {
    throw Error("sample_compute_location: block " + block + " is not eligible");
  }
  std::vector<int64_t> domain = {kRootLocation};
  TensorProgram scratch = program_;
  try {
    InlineBlock(&scratch, block);
    domain.push_back(kInlineLocation);
  } catch (const Error&) {
  }
  std::vector<std::string> loops = LoopVarsOf(program_, cp->block);
  for (size_t k = 0; k < loops.size(); ++k) {
    if (FindLoop(program_, loops[k]).extent == 1) continue;
    scratch = program_;
    NameSupply names = names_;
    try {
      ComputeAtLoop(&scratch, block, loops[k], &names);
      domain.push_back(static_cast<int64_t>(k));
    } catch (const Error&) {
    }
  }
  return domain;
}

LocationRV Schedule::SampleComputeLocation(const BlockRV& block) { return SampleComputeLocationImpl(block.id); }

LocationRV Schedule::SampleComputeLocationImpl(const std::string& block_id) {
  std::vector<int64_t> locations = ComputeLocationDomain(LiveBlock(block_id));
  std::vector<Json> domain(locations.begin(), locations.end());
  std::vector<double> weights(domain.size(), 1.0);
  Json decision = Draw("sample_compute_location", domain, weights);
  LocationRV out{NewRef(RefKind::kLocation, decision.get<int64_t>())};
  Record({"sample_compute_location", {block_id}, Json{{"domain", locations}}, {out.id}, decision});
  return out;
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

std::vector<std::string> Schedule::Apply(const Instruction& inst) {
  auto ids = [&](size_t from) {
    std::vector<std::string> out;
    for (size_t i = from; i < inst.inputs.size(); ++i) {
      if (!inst.inputs[i].is_string()) throw Error(inst.op + ": input " + std::to_string(i) + " must be a reference");
      out.push_back(inst.inputs[i].get<std::string>());
    }
    return out;
  };
  auto arity = [&](size_t n) {
    if (inst.inputs.size() != n) {
      throw Error(inst.op + ": expected " + std::to_string(n) + " inputs, got " + std::to_string(inst.inputs.size()));
    }
  };
  auto attr = [&](const char* key) -> const Json& {
    if (!inst.attrs.contains(key)) throw Error(inst.op + ": missing attribute " + key);
    return inst.attrs.at(key);
  };
  auto loops_of = [](const std::vector<std::string>& v) {
    std::vector<LoopRV> out;
    for (const std::string& id : v) out.push_back({id});
    return out;
  };
  const std::string& op = inst.op;
  std::vector<std::string> out;
  if (op == "get_block") {
    arity(0);
    out.push_back(GetBlock(attr("name").get<std::string>()).id);
  } else if (op == "get_blocks") {
    arity(0);
    for (const BlockRV& b : GetBlocks()) out.push_back(b.id);
  } else if (op == "get_loops") {
    arity(1);
    for (const LoopRV& l : GetLoopsImpl(ids(0)[0])) out.push_back(l.id);
  } else if (op == "split") {
    if (inst.inputs.size() < 2) throw Error("split: expected a loop and factors");
    if (!inst.inputs[0].is_string()) throw Error("split: input 0 must be a reference");
    std::string loop = inst.inputs[0].get<std::string>();
    std::vector<Json> factors(inst.inputs.begin() + 1, inst.inputs.end());
    for (const LoopRV& l : SplitImpl(loop, factors)) out.push_back(l.id);
  } else if (op == "fuse") {
    out.push_back(Fuse(loops_of(ids(0))).id);
  } else if (op == "reorder") {
    Reorder(loops_of(ids(0)));
  } else if (op == "compute_at") {
    arity(2);
    std::vector<std::string> v = ids(0);
    ComputeAtImpl(v[0], v[1]);
  } else if (op == "inline") {
    arity(1);
    Inline({ids(0)[0]});
  } else if (op == "parallel") {
    arity(1);
    Parallel({ids(0)[0]});
  } else if (op == "vectorize") {
    arity(1);
    Vectorize({ids(0)[0]});
  } else if (op == "unroll") {
    std::vector<std::string> v = ids(0);
    if (v.size() == 1) {
      UnrollImpl(v[0], std::nullopt);
    } else if (v.size() == 2) {
      UnrollImpl(v[0], v[1]);
    } else {
      throw Error("unroll: expected 1 or 2 inputs");
    }
  } else if (op == "tensorize") {
    arity(1);
    Tensorize({ids(0)[0]}, attr("intrinsic").get<std::string>());
  } else if (op == "sample_perfect_tile") {
    arity(1);
    for (const ExprRV& e : SamplePerfectTileImpl(ids(0)[0], attr("n").get<int>())) out.push_back(e.id);
  } else if (op == "sample_categorical") {
    arity(0);
    ExprRV e = SampleCategoricalImpl(attr("candidates").get<std::vector<int64_t>>(),
                                     attr("weights").get<std::vector<double>>(),
                                     inst.attrs.value("tag", std::string()));
    out.push_back(e.id);
  } else if (op == "sample_compute_location") {
    arity(1);
    out.push_back(SampleComputeLocationImpl(ids(0)[0]).id);
  } else {
    throw Error("unknown instruction " + op);
  }
  if (out.size() != inst.outputs.size()) {
    throw Error(op + ": produced " + std::to_string(out.size()) + " outputs, trace expects " +
                std::to_string(inst.outputs.size()));
  }
  return out;
}

}  // namespace metasched
