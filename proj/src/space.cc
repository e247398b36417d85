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
 * \file space.cc
 * \brief Transformation modules and design-space generation.
 */
#include "metasched/space.h"

#include <algorithm>
#include <functional>
#include <set>
#include <unordered_set>

#include "metasched/analysis.h"
#include "metasched/transform.h"

namespace metasched {

namespace {

const Compute* LeafCompute(const TensorProgram& p, const std::string& block) {
  auto leaf = FindLeaf(p, block);
  if (!leaf || !leaf->stmt->IsCompute()) return nullptr;
  return &leaf->stmt->AsCompute();
}

/*! \brief Runs `edit` on a copy of p and reports whether it went through. */
bool Tries(const TensorProgram& p, const std::function<void(TensorProgram*, NameSupply*)>& edit) {
  TensorProgram scratch = p;
  NameSupply names(scratch);
  try {
    edit(&scratch, &names);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::vector<double> Uniform(size_t n) { return std::vector<double>(n, 1.0); }

// ---------------------------------------------------------------------------

class MultiLevelTilingModule : public TransformationModule {
 public:
  explicit MultiLevelTilingModule(std::string structure) : structure_(std::move(structure)) {
    for (char c : structure_) {
      if (c != 'S' && c != 'R') throw Error("mlt: structure may only contain S and R, got \"" + structure_ + "\"");
    }
    num_s_ = static_cast<int>(std::count(structure_.begin(), structure_.end(), 'S'));
    num_r_ = static_cast<int>(std::count(structure_.begin(), structure_.end(), 'R'));
    if (num_s_ == 0 || num_r_ == 0) throw Error("mlt: structure \"" + structure_ + "\" needs at least one S and one R");
  }

  std::string name() const override { return "mlt"; }

  bool Applicable(const Schedule& sch, const std::string& block) const override {
    const TensorProgram& p = sch.program();
    const Compute* c = LeafCompute(p, block);
    if (c == nullptr || !c->init || !OwnsLoopNest(p, block)) return false;
    auto [spatial, reduction] = Classify(p, block);
    return !spatial.empty() && !reduction.empty();
  }

  void Apply(Schedule* sch, const BlockRV& block) const override {
    std::vector<LoopRV> loops = sch->GetLoops(block);
    std::set<std::string> written = WrittenVars(*FindLeaf(sch->program(), sch->BlockName(block))->stmt);
    // tiles[t][b]: band b of the t-th loop
    std::vector<std::vector<LoopRV>> spatial, reduction;
    for (const LoopRV& l : loops) {
      bool is_spatial = written.count(sch->LoopVar(l)) > 0;
      auto factors = sch->SamplePerfectTile(l, (is_spatial ? num_s_ : num_r_) + 1);
      auto tiles = sch->Split(l, std::vector<FactorArg>(factors.begin(), factors.end()));
      (is_spatial ? spatial : reduction).push_back(std::move(tiles));
    }
    std::vector<LoopRV> order;
    int s_band = 0, r_band = 0;
    for (char c : structure_) {
      auto& group = c == 'S' ? spatial : reduction;
      int band = c == 'S' ? s_band++ : r_band++;
      for (const auto& tiles : group) order.push_back(tiles[static_cast<size_t>(band)]);
    }
    for (const auto& tiles : reduction) order.push_back(tiles.back());
    for (const auto& tiles : spatial) order.push_back(tiles.back());
    sch->Reorder(order);
  }

  Json ToJson() const override { return Json{{"mlt", {{"structure", structure_}}}}; }

 private:
  static std::pair<std::vector<std::string>, std::vector<std::string>> Classify(const TensorProgram& p,
                                                                              const std::string& block) {
    std::set<std::string> written = WrittenVars(*FindLeaf(p, block)->stmt);
    std::vector<std::string> spatial, reduction;
    for (const std::string& v : LoopVarsOf(p, block)) (written.count(v) ? spatial : reduction).push_back(v);
    return {spatial, reduction};
  }

  std::string structure_;
  int num_s_ = 0;
  int num_r_ = 0;
};

// ---------------------------------------------------------------------------

class AutoInlineModule : public TransformationModule {
 public:
  std::string name() const override { return "auto_inline"; }

  bool Applicable(const Schedule& sch, const std::string& block) const override {
    const TensorProgram& p = sch.program();
    return LeafCompute(p, block) != nullptr && IsElementwise(p, block) && OwnsLoopNest(p, block) &&
           FindCounterpart(p, block).has_value();
  }

  void Apply(Schedule* sch, const BlockRV& block) const override {
    LocationRV loc = sch->SampleComputeLocation(block);
    sch->ComputeAt(block, loc);
  }

  Json ToJson() const override { return Json{{"auto_inline", Json::object()}}; }
};

// ---------------------------------------------------------------------------

class PvuModule : public TransformationModule {
 public:
  explicit PvuModule(PvuOptions options) : options_(std::move(options)) {
    if (options_.max_parallel_extent < 1) throw Error("pvu: max_parallel_extent must be positive");
    if (options_.vector_widths.empty()) throw Error("pvu: widths must not be empty");
    for (int64_t w : options_.vector_widths) {
      if (w < 1) throw Error("pvu: vector widths must be positive");
    }
    if (options_.unroll_depths.empty()) throw Error("pvu: unroll_depths must not be empty");
    for (int64_t d : options_.unroll_depths) {
      if (d < 0 || d > 64) throw Error("pvu: unroll depths must lie in [0, 64]");
    }
  }

  std::string name() const override { return "pvu"; }

  bool Applicable(const Schedule& sch, const std::string& block) const override {
    return LeafCompute(sch.program(), block) != nullptr && !LoopVarsOf(sch.program(), block).empty();
  }

  void Apply(Schedule* sch, const BlockRV& block) const override {
    Vectorize(sch, block);
    Parallelize(sch, block);
    Unroll(sch, block);
  }

  Json ToJson() const override {
    return Json{{"pvu",
                 {{"max_parallel_extent", options_.max_parallel_extent},
                  {"widths", options_.vector_widths},
                  {"unroll_depths", options_.unroll_depths}}}};
  }

 private:
  void Vectorize(Schedule* sch, const BlockRV& block) const {
    std::vector<std::string> vars = LoopVarsOf(sch->program(), sch->BlockName(block));
    const std::string& inner = vars.back();
    std::vector<int64_t> widths;
    for (int64_t w : options_.vector_widths) {
      if (w <= 1 || FindLoop(sch->program(), inner).extent % w != 0) continue;
      bool ok = Tries(sch->program(), [&](TensorProgram* p, NameSupply* names) {
        VectorizeLoop(p, SplitLoop(p, inner, {-1, w}, names).back());
      });
      if (ok) widths.push_back(w);
    }
    if (widths.empty()) return;
    std::vector<LoopRV> loops = sch->GetLoops(block);
    ExprRV width = sch->SampleCategorical(widths, Uniform(widths.size()), "vector_width");
    auto parts = sch->Split(loops.back(), {int64_t{-1}, width});
    sch->Vectorize(parts[1]);
  }

  void Parallelize(Schedule* sch, const BlockRV& block) const {
    const TensorProgram& p = sch->program();
    std::vector<std::string> vars = LoopVarsOf(p, sch->BlockName(block));
    size_t count = 0;
    int64_t product = 1;
    for (size_t k = 0; k < vars.size(); ++k) {
      const Loop& l = FindLoop(p, vars[k]);
      if (l.kind != LoopKind::kSerial || !IsDataParallelLoop(p, vars[k])) break;
      if (k > 0 && (FindLoop(p, vars[k - 1]).body.size() != 1)) break;
      if (k > 0 && product * l.extent > options_.max_parallel_extent) break;
      product *= l.extent;
      ++count;
    }
    while (count > 1) {
      std::vector<std::string> prefix(vars.begin(), vars.begin() + static_cast<long>(count));
      bool ok = Tries(p, [&](TensorProgram* q, NameSupply* names) { ParallelizeLoop(q, FuseLoops(q, prefix, names)); });
      if (ok) break;
      --count;
    }
    if (count == 0 || (count == 1 && !Tries(p, [&](TensorProgram* q, NameSupply*) { ParallelizeLoop(q, vars[0]); }))) {
      return;
    }
    std::vector<LoopRV> loops = sch->GetLoops(block);
    LoopRV target = loops[0];
    if (count > 1) target = sch->Fuse(std::vector<LoopRV>(loops.begin(), loops.begin() + static_cast<long>(count)));
    sch->Parallel(target);
  }

  void Unroll(Schedule* sch, const BlockRV& block) const {
    const TensorProgram& p = sch->program();
    std::vector<std::string> vars = LoopVarsOf(p, sch->BlockName(block));
    std::optional<size_t> target;
    for (size_t k = vars.size(); k-- > 0;) {
      if (FindLoop(p, vars[k]).kind == LoopKind::kSerial) {
        target = k;
        break;
      }
    }
    if (!target) return;
    std::vector<LoopRV> loops = sch->GetLoops(block);
    ExprRV depth = sch->SampleCategorical(options_.unroll_depths, Uniform(options_.unroll_depths.size()), "unroll_depth");
    sch->Unroll(loops[*target], depth);
  }

  PvuOptions options_;
};

// ---------------------------------------------------------------------------

class TensorUnitModule : public TransformationModule {
 public:
  std::string name() const override { return "tensor_unit"; }

  bool Applicable(const Schedule& sch, const std::string& block) const override {
    const TensorProgram& p = sch.program();
    const Compute* c = LeafCompute(p, block);
    if (c == nullptr || !c->init || c->indices.size() != 2 || !OwnsLoopNest(p, block)) return false;
    auto roles = Roles(p, block);
    if (!roles) return false;
    for (const std::string& v : *roles) {
      if (FindLoop(p, v).extent % 4 != 0) return false;
    }
    return Tries(p, [&](TensorProgram* q, NameSupply* names) {
      std::vector<std::string> outer, inner;
      for (const std::string& v : *roles) {
        auto parts = SplitLoop(q, v, {-1, 4}, names);
        outer.push_back(parts[0]);
        inner.push_back(parts[1]);
      }
      std::vector<std::string> order = outer;
      order.insert(order.end(), inner.begin(), inner.end());
      ReorderLoops(q, order);
      TensorizeLoop(q, inner[0], "tu.mma4");
    });
  }

  void Apply(Schedule* sch, const BlockRV& block) const override {
    std::vector<std::string> roles = *Roles(sch->program(), sch->BlockName(block));
    std::vector<LoopRV> loops = sch->GetLoops(block);
    auto rv_of = [&](const std::string& var) {
      for (const LoopRV& l : loops) {
        if (sch->LoopVar(l) == var) return l;
      }
      throw Error("tensor_unit: loop " + var + " not found");
    };
    LoopRV li = rv_of(roles[0]), lj = rv_of(roles[1]), lk = rv_of(roles[2]);
    auto i = sch->Split(li, {int64_t{-1}, int64_t{4}});
    auto j = sch->Split(lj, {int64_t{-1}, int64_t{4}});
    auto k = sch->Split(lk, {int64_t{-1}, int64_t{4}});
    auto ti = sch->SamplePerfectTile(i[0], 2);
    auto tj = sch->SamplePerfectTile(j[0], 2);
    auto io = sch->Split(i[0], {ti[0], ti[1]});
    auto jo = sch->Split(j[0], {tj[0], tj[1]});
    sch->Reorder({io[0], jo[0], io[1], jo[1], k[0], i[1], j[1], k[1]});
    sch->Tensorize(i[1], "tu.mma4");
    sch->Parallel(io[0]);
  }

  Json ToJson() const override { return Json{{"tensor_unit", Json::object()}}; }

 private:
  /*! \brief Loop variables of the row, column and reduction roles, if there are exactly three. */
  static std::optional<std::vector<std::string>> Roles(const TensorProgram& p, const std::string& block) {
    const Compute* c = LeafCompute(p, block);
    std::vector<std::string> vars = LoopVarsOf(p, block);
    if (vars.size() != 3 || c->indices[0]->kind != ExprKind::kVar || c->indices[1]->kind != ExprKind::kVar) return std::nullopt;
    std::string i = c->indices[0]->name, j = c->indices[1]->name, k;
    for (const std::string& v : vars) {
      if (v != i && v != j) k = v;
    }
    if (k.empty() || i == j) return std::nullopt;
    return std::vector<std::string>{i, j, k};
  }
};

uint64_t SplitMix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

ModulePtr MultiLevelTiling(const std::string& structure) {
  return std::make_shared<MultiLevelTilingModule>(structure);
}
ModulePtr AutoInline() { return std::make_shared<AutoInlineModule>(); }
ModulePtr ParallelizeVectorizeUnroll(PvuOptions options) { return std::make_shared<PvuModule>(std::move(options)); }
ModulePtr UseTensorUnit() { return std::make_shared<TensorUnitModule>(); }

// ---------------------------------------------------------------------------
// composition
// ---------------------------------------------------------------------------

ComposedModule::ComposedModule(std::vector<ModulePtr> modules) : modules_(std::move(modules)) {
  if (modules_.empty()) throw Error("compose: module list is empty");
}

bool ComposedModule::Applicable(const Schedule& sch, const std::string& block) const {
  return std::any_of(modules_.begin(), modules_.end(), [&](const ModulePtr& m) { return m->Applicable(sch, block); });
}

void ComposedModule::Apply(Schedule* sch, const BlockRV& block) const {
  std::vector<int64_t> candidates;
  for (size_t m = 0; m < modules_.size(); ++m) {
    if (modules_[m]->Applicable(*sch, sch->BlockName(block))) candidates.push_back(static_cast<int64_t>(m));
  }
  if (candidates.empty()) return;
  ExprRV choice = sch->SampleCategorical(candidates, Uniform(candidates.size()), kModuleChoiceTag);
  modules_[static_cast<size_t>(sch->Value(choice))]->Apply(sch, block);
}

void ComposedModule::Generate(Schedule* sch) const {
  std::vector<std::string> queue = sch->program().BlockNames();
  std::set<std::string> seen(queue.begin(), queue.end());
  for (size_t q = 0; q < queue.size(); ++q) {
    std::vector<std::string> present = sch->program().BlockNames();
    if (std::find(present.begin(), present.end(), queue[q]) != present.end() && Applicable(*sch, queue[q])) {
      Apply(sch, sch->GetBlock(queue[q]));
    }
    for (const std::string& b : sch->program().BlockNames()) {
      if (seen.insert(b).second) queue.push_back(b);
    }
  }
}

Json ComposedModule::ToJson() const {
  Json list = Json::array();
  for (const ModulePtr& m : modules_) list.push_back(m->ToJson());
  return Json{{"modules", list}};
}

Generator Compose(std::vector<ModulePtr> modules) { return std::make_shared<ComposedModule>(std::move(modules)); }

namespace {

std::vector<int64_t> IntList(const Json& j, const std::string& what) {
  if (!j.is_array()) throw Error(what + " must be a list of integers");
  std::vector<int64_t> out;
  for (const Json& v : j) {
    if (!v.is_number_integer()) throw Error(what + " must be a list of integers");
    out.push_back(v.get<int64_t>());
  }
  return out;
}

void CheckKeys(const Json& params, const std::string& module, const std::set<std::string>& allowed) {
  if (!params.is_object()) throw Error("space config: parameters of " + module + " must be an object");
  for (const auto& [key, value] : params.items()) {
    if (!allowed.count(key)) throw Error("space config: unknown parameter " + key + " of " + module);
  }
}

}  // namespace

Generator GeneratorFromJson(const Json& config) {
  if (!config.is_object() || !config.contains("modules") || !config.at("modules").is_array()) {
    throw Error("space config: expected an object with a \"modules\" list");
  }
  std::vector<ModulePtr> modules;
  for (const Json& entry : config.at("modules")) {
    if (!entry.is_object() || entry.size() != 1) {
      throw Error("space config: each module entry must be an object with a single key");
    }
    const std::string& kind = entry.begin().key();
    const Json& params = entry.begin().value();
    if (kind == "mlt") {
      CheckKeys(params, kind, {"structure"});
      if (params.contains("structure") && !params.at("structure").is_string()) {
        throw Error("space config: mlt structure must be a string");
      }
      modules.push_back(MultiLevelTiling(params.value("structure", std::string("SSRSR"))));
    } else if (kind == "auto_inline") {
      CheckKeys(params, kind, {});
      modules.push_back(AutoInline());
    } else if (kind == "pvu") {
      CheckKeys(params, kind, {"widths", "max_parallel_extent", "unroll_depths"});
      PvuOptions options;
      if (params.contains("widths")) options.vector_widths = IntList(params.at("widths"), "pvu widths");
      if (params.contains("unroll_depths")) {
        options.unroll_depths = IntList(params.at("unroll_depths"), "pvu unroll_depths");
      }
      if (params.contains("max_parallel_extent")) {
        if (!params.at("max_parallel_extent").is_number_integer()) {
          throw Error("space config: pvu max_parallel_extent must be an integer");
        }
        options.max_parallel_extent = params.at("max_parallel_extent").get<int64_t>();
      }
      modules.push_back(ParallelizeVectorizeUnroll(options));
    } else if (kind == "tensor_unit") {
      CheckKeys(params, kind, {});
      modules.push_back(UseTensorUnit());
    } else {
      throw Error("space config: unknown module " + kind);
    }
  }
  return Compose(std::move(modules));
}

Generator DefaultGenerator() {
  return Compose({MultiLevelTiling("SSRSR"), AutoInline(), ParallelizeVectorizeUnroll()});
}

// ---------------------------------------------------------------------------
// spaces
// ---------------------------------------------------------------------------

namespace {

ReplayResult Finish(const TensorProgram& e0, const Schedule& sch) {
  ValidationResult v = ValidateTrace(e0, sch.trace());
  if (!v.accepted) {
    throw Error("generator produced a trace that does not validate at instruction " + std::to_string(v.index) +
                ": " + v.reason);
  }
  return {std::move(v.program), std::move(v.trace)};
}

}  // namespace

ReplayResult SampleTrace(const TensorProgram& e0, const Generator& generator, uint64_t seed) {
  Schedule sch(e0, seed);
  generator->Generate(&sch);
  return Finish(e0, sch);
}

DesignSpace GenerateSpace(const TensorProgram& e0, const Generator& generator, int k, uint64_t seed) {
  DesignSpace space;
  space.workload = e0;
  std::unordered_set<uint64_t> seen;
  for (int r = 0; r < k; ++r) {
    ReplayResult result = SampleTrace(e0, generator, SplitMix(seed * 0x100000001b3ULL + static_cast<uint64_t>(r)));
    uint64_t h = StructuralHash(result.program);
    if (!seen.insert(h).second) continue;
    space.hashes.push_back(h);
    space.traces.push_back(std::move(result.trace));
    space.programs.push_back(std::move(result.program));
  }
  return space;
}

EnumeratedSpace EnumerateSpace(const TensorProgram& e0, const Generator& generator, size_t cap) {
  if (cap == 0) throw Error("enumerate_space: cap must be positive");
  EnumeratedSpace space;
  std::unordered_set<uint64_t> seen;
  std::vector<size_t> choice;
  while (true) {
    std::vector<size_t> sizes;
    Schedule sch(e0);
    sch.SetDecisionHook([&](const SampleSite& site) -> std::optional<Json> {
      size_t k = site.ordinal < choice.size() ? choice[site.ordinal] : 0;
      sizes.push_back(site.domain->size());
      return (*site.domain)[k];
    });
    generator->Generate(&sch);
    ReplayResult result = Finish(e0, sch);
    uint64_t h = StructuralHash(result.program);
    if (seen.insert(h).second) {
      space.hashes.push_back(h);
      space.traces.push_back(std::move(result.trace));
    }
    choice.resize(sizes.size(), 0);
    size_t pos = sizes.size();
    while (pos > 0 && choice[pos - 1] + 1 >= sizes[pos - 1]) --pos;
    if (pos == 0) return space;
    if (space.hashes.size() >= cap) {
      space.capped = true;
      return space;
    }
    choice.resize(pos);
    ++choice[pos - 1];
  }
}

ReplayResult Regenerate(const TensorProgram& e0, const Generator& generator, const Trace& t, size_t index,
                        const Json& decision, uint64_t seed) {
  std::vector<Json> prefix;
  for (size_t i = 0; i < index && i < t.instructions.size(); ++i) {
    if (t.instructions[i].IsSampling()) prefix.push_back(*t.instructions[i].decision);
  }
  Schedule sch(e0, seed);
  sch.SetDecisionHook([&](const SampleSite& site) -> std::optional<Json> {
    if (site.ordinal < prefix.size()) return prefix[site.ordinal];
    if (site.ordinal == prefix.size()) return decision;
    return std::nullopt;
  });
  generator->Generate(&sch);
  return Finish(e0, sch);
}

Proposal ProposeMutation(const TensorProgram& e0, const Generator& generator, const Trace& t,
                         std::mt19937_64& rng) {
  MutationResult m = Mutate(t, rng);
  Proposal proposal{m.trace, m.mutated, false};
  if (!m.mutated) return proposal;
  const Instruction& inst = m.trace.instructions[m.index];
  if (inst.op == "sample_categorical" && inst.attrs.value("tag", std::string()) == kModuleChoiceTag) {
    try {
      proposal.trace = Regenerate(e0, generator, t, m.index, *inst.decision, rng()).trace;
      proposal.regenerated = true;
    } catch (const Error&) {
      proposal.mutated = false;
      proposal.trace = t;
    }
  }
  return proposal;
}

}  // namespace metasched
