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

#include <doctest.h>

#include <algorithm>
#include <set>

#include "metasched/analysis.h"
#include "metasched/interpreter.h"
#include "metasched/space.h"
#include "metasched/transform.h"
#include "metasched/workloads.h"

using namespace metasched;

namespace {

std::vector<int64_t> NestExtents(const TensorProgram& p, const std::string& block) {
  std::vector<int64_t> out;
  for (const std::string& v : LoopVarsOf(p, block)) out.push_back(FindLoop(p, v).extent);
  return out;
}

bool SameOutputs(const TensorProgram& a, const TensorProgram& b, uint64_t seed = 0) {
  TensorMap in = RandomInputs(a, seed);
  return Run(a, in) == Run(b, in);
}

bool HasIntrinsic(const TensorProgram& p) {
  for (const LeafInfo& leaf : CollectLeaves(p)) {
    if (leaf.stmt->IsIntrinsic()) return true;
  }
  return false;
}

std::set<uint64_t> HashSet(const EnumeratedSpace& s) { return {s.hashes.begin(), s.hashes.end()}; }

/*! \brief Hook that answers sampling sites from a fixed list, then draws randomly. */
DecisionHook Forced(std::vector<Json> decisions) {
  return [decisions = std::move(decisions)](const SampleSite& site) -> std::optional<Json> {
    if (site.ordinal < decisions.size()) return decisions[site.ordinal];
    return std::nullopt;
  };
}

}  // namespace

TEST_CASE("multi-level tiling produces the band-major nest") {
  Schedule sch(Gmm(64, 64, 64));
  // module choice, then tiles of i, j, k
  sch.SetDecisionHook(Forced({0, Json{2, 4, 2, 4}, Json{1, 2, 4, 8}, Json{4, 4, 4}}));
  Compose({MultiLevelTiling("SSRSR")})->Generate(&sch);
  CHECK(NestExtents(sch.program(), "matmul") == std::vector<int64_t>{2, 1, 4, 2, 4, 2, 4, 4, 4, 4, 8});
  CHECK(SameOutputs(Gmm(64, 64, 64), sch.program()));

  CHECK_THROWS_AS(MultiLevelTiling("SSS"), Error);
  CHECK_THROWS_AS(MultiLevelTiling("RR"), Error);
  CHECK_THROWS_AS(MultiLevelTiling("SXR"), Error);
}

TEST_CASE("unit tiling keeps the original extents") {
  Schedule sch(Gmm(12, 12, 12));
  sch.SetDecisionHook(Forced({0, Json{12, 1}, Json{12, 1}, Json{12, 1}}));
  Compose({MultiLevelTiling("SR")})->Generate(&sch);
  std::vector<int64_t> extents = NestExtents(sch.program(), "matmul");
  CHECK(extents == std::vector<int64_t>{12, 12, 12, 1, 1, 1});
  CHECK(SameOutputs(Gmm(12, 12, 12), sch.program()));
}

TEST_CASE("multi-level tiling is sound over random decisions") {
  TensorProgram e0 = Gmm(16, 16, 16);
  Generator gen = Compose({MultiLevelTiling("SSRSR")});
  TensorMap in = RandomInputs(e0, 1);
  TensorMap expected = Run(e0, in);
  for (uint64_t seed = 0; seed < 200; ++seed) {
    ReplayResult r = SampleTrace(e0, gen, seed);
    CHECK(Run(r.program, in) == expected);
  }
}

TEST_CASE("auto inline") {
  // after two-level tiling of dense, relu has the six locations of the dense-relu example
  Schedule sch(DenseRelu(128, 128, 128));
  auto loops = sch.GetLoops(sch.GetBlock("dense"));
  auto is = sch.Split(loops[0], {int64_t{-1}, int64_t{16}});
  auto js = sch.Split(loops[1], {int64_t{-1}, int64_t{8}});
  sch.Reorder({is[0], js[0], is[1], js[1], loops[2]});
  ModulePtr inl = AutoInline();
  REQUIRE(inl->Applicable(sch, "relu"));
  CHECK_FALSE(inl->Applicable(sch, "dense"));
  inl->Apply(&sch, sch.GetBlock("relu"));
  const Instruction& site = sch.trace().instructions[sch.trace().instructions.size() - 2];
  REQUIRE(site.op == "sample_compute_location");
  CHECK(site.attrs.at("domain").size() == 6);

  Schedule mm(Gmm(8, 8, 8));
  CHECK_FALSE(inl->Applicable(mm, "matmul"));
  Compose({AutoInline()})->Generate(&mm);
  CHECK(StructuralEqual(mm.program(), Gmm(8, 8, 8)));
  CHECK(mm.trace().instructions.empty());

  TensorProgram chain = DenseBiasRelu(8, 8, 8);
  Schedule all(chain);
  all.SetDecisionHook([](const SampleSite& s) -> std::optional<Json> {
    if (s.op == "sample_compute_location") return Json(kInlineLocation);
    return std::nullopt;
  });
  Compose({AutoInline()})->Generate(&all);
  CHECK(all.program().BlockNames().size() == 1);
  CHECK(SameOutputs(chain, all.program()));
}

TEST_CASE("compose with tiling and inlining on dense relu") {
  TensorProgram e0 = DenseRelu(128, 128, 128);
  Generator gen = Compose({MultiLevelTiling("SSRSR"), AutoInline()});
  DesignSpace space = GenerateSpace(e0, gen, 64, 7);
  CHECK(space.hashes.size() >= 2);
  bool inlined = false, fused_or_root = false;
  for (size_t t = 0; t < space.traces.size(); ++t) {
    const TensorProgram& p = space.programs[t];
    CHECK(ValidateTrace(e0, space.traces[t]).accepted);
    CHECK(NestExtents(p, "dense").size() == 11);
    if (p.BlockNames().size() == 1) {
      inlined = true;
    } else {
      fused_or_root = true;
    }
  }
  CHECK(inlined);
  CHECK(fused_or_root);

  DesignSpace again = GenerateSpace(e0, gen, 64, 7);
  CHECK(again.hashes == space.hashes);
}

TEST_CASE("compose of one module equals applying it at every block") {
  TensorProgram e0 = Gmm(12, 12, 12);
  EnumeratedSpace composed = EnumerateSpace(e0, Compose({MultiLevelTiling("SR")}), 100000);
  CHECK_FALSE(composed.capped);
  CHECK(composed.hashes.size() == 6 * 6 * 6);

  // the same walk, calling the module directly
  ModulePtr mlt = MultiLevelTiling("SR");
  std::set<uint64_t> direct;
  for (const auto& ti : PerfectTilings(12, 2)) {
    for (const auto& tj : PerfectTilings(12, 2)) {
      for (const auto& tk : PerfectTilings(12, 2)) {
        Schedule sch(e0);
        sch.SetDecisionHook(Forced({ti, tj, tk}));
        mlt->Apply(&sch, sch.GetBlock("matmul"));
        direct.insert(StructuralHash(sch.program()));
      }
    }
  }
  CHECK(HashSet(composed) == direct);
}

TEST_CASE("parallelize, vectorize, unroll") {
  TensorProgram e0 = Relu1d(1024);
  Schedule sch(e0);
  // module choice, width index 0 (= 4), unroll depth
  sch.SetDecisionHook(Forced({0, 0}));
  Compose({ParallelizeVectorizeUnroll({256, {4, 8}, {0, 16}})})->Generate(&sch);
  const Loop& outer = sch.program().root[0].AsLoop();
  CHECK(outer.kind == LoopKind::kParallel);
  CHECK(outer.extent == 256);
  REQUIRE(outer.body[0].IsLoop());
  CHECK(outer.body[0].AsLoop().kind == LoopKind::kVectorized);
  CHECK(outer.body[0].AsLoop().extent == 4);
  CHECK(SameOutputs(e0, sch.program()));

  Schedule scalar(e0);
  Compose({ParallelizeVectorizeUnroll({256, {1}, {0}})})->Generate(&scalar);
  for (const Instruction& inst : scalar.trace().instructions) CHECK(inst.op != "split");
  CHECK(scalar.program().root[0].AsLoop().kind == LoopKind::kParallel);

  // leading loops are fused up to the parallel extent limit
  Schedule two(Relu2d(8, 16));
  two.SetDecisionHook(Forced({0, 1}));
  Compose({ParallelizeVectorizeUnroll({64, {4, 8}, {0}})})->Generate(&two);
  std::vector<int64_t> extents = NestExtents(two.program(), "relu");
  CHECK(extents == std::vector<int64_t>{16, 8});
  CHECK(FindLoop(two.program(), LoopVarsOf(two.program(), "relu")[0]).kind == LoopKind::kParallel);

  CHECK_THROWS_AS(ParallelizeVectorizeUnroll({0, {4}, {0}}), Error);
  CHECK_THROWS_AS(ParallelizeVectorizeUnroll({16, {4}, {128}}), Error);
}

TEST_CASE("parallelize, vectorize, unroll is sound on conv1d") {
  TensorProgram e0 = Conv1d(32, 4, 8, 3, 1, 1);
  Generator gen = Compose({ParallelizeVectorizeUnroll({64, {2, 4, 8}, {0, 4, 16}}), AutoInline()});
  TensorMap in = RandomInputs(e0, 3);
  TensorMap expected = Run(e0, in);
  std::set<uint64_t> distinct;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    ReplayResult r = SampleTrace(e0, gen, seed);
    distinct.insert(StructuralHash(r.program));
    CHECK(Run(r.program, in) == expected);
  }
  CHECK(distinct.size() > 1);
}

TEST_CASE("use tensor unit") {
  ModulePtr tu = UseTensorUnit();
  Schedule big(Gmm(64, 64, 64));
  REQUIRE(tu->Applicable(big, "matmul"));
  Compose({tu})->Generate(&big);
  CHECK(HasIntrinsic(big.program()));
  CHECK(SameOutputs(Gmm(64, 64, 64), big.program()));

  Schedule six(Gmm(6, 6, 6));
  CHECK_FALSE(tu->Applicable(six, "matmul"));
  Schedule relu(DenseRelu(8, 8, 8));
  CHECK_FALSE(tu->Applicable(relu, "relu"));
  CHECK(tu->Applicable(relu, "dense"));
  Schedule conv(Conv1d(16, 4, 4, 3, 1, 1));
  CHECK_FALSE(tu->Applicable(conv, "conv"));

  TensorProgram e0 = Gmm(16, 16, 16);
  TensorMap in = RandomInputs(e0, 5);
  TensorMap expected = Run(e0, in);
  for (uint64_t seed = 0; seed < 100; ++seed) {
    ReplayResult r = SampleTrace(e0, Compose({tu}), seed);
    CHECK(HasIntrinsic(r.program));
    CHECK(Run(r.program, in) == expected);
  }
}

TEST_CASE("generate_space") {
  // every domain is a singleton
  Generator fixed = Compose({ParallelizeVectorizeUnroll({256, {1}, {0}})});
  CHECK(GenerateSpace(Relu1d(64), fixed, 1, 0).traces.size() == 1);
  CHECK(GenerateSpace(Relu1d(64), fixed, 10, 0).traces.size() == 1);
  EnumeratedSpace one = EnumerateSpace(Relu1d(64), fixed, 10);
  CHECK(one.hashes.size() == 1);
  CHECK_FALSE(one.capped);
  CHECK_THROWS_AS(EnumerateSpace(Relu1d(64), fixed, 0), Error);
}

TEST_CASE("enumeration contains every sampled program") {
  TensorProgram e0 = DenseRelu(128, 128, 4);
  Generator gen = Compose({MultiLevelTiling("SR"), AutoInline()});
  EnumeratedSpace all = EnumerateSpace(e0, gen, 1000000);
  CHECK_FALSE(all.capped);
  std::set<uint64_t> hashes = HashSet(all);
  DesignSpace sampled = GenerateSpace(e0, gen, 1000, 3);
  for (uint64_t h : sampled.hashes) CHECK(hashes.count(h) == 1);
  MESSAGE("enumerated " << hashes.size() << ", sampled " << sampled.hashes.size());

  EnumeratedSpace capped = EnumerateSpace(e0, gen, 10);
  CHECK(capped.capped);
  CHECK(capped.hashes.size() == 10);
}

TEST_CASE("adding modules only grows the space") {
  for (const TensorProgram& e0 : {DenseRelu(8, 8, 4), Conv1d(8, 2, 4, 3, 1, 1)}) {
    EnumeratedSpace s1 = EnumerateSpace(e0, Compose({MultiLevelTiling("SR")}), 1000000);
    EnumeratedSpace s2 = EnumerateSpace(e0, Compose({MultiLevelTiling("SR"), AutoInline()}), 1000000);
    EnumeratedSpace s3 = EnumerateSpace(
        e0, Compose({MultiLevelTiling("SR"), AutoInline(), ParallelizeVectorizeUnroll({64, {2, 4}, {0, 16}})}),
        1000000);
    auto h1 = HashSet(s1), h2 = HashSet(s2), h3 = HashSet(s3);
    CHECK(std::includes(h2.begin(), h2.end(), h1.begin(), h1.end()));
    CHECK(std::includes(h3.begin(), h3.end(), h2.begin(), h2.end()));
    CHECK(h1.size() < h2.size());
    CHECK(h2.size() < h3.size());
  }
}

TEST_CASE("space configuration") {
  Json config = Json::parse(
      R"({"modules":[{"mlt":{"structure":"SSRSR"}},{"auto_inline":{}},{"pvu":{"widths":[4,8]}},{"tensor_unit":{}}]})");
  Generator gen = GeneratorFromJson(config);
  REQUIRE(gen->modules().size() == 4);
  CHECK(gen->modules()[0]->name() == "mlt");
  CHECK(gen->modules()[3]->name() == "tensor_unit");
  Generator back = GeneratorFromJson(gen->ToJson());
  CHECK(back->ToJson() == gen->ToJson());
  CHECK(gen->ToJson()["modules"][2]["pvu"]["widths"] == Json{4, 8});

  CHECK_THROWS_AS(GeneratorFromJson(Json::parse(R"({"modules":[]})")), Error);
  CHECK_THROWS_AS(GeneratorFromJson(Json::parse(R"({"modules":[{"warp":{}}]})")), Error);
  CHECK_THROWS_AS(GeneratorFromJson(Json::parse(R"({"modules":[{"pvu":{"lanes":4}}]})")), Error);
  CHECK_THROWS_AS(GeneratorFromJson(Json::parse(R"({"modules":[{"mlt":{"structure":"SS"}}]})")), Error);
  CHECK_THROWS_AS(GeneratorFromJson(Json::parse(R"([1])")), Error);
}

TEST_CASE("module choice mutations regenerate a valid trace") {
  TensorProgram e0 = DenseRelu(16, 16, 16);
  Generator gen = Compose({MultiLevelTiling("SSRSR"), AutoInline(), ParallelizeVectorizeUnroll(), UseTensorUnit()});
  std::mt19937_64 rng(2);
  int regenerated = 0, accepted = 0;
  for (uint64_t seed = 0; seed < 60; ++seed) {
    ReplayResult base = SampleTrace(e0, gen, seed);
    Proposal p = ProposeMutation(e0, gen, base.trace, rng);
    if (!p.mutated) continue;
    ValidationResult v = ValidateTrace(e0, p.trace);
    if (p.regenerated) {
      ++regenerated;
      CHECK(v.accepted);
    }
    if (v.accepted) {
      ++accepted;
      CHECK(SameOutputs(e0, v.program, seed));
    }
  }
  CHECK(regenerated > 0);
  CHECK(accepted > 0);
}
