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

#include <functional>

#include "metasched/machine.h"
#include "metasched/schedule.h"
#include "metasched/transform.h"
#include "metasched/workloads.h"
#include "random_programs.h"

using namespace metasched;

namespace {

TensorProgram ScalarAdd() {
  TensorProgram p;
  p.buffers = {{"A", {1}, BufferRole::kInput}, {"B", {1}, BufferRole::kOutput}};
  p.root = {MakeCompute("add", "B", {IntImm(0)}, Add(Load("A", {IntImm(0)}), IntImm(1)))};
  return p;
}

/*! \brief Sets the kind of a loop directly, bypassing legality checks. */
void SetKind(std::vector<Stmt>* stmts, const std::string& var, LoopKind kind) {
  for (Stmt& s : *stmts) {
    if (!s.IsLoop()) continue;
    if (s.AsLoop().var == var) s.AsLoop().kind = kind;
    SetKind(&s.AsLoop().body, var, kind);
  }
}

std::vector<std::string> AllLoops(const TensorProgram& p) {
  std::vector<std::string> out;
  std::function<void(const std::vector<Stmt>&)> walk = [&](const std::vector<Stmt>& stmts) {
    for (const Stmt& s : stmts) {
      if (!s.IsLoop()) continue;
      out.push_back(s.AsLoop().var);
      walk(s.AsLoop().body);
    }
  };
  walk(p.root);
  return out;
}

/*! \brief True when some other loop on a path through `var` is parallel. */
bool OtherParallelOnPath(const TensorProgram& p, const std::string& var) {
  bool found = false;
  std::function<void(const std::vector<Stmt>&, bool, bool)> walk = [&](const std::vector<Stmt>& stmts, bool above,
                                                                      bool inside) {
    for (const Stmt& s : stmts) {
      if (!s.IsLoop()) continue;
      const Loop& l = s.AsLoop();
      bool par = l.kind == LoopKind::kParallel && l.var != var;
      if (l.var == var) {
        found = found || above;
        walk(l.body, above, true);
      } else {
        if (inside && par) found = true;
        walk(l.body, above || par, inside);
      }
    }
  };
  walk(p.root, false, false);
  return found;
}

}  // namespace

TEST_CASE("base case: one add and two hits") {
  CHECK(SimulateLatency(ScalarAdd()) == 3.0);
  FootprintTable t = Footprint(ScalarAdd(), "add");
  REQUIRE(t.levels.size() == 1);
  CHECK(t.levels[0].at("A") == 1);
  CHECK(t.levels[0].at("B") == 1);
}

TEST_CASE("split, parallel and vectorized relu is cheaper than the serial loop") {
  TensorProgram e0 = Relu1d(1024);
  Schedule sch(e0);
  auto parts = sch.Split(sch.GetLoops(sch.GetBlock("relu"))[0], {int64_t{32}, int64_t{8}, int64_t{4}});
  sch.Parallel(parts[0]);
  sch.Vectorize(parts[2]);
  // hand evaluation: both nests fit in cache, so each iteration costs max + load + store = 3
  double serial = 1024 * 3.0;
  double tuned = (32 / 4) * 8 * 1 * 3.0;
  CHECK(SimulateLatency(e0) == serial);
  CHECK(SimulateLatency(sch.program()) == tuned);
  CHECK(SimulateLatency(sch.program()) < SimulateLatency(e0));
}

TEST_CASE("tensorized tile is cheaper than the scalar tile") {
  TensorProgram e0 = Gmm(4, 4, 4);
  Schedule sch(e0);
  sch.Tensorize(sch.GetLoops(sch.GetBlock("matmul"))[0], "tu.mma4");
  // scalar: 64 x (add + mul + 3 loads + store) plus the init store amortized over k
  double scalar = 64 * (2 + 4 + 1.0 / 4);
  double tensor = 8 + 48 + 16;
  CHECK(SimulateLatency(e0) == doctest::Approx(scalar));
  CHECK(SimulateLatency(sch.program()) == doctest::Approx(tensor));
  CHECK(tensor < scalar);
}

TEST_CASE("footprints of a 16 cubed matmul") {
  FootprintTable t = Footprint(Gmm(16, 16, 16), "matmul");
  REQUIRE(t.loops == std::vector<std::string>{"i", "j", "k"});
  CHECK(t.levels[0] == std::map<std::string, int64_t>{{"A", 256}, {"B", 256}, {"C", 256}});
  CHECK(t.levels[1] == std::map<std::string, int64_t>{{"A", 16}, {"B", 256}, {"C", 16}});
  CHECK(t.levels[2] == std::map<std::string, int64_t>{{"A", 16}, {"B", 16}, {"C", 1}});
  CHECK(t.levels[3] == std::map<std::string, int64_t>{{"A", 1}, {"B", 1}, {"C", 1}});
  CHECK(CacheSuffix(t, MachineSpec{}) == 0);
  MachineSpec small;
  small.cache_capacity = 100;
  CHECK(CacheSuffix(t, small) == 2);
  CHECK_THROWS_AS(Footprint(Gmm(4, 4, 4), "nope"), Error);
}

TEST_CASE("cache misses follow the reuse distance") {
  // 64^3 naive: the k suffix fits; B moves with j and k, so it misses on every iteration
  MachineSpec spec;
  TensorProgram naive = Gmm(64, 64, 64);
  double n = 64.0 * 64 * 64;
  // per iteration: 2 flops, A: 1 + 7/64, B: 8, C load and store: 1 + 7/64 each, init store amortized
  double per = 2 + (1 + 7.0 / 64) + 8 + 2 * (1 + 7.0 / 64) + (1 + 7.0 / 64) / 64;
  CHECK(SimulateLatency(naive, spec) == doctest::Approx(n * per));

  Schedule tiled(naive);
  auto l = tiled.GetLoops(tiled.GetBlock("matmul"));
  auto i = tiled.Split(l[0], {int64_t{4}, int64_t{16}});
  auto j = tiled.Split(l[1], {int64_t{4}, int64_t{16}});
  auto k = tiled.Split(l[2], {int64_t{4}, int64_t{16}});
  tiled.Reorder({i[0], j[0], k[0], i[1], j[1], k[1]});
  CHECK(SimulateLatency(tiled.program(), spec) < SimulateLatency(naive, spec));
}

TEST_CASE("loop kind costs") {
  MachineSpec spec;
  Schedule u(Relu1d(32));
  auto parts = u.Split(u.GetLoops(u.GetBlock("relu"))[0], {int64_t{2}, int64_t{16}});
  u.Unroll(parts[1]);
  CHECK(SimulateLatency(u.program(), spec) == doctest::Approx(2 * 16 * 3 * 0.9));
  Schedule big(Relu1d(32));
  big.Unroll(big.GetLoops(big.GetBlock("relu"))[0]);
  CHECK(SimulateLatency(big.program(), spec) == doctest::Approx(32 * 3));

  // vectorizing the row loop of a row-major buffer earns nothing
  Schedule col(Relu2d(8, 8));
  auto ij = col.GetLoops(col.GetBlock("relu"));
  col.Reorder({ij[1], ij[0]});
  col.Vectorize(ij[0]);
  CHECK(SimulateLatency(col.program(), spec) == doctest::Approx(64 * 3));
  Schedule row(Relu2d(8, 8));
  auto rj = row.GetLoops(row.GetBlock("relu"));
  row.Vectorize(rj[1]);
  CHECK(SimulateLatency(row.program(), spec) == doctest::Approx(8 * 3));

  // only the outermost parallel loop is discounted
  Schedule par(Relu2d(8, 8));
  auto pl = par.GetLoops(par.GetBlock("relu"));
  par.Parallel(pl[0]);
  par.Parallel(pl[1]);
  CHECK(SimulateLatency(par.program(), spec) == doctest::Approx(2 * 8 * 3));
}

TEST_CASE("determinism, alpha invariance and value independence") {
  for (uint64_t seed = 0; seed < 200; ++seed) {
    TensorProgram p = testing::RandomProgram(seed);
    double c = SimulateLatency(p);
    CHECK(c > 0);
    CHECK(SimulateLatency(p) == c);
    CHECK(SimulateLatency(testing::RenameLoops(p, "q")) == c);
  }
  TensorProgram a = ScalarAdd();
  TensorProgram b = ScalarAdd();
  b.root[0].AsCompute().value = Add(Load("A", {IntImm(0)}), IntImm(-77));
  CHECK(SimulateLatency(a) == SimulateLatency(b));
}

TEST_CASE("vectorizing or parallelizing a legal loop never costs more") {
  int checked = 0;
  for (uint64_t seed = 0; seed < 300; ++seed) {
    TensorProgram e0 = testing::RandomWorkload(seed);
    TensorProgram p = testing::RandomSchedule(e0, seed, 5).program();
    double base = SimulateLatency(p);
    for (const std::string& var : AllLoops(p)) {
      if (FindLoop(p, var).kind != LoopKind::kSerial) continue;
      TensorProgram v = p;
      try {
        VectorizeLoop(&v, var);
        CHECK(SimulateLatency(v) <= base);
        ++checked;
      } catch (const Error&) {
      }
      if (OtherParallelOnPath(p, var)) continue;
      TensorProgram q = p;
      try {
        ParallelizeLoop(&q, var);
        CHECK(SimulateLatency(q) <= base);
        ++checked;
      } catch (const Error&) {
      }
    }
  }
  CHECK(checked > 100);

  // kinds set without legality checks still follow the formula
  TensorProgram g = Gmm(8, 8, 8);
  SetKind(&g.root, "j", LoopKind::kParallel);
  CHECK(SimulateLatency(g) <= SimulateLatency(Gmm(8, 8, 8)));
}

TEST_CASE("machine spec json") {
  MachineSpec d = MachineSpecFromJson(Json::object());
  CHECK(d.cores == 4);
  CHECK(d.vector_lanes == 8);
  CHECK(d.cache_capacity == 4096);
  CHECK(d.miss_cost == 8.0);
  MachineSpec s = MachineSpecFromJson(Json{{"cores", 16}, {"miss_cost", 20.5}});
  CHECK(s.cores == 16);
  CHECK(s.miss_cost == 20.5);
  CHECK(MachineSpecToJson(MachineSpecFromJson(MachineSpecToJson(s))) == MachineSpecToJson(s));
  CHECK_THROWS_AS(MachineSpecFromJson(Json{{"cores", 0}}), Error);
  CHECK_THROWS_AS(MachineSpecFromJson(Json{{"cores", 1.5}}), Error);
  CHECK_THROWS_AS(MachineSpecFromJson(Json{{"unroll_discount", 1.5}}), Error);
  CHECK_THROWS_AS(MachineSpecFromJson(Json{{"l2", 1}}), Error);
  CHECK_THROWS_AS(MachineSpecFromJson(Json::array()), Error);

  MachineSpec two_lanes;
  two_lanes.vector_lanes = 2;
  Schedule row(Relu2d(8, 8));
  row.Vectorize(row.GetLoops(row.GetBlock("relu"))[1]);
  CHECK(SimulateLatency(row.program(), two_lanes) == doctest::Approx(8 * 4 * 3));
}
