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
#include <cmath>
#include <random>

#include "metasched/cost_model.h"
#include "metasched/machine.h"
#include "metasched/schedule.h"
#include "metasched/space.h"
#include "metasched/workloads.h"
#include "random_programs.h"

using namespace metasched;

namespace {

TuningRecord Record(const TensorProgram& p, double latency) {
  TuningRecord r;
  r.latency = latency;
  r.features = Featurize(p);
  return r;
}

std::vector<TensorProgram> VariedPrograms(size_t n) {
  std::vector<TensorProgram> out;
  for (uint64_t seed = 0; out.size() < n; ++seed) {
    TensorProgram e0 = testing::RandomWorkload(seed);
    out.push_back(testing::RandomSchedule(e0, seed, 6).program());
  }
  return out;
}

}  // namespace

TEST_CASE("features of simple programs") {
  TensorProgram scalar;
  scalar.buffers = {{"A", {1}, BufferRole::kInput}, {"B", {1}, BufferRole::kOutput}};
  scalar.root = {MakeCompute("add", "B", {IntImm(0)}, Add(Load("A", {IntImm(0)}), IntImm(1)))};
  FeatureVector f = Featurize(scalar);
  CHECK(f[0] == doctest::Approx(std::log(2.0)));
  CHECK(f[1] == doctest::Approx(std::log(2.0)));
  CHECK(f[4] == doctest::Approx(std::log(3.0)));
  CHECK(f[5] == 0.0);
  CHECK(f[8] == 0.0);

  Schedule vec(Relu2d(4, 8));
  vec.Vectorize(vec.GetLoops(vec.GetBlock("relu"))[1]);
  FeatureVector v = Featurize(vec.program());
  CHECK(v[2] == 1.0);
  CHECK(v[3] == 0.0);
  CHECK(v[8] == 2.0);
  CHECK(v[0] == doctest::Approx(std::log(33.0)));

  Schedule tu(Gmm(8, 8, 8));
  auto l = tu.GetLoops(tu.GetBlock("matmul"));
  auto i = tu.Split(l[0], {int64_t{-1}, int64_t{4}});
  auto j = tu.Split(l[1], {int64_t{-1}, int64_t{4}});
  auto k = tu.Split(l[2], {int64_t{-1}, int64_t{4}});
  tu.Reorder({i[0], j[0], k[0], i[1], j[1], k[1]});
  tu.Tensorize(i[1], "tu.mma4");
  CHECK(Featurize(tu.program())[7] == doctest::Approx(std::log(9.0)));
  CHECK(FeatureNames().size() == kNumFeatures);
}

TEST_CASE("features are alpha invariant and finite") {
  for (uint64_t seed = 0; seed < 100; ++seed) {
    TensorProgram p = testing::RandomProgram(seed);
    FeatureVector f = Featurize(p);
    CHECK(f == Featurize(testing::RenameLoops(p, "w")));
    for (double x : f) CHECK(std::isfinite(x));
  }
}

TEST_CASE("fit on one record reproduces it") {
  ProxyModel model;
  CHECK_FALSE(model.fitted());
  CHECK(model.Predict(Gmm(4, 4, 4)) == 1.0);
  CHECK_THROWS_AS(model.Fit({}), Error);
  TensorProgram p = Gmm(8, 8, 8);
  model.Fit({Record(p, 1234.5)});
  CHECK(model.Predict(p) == doctest::Approx(1234.5).epsilon(1e-12));
}

TEST_CASE("exact linear ground truth is recovered") {
  std::vector<TensorProgram> programs = VariedPrograms(150);
  const std::array<double, kNumFeatures> w = {0.3, 0.5, -0.7, -1.1, 0.2, 0.4, -0.3, -0.9, 0.05};
  std::vector<TuningRecord> records;
  for (const TensorProgram& p : programs) {
    TuningRecord r = Record(p, 1.0);
    double y = 0.25;
    for (size_t c = 0; c < kNumFeatures; ++c) y += w[c] * r.features[c];
    r.latency = std::exp(y);
    records.push_back(r);
  }
  std::vector<TuningRecord> train(records.begin(), records.begin() + 100);
  ProxyModel model;
  model.Fit(train);
  CHECK_FALSE(model.degenerate());
  double worst = 0;
  for (size_t t = 100; t < records.size(); ++t) {
    double rel = std::abs(model.Predict(records[t].features) - records[t].latency) / records[t].latency;
    worst = std::max(worst, rel);
  }
  MESSAGE("worst held-out relative error " << worst);
  CHECK(worst < 1e-6);
}

TEST_CASE("fit ignores record order") {
  std::vector<TensorProgram> programs = VariedPrograms(40);
  std::vector<TuningRecord> records;
  for (const TensorProgram& p : programs) records.push_back(Record(p, SimulateLatency(p)));
  ProxyModel a, b;
  a.Fit(records);
  std::vector<TuningRecord> shuffled = records;
  std::mt19937_64 rng(3);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  b.Fit(shuffled);
  for (const TuningRecord& r : records) {
    CHECK(a.Predict(r.features) == doctest::Approx(b.Predict(r.features)).epsilon(1e-9));
  }
}

TEST_CASE("degenerate designs fall back to the mean") {
  TensorProgram p = Gmm(8, 8, 8);
  ProxyModel model;
  model.Fit({Record(p, 10.0), Record(p, 1000.0)});
  CHECK(model.degenerate());
  CHECK(model.Predict(p) == doctest::Approx(100.0));

  ProxyModel warm;
  warm.WarmStart({Record(p, 4.0), Record(p, 16.0)});
  CHECK_FALSE(warm.fitted());
  CHECK(warm.Predict(Relu1d(8)) == doctest::Approx(8.0));
}

TEST_CASE("rank correlation on held-out matmul candidates") {
  TensorProgram e0 = Gmm(64, 64, 64);
  DesignSpace space = GenerateSpace(e0, DefaultGenerator(), 400, 11);
  REQUIRE(space.programs.size() >= 192);
  std::vector<TuningRecord> train;
  for (size_t t = 0; t < 128; ++t) train.push_back(Record(space.programs[t], SimulateLatency(space.programs[t])));
  ProxyModel model;
  model.Fit(train);
  std::vector<double> predicted, actual;
  for (size_t t = 128; t < 192; ++t) {
    predicted.push_back(model.Predict(space.programs[t]));
    actual.push_back(SimulateLatency(space.programs[t]));
  }
  double rho = SpearmanCorrelation(predicted, actual);
  MESSAGE("spearman " << rho);
  CHECK(rho >= 0.6);
}

TEST_CASE("spearman correlation") {
  CHECK(SpearmanCorrelation({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(SpearmanCorrelation({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // ties take the average rank: (1, 2.5, 2.5, 4) against (1, 2, 3, 4)
  CHECK(SpearmanCorrelation({1, 2, 2, 3}, {1, 2, 3, 4}) == doctest::Approx(4.5 / std::sqrt(4.5 * 5.0)));
  CHECK(SpearmanCorrelation({1, 1, 1}, {1, 2, 3}) == 0.0);
  CHECK_THROWS_AS(SpearmanCorrelation({1, 2}, {1}), Error);
}

TEST_CASE("tuning records round-trip") {
  Schedule sch(Gmm(8, 8, 8), 1);
  auto l = sch.GetLoops(sch.GetBlock("matmul"));
  auto f = sch.SamplePerfectTile(l[0], 2);
  sch.Split(l[0], {f[0], f[1]});
  TuningRecord r = Record(sch.program(), SimulateLatency(sch.program()));
  r.trace = sch.trace();
  std::string text = SerializeRecords({r, r});
  std::vector<TuningRecord> back = DeserializeRecords(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].trace.instructions == r.trace.instructions);
  CHECK(back[0].latency == r.latency);
  CHECK(back[0].features == r.features);
  CHECK_THROWS_WITH_AS(DeserializeRecords(text + "{\"latency\": 3}\n"), doctest::Contains("record line 3"), Error);
  CHECK_THROWS_AS(DeserializeRecords("{\"trace\":[],\"latency\":-1,\"features\":[0,0,0,0,0,0,0,0,0]}"), Error);
  CHECK_THROWS_AS(DeserializeRecords("{\"trace\":[],\"latency\":1,\"features\":[0]}"), Error);
}
