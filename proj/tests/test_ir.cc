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

#include <set>

#include "metasched/analysis.h"
#include "metasched/ir.h"
#include "metasched/workloads.h"
#include "random_programs.h"

using namespace metasched;

namespace {

// relu1d(1024) after split(i, [32, 8, 4]).
TensorProgram SplitRelu() {
  TensorProgram p = Relu1d(1024);
  Expr idx = Add(Add(Mul(VarRef("a"), IntImm(32)), Mul(VarRef("b"), IntImm(4))), VarRef("c"));
  Stmt leaf = MakeCompute("relu", "B", {idx}, Max(Load("A", {idx}), IntImm(0)));
  p.root = {MakeLoop("a", 32, {MakeLoop("b", 8, {MakeLoop("c", 4, {leaf})})})};
  return p;
}

bool HasDiagnostic(const std::vector<std::string>& diags, const std::string& needle) {
  for (const std::string& d : diags) {
    if (d.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("validate accepts the builtin workloads") {
  CHECK(ValidateIR(Relu1d(1024)).empty());
  CHECK(ValidateIR(Gmm(16, 16, 16)).empty());
  CHECK(ValidateIR(DenseRelu(128, 128, 128)).empty());
  CHECK(ValidateIR(DenseBiasRelu(8, 8, 8)).empty());
  CHECK(ValidateIR(Conv1d(64, 4, 8, 3, 1, 1)).empty());
  CHECK(ValidateIR(SplitRelu()).empty());
}

TEST_CASE("validate reports unbound variables and non-affine indices") {
  TensorProgram p = Relu1d(16);
  p.root[0].AsLoop().body[0].AsCompute().value = Load("A", {VarRef("q")});
  auto diags = ValidateIR(p);
  CHECK(HasDiagnostic(diags, "unbound variable"));
  CHECK(HasDiagnostic(diags, "root/0/0"));

  TensorProgram sq = Relu1d(16);
  sq.root[0].AsLoop().body[0].AsCompute().value = Load("A", {Mul(VarRef("i"), VarRef("i"))});
  CHECK(HasDiagnostic(ValidateIR(sq), "non-affine index"));
  CHECK_THROWS_AS(CheckValid(sq), Error);
}

TEST_CASE("validate rejects duplicate writers and use before definition") {
  TensorProgram p = DenseRelu(4, 4, 4);
  std::swap(p.root[0], p.root[1]);
  CHECK(HasDiagnostic(ValidateIR(p), "before any block produces it"));

  TensorProgram q = Relu1d(8);
  Stmt dup = q.root[0];
  dup.AsLoop().var = "i2";
  dup.AsLoop().body[0].AsCompute().block = "relu2";
  dup.AsLoop().body[0].AsCompute().indices = {VarRef("i2")};
  dup.AsLoop().body[0].AsCompute().value = Load("A", {VarRef("i2")});
  q.root.push_back(dup);
  CHECK(HasDiagnostic(ValidateIR(q), "more than one writer"));
}

TEST_CASE("structural hash is alpha-invariant and separates splits") {
  TensorProgram p = Gmm(8, 8, 8);
  TensorProgram renamed = testing::RenameLoops(p, "x");
  CHECK(StructuralEqual(p, renamed));
  CHECK(StructuralHash(p) == StructuralHash(renamed));
  CHECK(StructuralEqual(p, p));

  TensorProgram e0 = Relu1d(1024);
  TensorProgram e1 = SplitRelu();
  CHECK_FALSE(StructuralEqual(e0, e1));
  CHECK(StructuralHash(e0) != StructuralHash(e1));
}

TEST_CASE("hash agrees with structural equality on random programs") {
  std::vector<TensorProgram> progs;
  std::vector<uint64_t> hashes;
  for (uint64_t s = 0; s < 1000; ++s) {
    progs.push_back(testing::RandomProgram(s));
    REQUIRE(ValidateIR(progs.back()).empty());
    hashes.push_back(StructuralHash(progs.back()));
  }
  int mismatches = 0;
  for (size_t a = 0; a < progs.size(); ++a) {
    for (size_t b = a + 1; b < progs.size(); ++b) {
      if ((hashes[a] == hashes[b]) != StructuralEqual(progs[a], progs[b])) ++mismatches;
    }
  }
  CHECK(mismatches == 0);
  // alpha-renamed copies always collide with the original
  for (size_t a = 0; a < progs.size(); a += 7) {
    TensorProgram r = testing::RenameLoops(progs[a], "z");
    CHECK(StructuralHash(r) == hashes[a]);
  }
}

TEST_CASE("serialization round-trips") {
  TensorProgram dr = DenseRelu(128, 128, 128);
  CHECK(StructuralEqual(DeserializeProgram(SerializeProgram(dr)), dr));
  for (uint64_t s = 0; s < 500; ++s) {
    TensorProgram p = testing::RandomProgram(1000 + s);
    TensorProgram q = DeserializeProgram(SerializeProgram(p));
    CHECK(StructuralEqual(p, q));
    CHECK(PrettyPrint(p) == PrettyPrint(q));
  }
}

TEST_CASE("deserialize reports malformed input") {
  CHECK_THROWS_AS(DeserializeProgram(""), Error);
  CHECK_THROWS_WITH_AS(DeserializeProgram("{\"buffers\": [}"), doctest::Contains("at byte 14"), Error);
  CHECK_THROWS_AS(DeserializeProgram("{\"buffers\": [], \"root\": [{\"loop\": 3}]}"), Error);
}

TEST_CASE("pretty print layout") {
  auto lines = [](const std::string& text) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start < text.size()) {
      size_t end = text.find('\n', start);
      std::string line = text.substr(start, end - start);
      if (line.rfind("buffer ", 0) != 0) out.push_back(line);
      start = end + 1;
    }
    return out;
  };
  auto relu = lines(PrettyPrint(Relu1d(1024)));
  REQUIRE(relu.size() == 2);
  CHECK(relu[0] == "for i in range(1024):");
  CHECK(relu[1] == "  relu: B[i] = max(A[i], 0)");

  auto mm = lines(PrettyPrint(Gmm(4, 4, 4)));
  REQUIRE(mm.size() == 5);
  CHECK(mm[2] == "    for k in range(4):");
  CHECK(mm[3].find("init C[i, j] = 0") != std::string::npos);
  CHECK(mm[4].find("C[i, j] = (C[i, j] + A[i, k]*B[k, j])") != std::string::npos);

  TensorProgram par = Relu1d(8);
  par.root[0].AsLoop().kind = LoopKind::kParallel;
  CHECK(lines(PrettyPrint(par))[0] == "for i in range(8) parallel:");

  TensorProgram g = Gmm(4, 4, 4);
  CHECK(PrettyPrint(g, true) == PrettyPrint(testing::RenameLoops(g, "w"), true));
}

TEST_CASE("builders fold constants") {
  CHECK(ExprToString(Add(VarRef("x"), IntImm(0))) == "x");
  CHECK(ExprToString(Mul(IntImm(1), VarRef("x"))) == "x");
  CHECK(ExprToString(Mul(VarRef("x"), IntImm(0))) == "0");
  CHECK(ExprToString(Add(IntImm(2), IntImm(3))) == "5");
  CHECK(FloorDivInt(-7, 2) == -4);
  CHECK(FloorModInt(-7, 2) == 1);
}
