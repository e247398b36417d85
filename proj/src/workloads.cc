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
 * \file workloads.cc
 */
#include "metasched/workloads.h"

namespace metasched {

namespace {

void RequirePositive(const std::vector<int64_t>& values, const char* what) {
  for (int64_t v : values) {
    if (v < 1) throw Error(std::string(what) + ": shape parameters must be positive");
  }
}

Expr V(const char* name) { return VarRef(name); }

Stmt ReluNest(const std::string& in, const std::string& out, int64_t n, int64_t m) {
  Expr value = Max(Load(in, {V("i_r"), V("j_r")}), IntImm(0));
  return MakeLoop("i_r", n, {MakeLoop("j_r", m, {MakeCompute("relu", out, {V("i_r"), V("j_r")}, value)})});
}

Stmt MatmulNest(const std::string& out, int64_t n, int64_t m, int64_t k, const char* block) {
  Expr update = Add(Load(out, {V("i"), V("j")}),
                    Mul(Load("A", {V("i"), V("k")}), Load("B", {V("k"), V("j")})));
  Stmt body = MakeCompute(block, out, {V("i"), V("j")}, update, IntImm(0));
  return MakeLoop("i", n, {MakeLoop("j", m, {MakeLoop("k", k, {body})})});
}

}  // namespace

TensorProgram Gmm(int64_t n, int64_t m, int64_t k) {
  RequirePositive({n, m, k}, "gmm");
  TensorProgram p;
  p.buffers = {{"A", {n, k}, BufferRole::kInput},
               {"B", {k, m}, BufferRole::kInput},
               {"C", {n, m}, BufferRole::kOutput}};
  p.root = {MatmulNest("C", n, m, k, "matmul")};
  CheckValid(p);
  return p;
}

TensorProgram Relu1d(int64_t n) {
  RequirePositive({n}, "relu1d");
  TensorProgram p;
  p.buffers = {{"A", {n}, BufferRole::kInput}, {"B", {n}, BufferRole::kOutput}};
  p.root = {MakeLoop("i", n, {MakeCompute("relu", "B", {V("i")}, Max(Load("A", {V("i")}), IntImm(0)))})};
  CheckValid(p);
  return p;
}

TensorProgram Relu2d(int64_t n, int64_t m) {
  RequirePositive({n, m}, "relu2d");
  TensorProgram p;
  p.buffers = {{"A", {n, m}, BufferRole::kInput}, {"B", {n, m}, BufferRole::kOutput}};
  p.root = {ReluNest("A", "B", n, m)};
  CheckValid(p);
  return p;
}

TensorProgram DenseRelu(int64_t n, int64_t m, int64_t k) {
  RequirePositive({n, m, k}, "dense_relu");
  TensorProgram p;
  p.buffers = {{"A", {n, k}, BufferRole::kInput},
               {"B", {k, m}, BufferRole::kInput},
               {"D", {n, m}, BufferRole::kIntermediate},
               {"Y", {n, m}, BufferRole::kOutput}};
  p.root = {MatmulNest("D", n, m, k, "dense"), ReluNest("D", "Y", n, m)};
  CheckValid(p);
  return p;
}

TensorProgram DenseBiasRelu(int64_t n, int64_t m, int64_t k) {
  RequirePositive({n, m, k}, "dense_bias_relu");
  TensorProgram p;
  p.buffers = {{"A", {n, k}, BufferRole::kInput},
               {"B", {k, m}, BufferRole::kInput},
               {"bias", {m}, BufferRole::kInput},
               {"D", {n, m}, BufferRole::kIntermediate},
               {"E", {n, m}, BufferRole::kIntermediate},
               {"Y", {n, m}, BufferRole::kOutput}};
  Expr biased = Add(Load("D", {V("i_b"), V("j_b")}), Load("bias", {V("j_b")}));
  Stmt bias = MakeLoop("i_b", n, {MakeLoop("j_b", m, {MakeCompute("bias", "E", {V("i_b"), V("j_b")}, biased)})});
  p.root = {MatmulNest("D", n, m, k, "dense"), bias, ReluNest("E", "Y", n, m)};
  CheckValid(p);
  return p;
}

TensorProgram Conv1d(int64_t length, int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride,
                     int64_t padding) {
  RequirePositive({length, in_ch, out_ch, kernel, stride}, "conv1d");
  if (padding < 0) throw Error("conv1d: padding must be non-negative");
  int64_t padded = length + 2 * padding;
  if (padded < kernel || (padded - kernel) % stride != 0) {
    throw Error("conv1d: (length + 2*padding - kernel) must be a non-negative multiple of stride");
  }
  int64_t out_len = (padded - kernel) / stride + 1;
  TensorProgram p;
  p.buffers = {{"X", {in_ch, length}, BufferRole::kInput},
               {"W", {out_ch, in_ch, kernel}, BufferRole::kInput},
               {"P", {in_ch, padded}, BufferRole::kIntermediate},
               {"Y", {out_ch, out_len}, BufferRole::kOutput}};
  // P[c, x] = X[c, x - padding] inside the valid range, else 0.
  Expr x = V("x_p");
  Expr inside = Select(Lt(x, IntImm(padding)), IntImm(0),
                       Select(Lt(x, IntImm(padding + length)),
                              Load("X", {V("c_p"), Sub(x, IntImm(padding))}), IntImm(0)));
  Stmt pad = MakeLoop("c_p", in_ch, {MakeLoop("x_p", padded, {MakeCompute("pad", "P", {V("c_p"), x}, inside)})});
  Expr update = Add(Load("Y", {V("o"), V("x")}),
                    Mul(Load("W", {V("o"), V("c"), V("r")}),
                        Load("P", {V("c"), Add(Mul(V("x"), IntImm(stride)), V("r"))})));
  Stmt conv = MakeLoop(
      "o", out_ch,
      {MakeLoop("x", out_len,
                {MakeLoop("c", in_ch, {MakeLoop("r", kernel, {MakeCompute("conv", "Y", {V("o"), V("x")}, update, IntImm(0))})})})});
  p.root = {pad, conv};
  CheckValid(p);
  return p;
}

const std::vector<WorkloadSpec>& Workloads() {
  static const std::vector<WorkloadSpec> kWorkloads = {
      {"gmm", {"n", "m", "k"}, {64, 64, 64},
       [](const std::vector<int64_t>& s) { return Gmm(s[0], s[1], s[2]); }},
      {"relu1d", {"n"}, {1024}, [](const std::vector<int64_t>& s) { return Relu1d(s[0]); }},
      {"dense_relu", {"n", "m", "k"}, {128, 128, 128},
       [](const std::vector<int64_t>& s) { return DenseRelu(s[0], s[1], s[2]); }},
      {"conv1d", {"length", "in_ch", "out_ch", "kernel", "stride", "padding"}, {64, 4, 8, 3, 1, 1},
       [](const std::vector<int64_t>& s) { return Conv1d(s[0], s[1], s[2], s[3], s[4], s[5]); }},
  };
  return kWorkloads;
}

TensorProgram BuildWorkload(const std::string& name, const std::vector<int64_t>& shape) {
  for (const WorkloadSpec& w : Workloads()) {
    if (w.name != name) continue;
    const std::vector<int64_t>& s = shape.empty() ? w.defaults : shape;
    if (s.size() != w.params.size()) {
      throw Error("workload " + name + " expects " + std::to_string(w.params.size()) + " shape values");
    }
    return w.build(s);
  }
  throw Error("unknown workload " + name);
}

}  // namespace metasched
