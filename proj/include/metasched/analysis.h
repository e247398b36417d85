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
 * \file metasched/analysis.h
 * \brief Affine index analysis shared by the schedule primitives, the machine
 *  model and the featurizer.
 */
#ifndef METASCHED_ANALYSIS_H_
#define METASCHED_ANALYSIS_H_

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "metasched/ir.h"

namespace metasched {

bool DependsOn(const Expr& e, const std::string& var);
void CollectVars(const Expr& e, std::set<std::string>* vars);
std::set<std::string> VarsOf(const Expr& e);
bool ReadsBuffer(const Expr& e, const std::string& buffer);
void CollectLoads(const Expr& e, std::vector<const ExprNode*>* loads);

Expr Substitute(const Expr& e, const std::map<std::string, Expr>& vmap);
/*! \brief Rewrites every Load of `buffer` through `fn(indices)`. */
Expr ReplaceLoads(const Expr& e, const std::string& buffer,
                  const std::function<Expr(const std::vector<Expr>&)>& fn);

/*!
 * \brief Quasi-affine: integer constants, variables, +, -, multiplication by a
 *  constant, and floordiv / floormod by a positive constant.
 */
bool IsQuasiAffine(const Expr& e);

/*! \brief Number of arithmetic operators in an expression, index math excluded. */
int64_t CountArithOps(const Expr& e);

/*!
 * \brief e = outer + sum(coef[v] * v) where every v in `inner` occurs only
 *  linearly and `outer` mentions none of them. nullopt when that split is not
 *  possible (an inner variable under floordiv / floormod / non-constant mul).
 */
struct LinearSplit {
  Expr outer;
  std::map<std::string, int64_t> coef;
};
std::optional<LinearSplit> SplitLinear(const Expr& e, const std::set<std::string>& inner);

struct IntRange {
  int64_t lo = 0;
  int64_t hi = 0;
  int64_t Size() const { return hi - lo + 1; }
};

/*! \brief Interval bound of e; variables missing from `env` are treated as 0. */
IntRange BoundOf(const Expr& e, const std::map<std::string, IntRange>& env);

/*! \brief A leaf statement together with its enclosing loops. */
struct LeafInfo {
  StmtPath path;
  std::vector<const Loop*> loops;  // outermost first
  const Stmt* stmt = nullptr;
};
std::vector<LeafInfo> CollectLeaves(const TensorProgram& p);
std::optional<LeafInfo> FindLeaf(const TensorProgram& p, const std::string& block);

/*! \brief A memory access made by a leaf; `span` is the tile size per dimension. */
struct Access {
  std::string buffer;
  std::vector<Expr> index;
  int64_t span = 1;
  bool is_write = false;
};
/*! \brief Accesses made once per execution of the leaf body (store included). */
std::vector<Access> LeafAccesses(const Stmt& leaf);

/*! \brief Variables of the written index (store indices or the C operand). */
std::set<std::string> WrittenVars(const Stmt& leaf);
/*! \brief Enclosing loop variables read by the leaf but absent from the write index. */
std::vector<std::string> ReductionVars(const Stmt& leaf, const std::vector<const Loop*>& loops);
bool IsReductionLeaf(const Stmt& leaf);
/*! \brief Buffer written by the leaf. */
const std::string& WrittenBuffer(const Stmt& leaf);
/*! \brief Buffers read by the leaf, excluding its own output. */
std::set<std::string> ReadBuffers(const Stmt& leaf);

}  // namespace metasched

#endif  // METASCHED_ANALYSIS_H_
