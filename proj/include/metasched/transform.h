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
 * \file metasched/transform.h
 * \brief Program rewrites behind the schedule primitives.
 *
 * Loops are addressed by variable name and blocks by block name. Each rewrite
 * either leaves the program valid and semantically unchanged or throws Error
 * with the violated precondition; the program is untouched on failure.
 */
#ifndef METASCHED_TRANSFORM_H_
#define METASCHED_TRANSFORM_H_

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "metasched/analysis.h"
#include "metasched/ir.h"

namespace metasched {

/*! \brief Deterministic generator of unused loop variable names. */
class NameSupply {
 public:
  NameSupply() = default;
  explicit NameSupply(const TensorProgram& p);
  /*! \brief Returns "<stem>_<n>" where stem is the hint up to its first '_'. */
  std::string Fresh(const std::string& hint);

 private:
  std::set<std::string> used_;
  int64_t counter_ = 0;
};

/*! \brief Relation of a block to the block it may be fused with. */
struct Counterpart {
  std::string block;
  /*! \brief True when the block consumes the counterpart's output. */
  bool is_consumer = false;
};

std::optional<Counterpart> FindCounterpart(const TensorProgram& p, const std::string& block);
/*! \brief Store index is a permutation of exactly the enclosing loop variables; no reduction. */
bool IsElementwise(const TensorProgram& p, const std::string& block);
/*! \brief Every enclosing loop of the block has the block as its only descendant. */
bool OwnsLoopNest(const TensorProgram& p, const std::string& block);
/*! \brief The variable of `loop_var` occurs in every write index below the loop. */
bool IsDataParallelLoop(const TensorProgram& p, const std::string& loop_var);
std::vector<std::string> LoopVarsOf(const TensorProgram& p, const std::string& block);
const Loop& FindLoop(const TensorProgram& p, const std::string& var);
std::vector<std::string> ReadersOf(const TensorProgram& p, const std::string& buffer);

// Rewrites. `factors` may contain one -1 which is inferred.
std::vector<std::string> SplitLoop(TensorProgram* p, const std::string& var, std::vector<int64_t> factors,
                                   NameSupply* names);
std::string FuseLoops(TensorProgram* p, const std::vector<std::string>& vars, NameSupply* names);
void ReorderLoops(TensorProgram* p, const std::vector<std::string>& vars);
void ComputeAtLoop(TensorProgram* p, const std::string& block, const std::string& loop_var, NameSupply* names);
void InlineBlock(TensorProgram* p, const std::string& block);
void ParallelizeLoop(TensorProgram* p, const std::string& var);
void VectorizeLoop(TensorProgram* p, const std::string& var);
void UnrollLoop(TensorProgram* p, const std::string& var);
void TensorizeLoop(TensorProgram* p, const std::string& var, const std::string& intrinsic);

}  // namespace metasched

#endif  // METASCHED_TRANSFORM_H_
