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
 * \file metasched/schedule.h
 * \brief Schedule state: the current program, its random variables and the
 *  trace of every sampling and transformation call made on it.
 */
#ifndef METASCHED_SCHEDULE_H_
#define METASCHED_SCHEDULE_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "metasched/instruction.h"
#include "metasched/ir.h"
#include "metasched/transform.h"

namespace metasched {

struct LoopRV {
  std::string id;
};
struct BlockRV {
  std::string id;
};
/*! \brief Sampled integer. */
struct ExprRV {
  std::string id;
};
/*! \brief Sampled compute location: kRootLocation, kInlineLocation or a loop index. */
struct LocationRV {
  std::string id;
};

constexpr int64_t kRootLocation = -1;
constexpr int64_t kInlineLocation = -2;

using FactorArg = std::variant<int64_t, ExprRV>;

/*! \brief A sampling call about to draw; `domain` lists the admissible decisions. */
struct SampleSite {
  size_t ordinal = 0;
  std::string op;
  const std::vector<Json>* domain = nullptr;
  const std::vector<double>* weights = nullptr;
};

/*!
 * \brief Chooses a decision for a sampling call. Returning nullopt draws from
 *  the site's distribution using the schedule rng. A returned value outside
 *  the domain makes the sampling call fail.
 */
using DecisionHook = std::function<std::optional<Json>(const SampleSite&)>;

/*! \brief Ordered factorizations of `extent` into n positive factors, lexicographic. */
std::vector<std::vector<int64_t>> PerfectTilings(int64_t extent, int n);

class Schedule {
 public:
  explicit Schedule(TensorProgram program, uint64_t seed = 0);

  const TensorProgram& program() const { return program_; }
  const Trace& trace() const { return trace_; }
  std::mt19937_64& rng() { return rng_; }
  void SetDecisionHook(DecisionHook hook) { hook_ = std::move(hook); }
  /*! \brief Number of sampling calls made so far. */
  size_t num_samples() const { return num_samples_; }

  // analysis
  BlockRV GetBlock(const std::string& name);
  std::vector<BlockRV> GetBlocks();
  std::vector<LoopRV> GetLoops(const BlockRV& block);

  // transformations
  std::vector<LoopRV> Split(const LoopRV& loop, const std::vector<FactorArg>& factors);
  LoopRV Fuse(const std::vector<LoopRV>& loops);
  void Reorder(const std::vector<LoopRV>& loops);
  void ComputeAt(const BlockRV& block, const LoopRV& loop);
  /*! \brief Dispatches on the location: root is a no-op, inline inlines. */
  void ComputeAt(const BlockRV& block, const LocationRV& location);
  void Inline(const BlockRV& block);
  void Parallel(const LoopRV& loop);
  void Vectorize(const LoopRV& loop);
  void Unroll(const LoopRV& loop);
  /*! \brief Unrolls when 0 < depth and extent <= depth; otherwise a no-op. */
  void Unroll(const LoopRV& loop, const ExprRV& depth);
  void Tensorize(const LoopRV& loop, const std::string& intrinsic);

  // sampling
  std::vector<ExprRV> SamplePerfectTile(const LoopRV& loop, int n);
  /*! \brief A non-empty tag is recorded in the instruction attrs for later inspection. */
  ExprRV SampleCategorical(const std::vector<int64_t>& candidates, const std::vector<double>& weights,
                           const std::string& tag = "");
  LocationRV SampleComputeLocation(const BlockRV& block);

  // inspection, not traced
  int64_t Value(const ExprRV& rv) const;
  int64_t Value(const LocationRV& rv) const;
  const std::string& LoopVar(const LoopRV& rv) const;
  const Loop& GetLoop(const LoopRV& rv) const;
  const std::string& BlockName(const BlockRV& rv) const;
  /*! \brief Domain of sample_compute_location against the current program. */
  std::vector<int64_t> ComputeLocationDomain(const std::string& block) const;

  /*!
   * \brief Re-executes a recorded instruction. Inputs must already be ids of
   *  this schedule; returns the ids of the outputs produced here. A recorded
   *  decision is offered to the hook through the sampling path.
   */
  std::vector<std::string> Apply(const Instruction& inst);

 private:
  using RefValue = std::variant<std::string, int64_t>;
  enum class RefKind { kLoop, kBlock, kExpr, kLocation };
  struct Ref {
    RefKind kind;
    RefValue value;
  };

  std::string NewRef(RefKind kind, RefValue value);
  const Ref& Lookup(const std::string& id, RefKind kind) const;
  std::string LiveLoop(const std::string& id) const;
  std::string LiveBlock(const std::string& id) const;
  Json Draw(const std::string& op, const std::vector<Json>& domain, const std::vector<double>& weights);
  void Record(Instruction inst);

  std::vector<LoopRV> GetLoopsImpl(const std::string& block_id);
  std::vector<LoopRV> SplitImpl(const std::string& loop_id, const std::vector<Json>& factors);
  std::vector<ExprRV> SamplePerfectTileImpl(const std::string& loop_id, int n);
  ExprRV SampleCategoricalImpl(const std::vector<int64_t>& candidates, const std::vector<double>& weights,
                               const std::string& tag);
  LocationRV SampleComputeLocationImpl(const std::string& block_id);
  void ComputeAtImpl(const std::string& block_id, const std::string& target_id);
  void UnrollImpl(const std::string& loop_id, const std::optional<std::string>& depth_id);

  TensorProgram program_;
  NameSupply names_;
  std::mt19937_64 rng_;
  DecisionHook hook_;
  Trace trace_;
  std::map<std::string, Ref> refs_;
  int64_t next_ref_ = 0;
  size_t num_samples_ = 0;
};

}  // namespace metasched

#endif  // METASCHED_SCHEDULE_H_
