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
 * \file metasched/space.h
 * \brief Transformation modules, their composition into a space generator,
 *  and sampling or enumeration of the resulting design space.
 */
#ifndef METASCHED_SPACE_H_
#define METASCHED_SPACE_H_

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "metasched/instruction.h"
#include "metasched/ir.h"
#include "metasched/schedule.h"
#include "metasched/trace.h"

namespace metasched {

/*! \brief Tag carried by the categorical sample that picks a module at a block. */
inline constexpr const char* kModuleChoiceTag = "module_choice";

/*!
 * \brief Analysis, sampling and transformation bundled behind one call.
 *  Apply only uses Schedule primitives, so all of its effects are traced.
 */
class TransformationModule {
 public:
  virtual ~TransformationModule() = default;
  virtual std::string name() const = 0;
  virtual bool Applicable(const Schedule& sch, const std::string& block) const = 0;
  virtual void Apply(Schedule* sch, const BlockRV& block) const = 0;
  /*! \brief Constructor entry of the space configuration format. */
  virtual Json ToJson() const = 0;
};

using ModulePtr = std::shared_ptr<const TransformationModule>;

/*!
 * \brief Tiles every spatial loop into (#S + 1) factors and every reduction
 *  loop into (#R + 1) factors, then orders the tiles band by band following
 *  `structure`, with the innermost remainders last (reduction before spatial).
 */
ModulePtr MultiLevelTiling(const std::string& structure = "SSRSR");

/*! \brief Samples a compute location for an elementwise block and moves or inlines it. */
ModulePtr AutoInline();

struct PvuOptions {
  int64_t max_parallel_extent = 256;
  std::vector<int64_t> vector_widths = {4, 8};
  /*! \brief 0 means no unrolling. */
  std::vector<int64_t> unroll_depths = {0, 16, 64};
};
ModulePtr ParallelizeVectorizeUnroll(PvuOptions options = {});

/*! \brief Exposes a 4x4x4 tile of a matmul-like block and maps it to tu.mma4. */
ModulePtr UseTensorUnit();

/*!
 * \brief Visits blocks in program pre-order, once each, and at every block
 *  draws one applicable module with a traced categorical before applying it.
 */
class ComposedModule : public TransformationModule {
 public:
  explicit ComposedModule(std::vector<ModulePtr> modules);

  std::string name() const override { return "compose"; }
  bool Applicable(const Schedule& sch, const std::string& block) const override;
  /*! \brief Picks and applies one module at `block`. */
  void Apply(Schedule* sch, const BlockRV& block) const override;
  Json ToJson() const override;

  /*! \brief Runs the generator over every block of the schedule's program. */
  void Generate(Schedule* sch) const;

  const std::vector<ModulePtr>& modules() const { return modules_; }

 private:
  std::vector<ModulePtr> modules_;
};

using Generator = std::shared_ptr<const ComposedModule>;

Generator Compose(std::vector<ModulePtr> modules);

/*!
 * \brief Parses {"modules":[{"mlt":{"structure":"SSRSR"}},{"auto_inline":{}},
 *  {"pvu":{"widths":[4,8],"max_parallel_extent":256,"unroll_depths":[0,16]}},
 *  {"tensor_unit":{}}]}. Throws Error on unknown keys or bad parameters.
 */
Generator GeneratorFromJson(const Json& config);
Generator DefaultGenerator();

struct DesignSpace {
  TensorProgram workload;
  /*! \brief Validated traces, one per distinct final program. */
  std::vector<Trace> traces;
  std::vector<TensorProgram> programs;
  std::vector<uint64_t> hashes;
};

/*! \brief Runs the generator k times from seeds derived from `seed`; keeps distinct programs. */
DesignSpace GenerateSpace(const TensorProgram& e0, const Generator& generator, int k, uint64_t seed);

/*! \brief One generator run with fresh randomness. The returned trace is validated. */
ReplayResult SampleTrace(const TensorProgram& e0, const Generator& generator, uint64_t seed);

struct EnumeratedSpace {
  std::vector<Trace> traces;
  std::vector<uint64_t> hashes;
  /*! \brief True when enumeration stopped at the cap. */
  bool capped = false;
};

/*! \brief Depth-first walk over every decision combination, deduplicated by program hash. */
EnumeratedSpace EnumerateSpace(const TensorProgram& e0, const Generator& generator, size_t cap);

/*!
 * \brief Reruns the generator following `t` up to its sampling instruction
 *  `index`, takes `decision` there, and draws every later decision afresh.
 *  Used when a module choice changes, since the instructions after it no
 *  longer line up with the old trace.
 */
ReplayResult Regenerate(const TensorProgram& e0, const Generator& generator, const Trace& t, size_t index,
                        const Json& decision, uint64_t seed);

struct Proposal {
  Trace trace;
  bool mutated = false;
  /*! \brief Set when the proposal came from regeneration; the trace is then already valid. */
  bool regenerated = false;
};

/*!
 * \brief Mutates one decision of `t`. Module choices are regenerated, all
 *  other decisions are changed in place and still need validation.
 */
Proposal ProposeMutation(const TensorProgram& e0, const Generator& generator, const Trace& t,
                         std::mt19937_64& rng);

}  // namespace metasched

#endif  // METASCHED_SPACE_H_
