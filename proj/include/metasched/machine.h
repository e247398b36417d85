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
 * \file metasched/machine.h
 * \brief Deterministic latency model of a small multicore with vector lanes,
 *  one cache level and a 4x4x4 matrix unit.
 */
#ifndef METASCHED_MACHINE_H_
#define METASCHED_MACHINE_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metasched/instruction.h"
#include "metasched/ir.h"

namespace metasched {

struct MachineSpec {
  int64_t cores = 4;
  int64_t vector_lanes = 8;
  /*! \brief Capacity in elements. */
  int64_t cache_capacity = 4096;
  double hit_cost = 1.0;
  double miss_cost = 8.0;
  double flop_cost = 1.0;
  /*! \brief Multiplier for unrolled loops of extent at most unroll_max_extent. */
  double unroll_discount = 0.9;
  int64_t unroll_max_extent = 16;
  double tensor_unit_cost = 8.0;

  /*! \brief Throws Error unless every parameter is positive and the discount lies in (0, 1]. */
  void Validate() const;
};

/*! \brief Missing keys keep their defaults; unknown keys are an error. */
MachineSpec MachineSpecFromJson(const Json& j);
Json MachineSpecToJson(const MachineSpec& spec);

/*!
 * \brief Abstract cycles of one run of p.
 *
 * Each leaf is charged per execution: flops plus one cost per memory access.
 * The cache suffix of a leaf is the longest suffix of its loop nest whose
 * summed per-buffer footprint fits in the cache. An access whose index does
 * not move with any loop above the suffix always hits. Otherwise the distinct
 * elements it touches are refetched once per iteration of the loops above the
 * suffix, down to the innermost such loop it depends on; those fetches are
 * misses, and the remaining executions hit.
 */
double SimulateLatency(const TensorProgram& p, const MachineSpec& spec = {});

/*! \brief Expected hits and misses over all executions of one leaf. */
struct LeafAccessStats {
  double hits = 0;
  double misses = 0;
};
/*! \brief One entry per leaf, in program order. */
std::vector<LeafAccessStats> AccessStats(const TensorProgram& p, const MachineSpec& spec = {});

struct FootprintTable {
  /*! \brief Enclosing loop variables of the leaf, outermost first. */
  std::vector<std::string> loops;
  /*!
   * \brief levels[q][buffer]: elements of `buffer` touched while loops q..end
   *  run and the loops above stay fixed. levels has loops.size() + 1 entries.
   */
  std::vector<std::map<std::string, int64_t>> levels;

  int64_t Total(size_t q) const;
};

FootprintTable Footprint(const TensorProgram& p, const std::string& block);

/*! \brief Index of the first loop of the cache suffix of `block`. */
size_t CacheSuffix(const FootprintTable& table, const MachineSpec& spec);

}  // namespace metasched

#endif  // METASCHED_MACHINE_H_
