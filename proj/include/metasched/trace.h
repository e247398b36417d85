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
 * \file metasched/trace.h
 * \brief Replay, persistence, mutation and validation of traces.
 */
#ifndef METASCHED_TRACE_H_
#define METASCHED_TRACE_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "metasched/instruction.h"
#include "metasched/ir.h"

namespace metasched {

/*! \brief Replay failure at a given instruction. */
class ReplayError : public Error {
 public:
  ReplayError(size_t index, const std::string& reason)
      : Error("instruction " + std::to_string(index) + ": " + reason), index_(index), reason_(reason) {}
  size_t index() const { return index_; }
  const std::string& reason() const { return reason_; }

 private:
  size_t index_;
  std::string reason_;
};

enum class ReplayMode {
  /*! \brief Reuse every recorded decision; a decision outside its recomputed domain fails. */
  kFollow,
  /*! \brief Draw every decision afresh from the recomputed domains. */
  kResample,
};

struct ReplayResult {
  TensorProgram program;
  Trace trace;
};

/*! \brief Runs t on a fresh schedule over e0. Throws ReplayError. */
ReplayResult Replay(const TensorProgram& e0, const Trace& t, ReplayMode mode = ReplayMode::kFollow,
                    uint64_t seed = 0);

/*! \brief JSON lines; an optional header line {"e0_hash": h} comes first. */
std::string SerializeTrace(const Trace& t, std::optional<uint64_t> e0_hash = std::nullopt);

struct ParsedTrace {
  Trace trace;
  std::optional<uint64_t> e0_hash;
};
/*! \brief Throws Error naming the 1-based line of the first malformed line. */
ParsedTrace DeserializeTrace(const std::string& text);

struct MutationResult {
  Trace trace;
  /*! \brief False when no sampling instruction has a domain larger than one. */
  bool mutated = false;
  /*! \brief Index of the mutated instruction. */
  size_t index = 0;
};

/*!
 * \brief Redraws one decision, chosen uniformly among sampling instructions
 *  with more than one option, uniformly among the other options.
 */
MutationResult Mutate(const Trace& t, std::mt19937_64& rng);

struct ValidationResult {
  bool accepted = false;
  TensorProgram program;
  /*! \brief Replayed trace with refreshed domains and prior; validated is set. */
  Trace trace;
  std::string reason;
  size_t index = 0;
};

ValidationResult ValidateTrace(const TensorProgram& e0, const Trace& t);

/*! \brief Log prior of a validated trace. Throws Error otherwise. */
double TracePrior(const Trace& t);

/*! \brief Sum of SampleLogProb over the trace's sampling instructions. */
double ComputePrior(const Trace& t);

}  // namespace metasched

#endif  // METASCHED_TRACE_H_
