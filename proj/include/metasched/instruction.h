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
 * \file metasched/instruction.h
 * \brief Trace data types.
 */
#ifndef METASCHED_INSTRUCTION_H_
#define METASCHED_INSTRUCTION_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace metasched {

using Json = nlohmann::json;

/*!
 * \brief One traced call.
 *
 * Inputs are either integer literals or string ids naming an output of an
 * earlier instruction. `decision` is present exactly for sampling ops.
 */
struct Instruction {
  std::string op;
  std::vector<Json> inputs;
  Json attrs = Json::object();
  std::vector<std::string> outputs;
  std::optional<Json> decision;

  bool IsSampling() const;
  bool operator==(const Instruction& other) const = default;
};

struct Trace {
  std::vector<Instruction> instructions;
  /*! \brief Sum of per-decision log prior probabilities, set by validation. */
  double prior_log_prob = 0.0;
  /*! \brief True once the trace went through validate_trace. */
  bool validated = false;

  size_t NumSamples() const;
};

Json InstructionToJson(const Instruction& inst);
Instruction InstructionFromJson(const Json& j);

/*! \brief Log prior of one sampling instruction given its recorded attrs. */
double SampleLogProb(const Instruction& inst);

}  // namespace metasched

#endif  // METASCHED_INSTRUCTION_H_
