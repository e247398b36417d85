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
 * \file metasched/interpreter.h
 * \brief Reference executor over 64-bit integer tensors.
 *
 * Loops run sequentially whatever their kind, so the interpreter defines the
 * meaning every schedule transformation has to preserve.
 */
#ifndef METASCHED_INTERPRETER_H_
#define METASCHED_INTERPRETER_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metasched/ir.h"

namespace metasched {

struct TensorValue {
  std::vector<int64_t> shape;
  std::vector<int64_t> data;  // row-major

  bool operator==(const TensorValue& other) const = default;
};

using TensorMap = std::map<std::string, TensorValue>;

/*!
 * \brief Executes p and returns every output-role buffer.
 * \throws Error on missing / mis-shaped inputs or out-of-bounds accesses.
 */
TensorMap Run(const TensorProgram& p, const TensorMap& inputs);

/*!
 * \brief Runs several input sets in one sweep over the loop nest; equivalent to
 *  calling Run on each, but index arithmetic is shared between the sets.
 */
std::vector<TensorMap> RunBatch(const TensorProgram& p, const std::vector<TensorMap>& inputs);

/*! \brief Uniform values in [-8, 8] for every input buffer, deterministic per seed. */
TensorMap RandomInputs(const TensorProgram& p, uint64_t seed);

}  // namespace metasched

#endif  // METASCHED_INTERPRETER_H_
