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
 * \file instruction.cc
 */
#include "metasched/instruction.h"

#include <cmath>

#include "metasched/ir.h"

namespace metasched {

bool Instruction::IsSampling() const { return op.rfind("sample_", 0) == 0; }

size_t Trace::NumSamples() const {
  size_t n = 0;
  for (const Instruction& inst : instructions) n += inst.IsSampling() ? 1 : 0;
  return n;
}

Json InstructionToJson(const Instruction& inst) {
  Json j = {{"op", inst.op}, {"inputs", inst.inputs}, {"attrs", inst.attrs}, {"outputs", inst.outputs}};
  if (inst.decision) j["decision"] = *inst.decision;
  return j;
}

Instruction InstructionFromJson(const Json& j) {
  if (!j.is_object()) throw Error("instruction must be a JSON object");
  for (const char* key : {"op", "inputs", "attrs", "outputs"}) {
    if (!j.contains(key)) throw Error(std::string("instruction lacks \"") + key + "\"");
  }
  Instruction inst;
  inst.op = j.at("op").get<std::string>();
  if (!j.at("inputs").is_array() || !j.at("outputs").is_array()) throw Error("inputs and outputs must be arrays");
  for (const Json& in : j.at("inputs")) {
    if (!in.is_string() && !in.is_number_integer()) throw Error("inputs must be reference ids or integers");
    inst.inputs.push_back(in);
  }
  inst.attrs = j.at("attrs");
  if (!inst.attrs.is_object()) throw Error("attrs must be an object");
  inst.outputs = j.at("outputs").get<std::vector<std::string>>();
  if (j.contains("decision")) inst.decision = j.at("decision");
  if (inst.IsSampling() != inst.decision.has_value()) {
    throw Error("decision must be present exactly on sampling instructions");
  }
  return inst;
}

double SampleLogProb(const Instruction& inst) {
  if (inst.op == "sample_perfect_tile") {
    return -std::log(inst.attrs.at("domain_size").get<double>());
  }
  if (inst.op == "sample_compute_location") {
    return -std::log(static_cast<double>(inst.attrs.at("domain").size()));
  }
  if (inst.op == "sample_categorical") {
    const Json& w = inst.attrs.at("weights");
    double total = 0;
    for (const Json& x : w) total += x.get<double>();
    return std::log(w.at(inst.decision->get<size_t>()).get<double>() / total);
  }
  return 0.0;
}

}  // namespace metasched
