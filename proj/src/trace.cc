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
 * \file trace.cc
 */
#include "metasched/trace.h"

#include <map>
#include <sstream>

#include "metasched/schedule.h"

namespace metasched {

ReplayResult Replay(const TensorProgram& e0, const Trace& t, ReplayMode mode, uint64_t seed) {
  Schedule sch(e0, seed);
  std::vector<const Json*> decisions;
  for (const Instruction& inst : t.instructions) {
    if (inst.IsSampling()) decisions.push_back(inst.decision ? &*inst.decision : nullptr);
  }
  if (mode == ReplayMode::kFollow) {
    sch.SetDecisionHook([&](const SampleSite& site) -> std::optional<Json> {
      if (site.ordinal >= decisions.size() || decisions[site.ordinal] == nullptr) {
        throw Error(site.op + ": no recorded decision");
      }
      return *decisions[site.ordinal];
    });
  }
  std::map<std::string, std::string> alias;
  for (size_t i = 0; i < t.instructions.size(); ++i) {
    Instruction inst = t.instructions[i];
    try {
      for (Json& in : inst.inputs) {
        if (!in.is_string()) continue;
        auto it = alias.find(in.get<std::string>());
        if (it == alias.end()) throw Error("reference " + in.get<std::string>() + " is not defined earlier");
        in = it->second;
      }
      std::vector<std::string> out = sch.Apply(inst);
      for (size_t k = 0; k < out.size(); ++k) alias[inst.outputs[k]] = out[k];
    } catch (const Error& e) {
      throw ReplayError(i, e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ReplayError(i, std::string("malformed instruction: ") + e.what());
    }
  }
  ReplayResult result{sch.program(), sch.trace()};
  result.trace.prior_log_prob = ComputePrior(result.trace);
  return result;
}

std::string SerializeTrace(const Trace& t, std::optional<uint64_t> e0_hash) {
  std::string out;
  if (e0_hash) out += Json{{"e0_hash", *e0_hash}}.dump() + "\n";
  for (const Instruction& inst : t.instructions) out += InstructionToJson(inst).dump() + "\n";
  return out;
}

ParsedTrace DeserializeTrace(const std::string& text) {
  ParsedTrace parsed;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Json j = Json::parse(line);
      if (j.is_object() && j.contains("e0_hash") && !j.contains("op")) {
        if (lineno != 1 || parsed.e0_hash) throw Error("header must be the first line");
        parsed.e0_hash = j.at("e0_hash").get<uint64_t>();
        continue;
      }
      parsed.trace.instructions.push_back(InstructionFromJson(j));
    } catch (const std::exception& e) {
      throw Error("trace line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return parsed;
}

namespace {

std::vector<Json> RecordedDomain(const Instruction& inst) {
  std::vector<Json> domain;
  if (inst.op == "sample_perfect_tile") {
    for (const auto& t : PerfectTilings(inst.attrs.at("extent").get<int64_t>(), inst.attrs.at("n").get<int>())) {
      domain.push_back(t);
    }
  } else if (inst.op == "sample_compute_location") {
    for (const Json& d : inst.attrs.at("domain")) domain.push_back(d);
  } else if (inst.op == "sample_categorical") {
    const Json& w = inst.attrs.at("weights");
    for (size_t i = 0; i < w.size(); ++i) {
      if (w[i].get<double>() > 0) domain.push_back(static_cast<int64_t>(i));
    }
  }
  return domain;
}

}  // namespace

MutationResult Mutate(const Trace& t, std::mt19937_64& rng) {
  std::vector<size_t> sites;
  for (size_t i = 0; i < t.instructions.size(); ++i) {
    if (t.instructions[i].IsSampling() && RecordedDomain(t.instructions[i]).size() > 1) sites.push_back(i);
  }
  MutationResult result{t, false, 0};
  if (sites.empty()) return result;
  size_t index = sites[std::uniform_int_distribution<size_t>(0, sites.size() - 1)(rng)];
  Instruction& inst = result.trace.instructions[index];
  std::vector<Json> others;
  for (const Json& d : RecordedDomain(inst)) {
    if (d != *inst.decision) others.push_back(d);
  }
  inst.decision = others[std::uniform_int_distribution<size_t>(0, others.size() - 1)(rng)];
  result.trace.validated = false;
  result.mutated = true;
  result.index = index;
  return result;
}

ValidationResult ValidateTrace(const TensorProgram& e0, const Trace& t) {
  ValidationResult v;
  try {
    ReplayResult r = Replay(e0, t, ReplayMode::kFollow);
    v.accepted = true;
    v.program = std::move(r.program);
    v.trace = std::move(r.trace);
    v.trace.validated = true;
  } catch (const ReplayError& e) {
    v.reason = e.reason();
    v.index = e.index();
  }
  return v;
}

double ComputePrior(const Trace& t) {
  double prior = 0;
  for (const Instruction& inst : t.instructions) {
    if (inst.IsSampling()) prior += SampleLogProb(inst);
  }
  return prior;
}

double TracePrior(const Trace& t) {
  if (!t.validated) throw Error("trace_prior: trace has not been validated");
  return t.prior_log_prob;
}

}  // namespace metasched
