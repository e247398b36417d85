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
 * \file metasched.cc
 * \brief Command-line driver: tune, replay, enumerate, list-workloads, show-space.
 */
#include <CLI11.hpp>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "metasched/cost_model.h"
#include "metasched/interpreter.h"
#include "metasched/machine.h"
#include "metasched/search.h"
#include "metasched/space.h"
#include "metasched/trace.h"
#include "metasched/workloads.h"

using namespace metasched;

namespace {

std::atomic<bool> g_interrupted{false};

void OnInterrupt(int) { g_interrupted = true; }

std::string ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("failed writing " + path);
}

Json ReadJson(const std::string& path) {
  try {
    return Json::parse(ReadFile(path));
  } catch (const Json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

Json TraceToJson(const Trace& t) {
  Json out = Json::array();
  for (const Instruction& inst : t.instructions) out.push_back(InstructionToJson(inst));
  return out;
}

Trace TraceFromJson(const Json& j) {
  if (!j.is_array()) throw Error("trace must be a list of instructions");
  Trace t;
  for (const Json& inst : j) t.instructions.push_back(InstructionFromJson(inst));
  return t;
}

std::string UtcTimestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

/*! \brief Options shared by every command that works on one workload. */
struct WorkloadArgs {
  std::string workload;
  std::vector<int64_t> shape;
  std::string machine_path;
  std::string space_path;

  void Register(CLI::App* cmd, bool with_space) {
    cmd->add_option("--workload", workload, "Registered workload name")->required();
    cmd->add_option("--shape", shape, "Comma-separated shape parameters")->delimiter(',');
    cmd->add_option("--machine", machine_path, "Machine spec JSON");
    if (with_space) cmd->add_option("--space", space_path, "Space configuration JSON");
  }

  TensorProgram Build() const { return BuildWorkload(workload, shape); }
  MachineSpec Machine() const { return machine_path.empty() ? MachineSpec{} : MachineSpecFromJson(ReadJson(machine_path)); }
  Generator Space() const { return space_path.empty() ? DefaultGenerator() : GeneratorFromJson(ReadJson(space_path)); }

  std::string Label() const {
    std::string out = workload;
    for (size_t i = 0; i < shape.size(); ++i) out += (i ? "," : "(") + std::to_string(shape[i]);
    return shape.empty() ? out : out + ")";
  }
};

struct SeedArg {
  std::optional<uint64_t> seed;

  void Register(CLI::App* cmd) { cmd->add_option("--seed", seed, "Random seed (falls back to METASCHED_SEED)"); }

  uint64_t Get() const {
    if (seed) return *seed;
    const char* env = std::getenv("METASCHED_SEED");
    if (!env || !*env) return 0;
    char* end = nullptr;
    errno = 0;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || *end != '\0' || env[0] == '-') throw Error(std::string("METASCHED_SEED is not a seed: ") + env);
    return v;
  }
};

void CheckHash(std::optional<uint64_t> recorded, const TensorProgram& e0) {
  if (recorded && *recorded != StructuralHash(e0)) {
    throw Error("trace was recorded for a different workload (e0 hash " + std::to_string(*recorded) + ", expected " +
                std::to_string(StructuralHash(e0)) + ")");
  }
}

// ---------------------------------------------------------------------------

int RunTune(const WorkloadArgs& w, const SeedArg& seed, int trials, const std::string& search_path, int jobs,
            const std::string& out, const std::string& warm_path, const std::string& records_out,
            const std::string& best_out) {
  TensorProgram e0 = w.Build();
  SearchConfig config = search_path.empty() ? SearchConfig{} : SearchConfigFromJson(ReadJson(search_path));
  if (trials > 0) config.trials = trials;
  config.seed = seed.Get();
  config.Validate();

  TuneOptions options;
  options.machine = w.Machine();
  options.workload_name = w.Label();
  options.jobs = jobs;
  options.should_stop = [] { return g_interrupted.load(); };
  if (!warm_path.empty()) options.warm_start = DeserializeRecords(ReadFile(warm_path));
  std::signal(SIGINT, OnInterrupt);

  TuningReport report = Tune(e0, w.Space(), config, options);
  Json j = report.ToJson();
  j["e0_hash"] = StructuralHash(e0);
  j["config"] = SearchConfigToJson(config);
  j["machine"] = MachineSpecToJson(options.machine);
  j["interrupted"] = g_interrupted.load();
  j["timestamp"] = UtcTimestamp();
  if (!out.empty()) WriteFile(out, j.dump(2) + "\n");
  if (!records_out.empty()) WriteFile(records_out, SerializeRecords(report.log));
  if (!report.best) {
    std::cout << "no program measured\n";
    return g_interrupted ? 130 : 0;
  }
  if (!best_out.empty()) WriteFile(best_out, SerializeTrace(report.best->trace, StructuralHash(e0)));
  std::printf("measurements %zu  rounds %d%s\n", report.log.size(), report.rounds,
              report.exhausted ? "  (space exhausted)" : "");
  std::printf("baseline latency %.6g\n", report.baseline_latency);
  std::printf("best latency     %.6g\n", report.best_latency);
  std::printf("speedup          %.4gx\n", report.baseline_latency / report.best_latency);
  std::printf("model spearman   %.4f over %zu predictions\n", report.spearman, report.predicted);
  return g_interrupted ? 130 : 0;
}

struct LoadedTrace {
  Trace trace;
  std::optional<uint64_t> e0_hash;
};

/*! \brief Accepts a trace file, a tune report (its best trace) or an enumerate dump (entry `index`). */
LoadedTrace LoadTrace(const std::string& path, int index) {
  std::string text = ReadFile(path);
  Json whole;
  bool single = true;
  try {
    whole = Json::parse(text);
  } catch (const Json::exception&) {
    single = false;
  }
  LoadedTrace out;
  if (single && whole.is_object() && whole.contains("best")) {
    if (whole["best"].is_null()) throw Error(path + ": report has no best program");
    out.trace = TraceFromJson(whole["best"].at("trace"));
    if (whole.contains("e0_hash")) out.e0_hash = whole["e0_hash"].get<uint64_t>();
    return out;
  }
  if (single && whole.is_object() && whole.contains("programs")) {
    const Json& programs = whole["programs"];
    size_t k = index >= 0 ? static_cast<size_t>(index) : whole.at("optimum").at("index").get<size_t>();
    if (k >= programs.size()) throw Error(path + ": index " + std::to_string(k) + " out of range");
    out.trace = TraceFromJson(programs[k].at("trace"));
    if (whole.contains("e0_hash")) out.e0_hash = whole["e0_hash"].get<uint64_t>();
    return out;
  }
  ParsedTrace parsed = DeserializeTrace(text);
  out.trace = parsed.trace;
  out.e0_hash = parsed.e0_hash;
  return out;
}

int RunReplay(const WorkloadArgs& w, const std::string& trace_path, int index, bool check, int seeds) {
  TensorProgram e0 = w.Build();
  LoadedTrace loaded = LoadTrace(trace_path, index);
  CheckHash(loaded.e0_hash, e0);
  ValidationResult v = ValidateTrace(e0, loaded.trace);
  if (!v.accepted) {
    throw Error("trace rejected at instruction " + std::to_string(v.index) + ": " + v.reason);
  }
  std::cout << PrettyPrint(v.program);
  std::printf("latency %.6g\n", SimulateLatency(v.program, w.Machine()));
  if (check) {
    if (seeds < 1) throw Error("--seeds must be at least 1");
    for (int s = 0; s < seeds; ++s) {
      TensorMap in = RandomInputs(e0, static_cast<uint64_t>(s));
      if (Run(e0, in) != Run(v.program, in)) {
        std::fprintf(stderr, "semantic check failed on input seed %d\n", s);
        return 2;
      }
    }
    std::printf("semantics match on %d input seeds\n", seeds);
  }
  return 0;
}

int RunEnumerate(const WorkloadArgs& w, size_t cap, const std::string& out) {
  TensorProgram e0 = w.Build();
  MachineSpec machine = w.Machine();
  EnumeratedSpace space = EnumerateSpace(e0, w.Space(), cap);
  Json programs = Json::array();
  size_t best = 0;
  double best_latency = 0;
  for (size_t i = 0; i < space.traces.size(); ++i) {
    double latency = SimulateLatency(Replay(e0, space.traces[i]).program, machine);
    if (i == 0 || latency < best_latency) best = i, best_latency = latency;
    programs.push_back(Json{{"hash", space.hashes[i]}, {"latency", latency}, {"trace", TraceToJson(space.traces[i])}});
  }
  Json j{{"workload", w.Label()},
         {"e0_hash", StructuralHash(e0)},
         {"capped", space.capped},
         {"baseline_latency", SimulateLatency(e0, machine)},
         {"programs", programs}};
  j["optimum"] = space.traces.empty() ? Json(nullptr) : Json{{"index", best}, {"latency", best_latency}};
  if (!out.empty()) WriteFile(out, j.dump(2) + "\n");
  std::printf("programs %zu%s\n", space.traces.size(), space.capped ? " (capped)" : "");
  if (!space.traces.empty()) std::printf("optimum latency %.6g (index %zu)\n", best_latency, best);
  return 0;
}

int RunListWorkloads() {
  for (const WorkloadSpec& spec : Workloads()) {
    std::cout << spec.name << "(";
    for (size_t i = 0; i < spec.params.size(); ++i) {
      std::cout << (i ? ", " : "") << spec.params[i] << "=" << spec.defaults[i];
    }
    std::cout << ")\n";
  }
  return 0;
}

int RunShowSpace(const WorkloadArgs& w, const SeedArg& seed) {
  TensorProgram e0 = w.Build();
  ReplayResult r = SampleTrace(e0, w.Space(), seed.Get());
  std::cout << SerializeTrace(r.trace, StructuralHash(e0));
  std::cout << PrettyPrint(r.program);
  std::printf("latency %.6g\n", SimulateLatency(r.program, w.Machine()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor program autotuner over probabilistic schedule spaces"};
  app.require_subcommand(1);

  WorkloadArgs tune_w, replay_w, enum_w, show_w;
  SeedArg tune_seed, show_seed;

  CLI::App* tune = app.add_subcommand("tune", "Search a space and write a tuning report");
  tune_w.Register(tune, true);
  tune_seed.Register(tune);
  int trials = 0, jobs = 1;
  std::string search_path, out, warm, records_out, best_out;
  tune->add_option("--trials", trials, "Measurement budget (overrides the search config)")->check(CLI::PositiveNumber);
  tune->add_option("--search", search_path, "Search config JSON");
  tune->add_option("--jobs", jobs, "Worker threads for measurement")->check(CLI::PositiveNumber);
  tune->add_option("--out", out, "Report JSON path");
  tune->add_option("--warm-start", warm, "Tuning records (JSON lines) to fit the model before searching");
  tune->add_option("--records-out", records_out, "Write measurements as tuning records");
  tune->add_option("--best-trace", best_out, "Write the best trace (JSON lines)");

  CLI::App* replay = app.add_subcommand("replay", "Replay a trace and print the program");
  replay_w.Register(replay, false);
  std::string trace_path;
  bool check = false;
  int seeds = 3, index = -1;
  replay->add_option("--trace", trace_path, "Trace JSON lines, tune report or enumerate dump")->required();
  replay->add_option("--index", index, "Entry of an enumerate dump (default: its optimum)");
  replay->add_flag("--check-semantics", check, "Compare interpreter outputs against the workload");
  replay->add_option("--seeds", seeds, "Input seeds for --check-semantics");

  CLI::App* enumerate = app.add_subcommand("enumerate", "Enumerate a space with simulated latencies");
  enum_w.Register(enumerate, true);
  size_t cap = 100000;
  std::string enum_out;
  enumerate->add_option("--cap", cap, "Maximum number of distinct programs")->check(CLI::PositiveNumber);
  enumerate->add_option("--out", enum_out, "Output JSON path");

  CLI::App* list = app.add_subcommand("list-workloads", "List registered workloads and default shapes");

  CLI::App* show = app.add_subcommand("show-space", "Print one sampled program of a space");
  show_w.Register(show, true);
  show_seed.Register(show);

  CLI11_PARSE(app, argc, argv);

  try {
    if (tune->parsed()) return RunTune(tune_w, tune_seed, trials, search_path, jobs, out, warm, records_out, best_out);
    if (replay->parsed()) return RunReplay(replay_w, trace_path, index, check, seeds);
    if (enumerate->parsed()) return RunEnumerate(enum_w, cap, enum_out);
    if (list->parsed()) return RunListWorkloads();
    if (show->parsed()) return RunShowSpace(show_w, show_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
