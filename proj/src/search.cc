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
 * \file search.cc
 */
#include "metasched/search.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "metasched/trace.h"

namespace metasched {

namespace {

// Enumeration is the fallback for telling a small exhausted space from bad luck.
constexpr size_t kEnumerationCap = 4096;

int64_t ReadInt(const Json& v, const std::string& key) {
  if (!v.is_number_integer()) throw Error("search config \"" + key + "\" must be an integer");
  return v.get<int64_t>();
}

double ReadNumber(const Json& v, const std::string& key) {
  if (!v.is_number()) throw Error("search config \"" + key + "\" must be a number");
  return v.get<double>();
}

}  // namespace

void SearchConfig::Validate() const {
  if (trials <= 0 || batch <= 0 || population <= 0 || generations <= 0) {
    throw Error("search config: trials, batch, population and generations must be positive");
  }
  if (!(init_temperature > 0)) throw Error("search config: init_temperature must be positive");
  if (!(anneal > 0 && anneal < 1)) throw Error("search config: anneal must lie in (0, 1)");
  if (!(epsilon >= 0 && epsilon < 1)) throw Error("search config: epsilon must lie in [0, 1)");
}

SearchConfig SearchConfigFromJson(const Json& j) {
  if (!j.is_object()) throw Error("search config must be a JSON object");
  SearchConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "trials") {
      c.trials = static_cast<int>(ReadInt(v, key));
    } else if (key == "batch") {
      c.batch = static_cast<int>(ReadInt(v, key));
    } else if (key == "population") {
      c.population = static_cast<int>(ReadInt(v, key));
    } else if (key == "generations") {
      c.generations = static_cast<int>(ReadInt(v, key));
    } else if (key == "init_temperature") {
      c.init_temperature = ReadNumber(v, key);
    } else if (key == "anneal") {
      c.anneal = ReadNumber(v, key);
    } else if (key == "epsilon") {
      c.epsilon = ReadNumber(v, key);
    } else if (key == "seed") {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<int64_t>() < 0)) {
        throw Error("search config \"seed\" must be a non-negative integer");
      }
      c.seed = v.get<uint64_t>();
    } else {
      throw Error("search config: unknown key \"" + key + "\"");
    }
  }
  c.Validate();
  return c;
}

Json SearchConfigToJson(const SearchConfig& c) {
  return Json{{"trials", c.trials},         {"batch", c.batch},   {"population", c.population},
              {"generations", c.generations}, {"init_temperature", c.init_temperature},
              {"anneal", c.anneal},         {"epsilon", c.epsilon}, {"seed", c.seed}};
}

double PosteriorScore(const Trace& t, double latency, double best_latency) {
  if (!(best_latency > 0) || !(latency > 0)) throw Error("posterior score: latencies must be positive");
  return -(latency / best_latency) + TracePrior(t);
}

double MhAcceptProbability(double old_pred, double new_pred, double temperature) {
  if (!(old_pred > 0) || !(new_pred > 0) || !(temperature > 0)) {
    throw Error("mh accept: predictions and temperature must be positive");
  }
  if (new_pred <= old_pred) return 1.0;
  return std::exp(((old_pred - new_pred) / old_pred) / temperature);
}

bool MhAccept(double old_pred, double new_pred, double temperature, std::mt19937_64& rng) {
  double p = MhAcceptProbability(old_pred, new_pred, temperature);
  if (p >= 1.0) return true;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

void SearchState::Add(Candidate c, double latency, const FeatureVector& features) {
  if (measured.count(c.hash)) throw Error("program measured twice");
  TuningRecord r;
  r.trace = c.trace;
  r.latency = latency;
  r.features = features;
  measured[c.hash] = records.size();
  if (best < 0 || latency < records[static_cast<size_t>(best)].latency) best = static_cast<int>(records.size());
  records.push_back(std::move(r));
  candidates.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

namespace {

struct Member {
  Candidate candidate;
  double pred = 0;
};

class Evolver {
 public:
  Evolver(const TensorProgram& e0, const Generator& generator, SearchState* state, const SearchConfig& config,
          const Predictor& predict, std::mt19937_64& rng)
      : e0_(e0), generator_(generator), state_(state), config_(config), predict_(predict), rng_(rng) {}

  EvolveResult Run(int count) {
    std::vector<Member> population = InitialPopulation();
    double temperature = config_.init_temperature;
    for (int g = 0; g < config_.generations; ++g) {
      for (Member& m : population) Step(&m, temperature);
      temperature *= config_.anneal;
    }
    return Select(count);
  }

 private:
  Candidate Fresh() {
    ReplayResult r = SampleTrace(e0_, generator_, rng_());
    uint64_t h = StructuralHash(r.program);
    return Candidate{std::move(r.trace), std::move(r.program), h};
  }

  double Predict(const Candidate& c) {
    auto it = preds_.find(c.hash);
    if (it != preds_.end()) return it->second;
    double p = predict_(c.program);
    preds_[c.hash] = p;
    return p;
  }

  void Remember(const Candidate& c) {
    if (state_->measured.count(c.hash) || pool_.count(c.hash)) return;
    pool_.emplace(c.hash, c);
  }

  std::vector<Member> InitialPopulation() {
    std::vector<size_t> order(state_->records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return state_->records[a].latency < state_->records[b].latency; });
    std::vector<Member> population;
    size_t elite = std::min(order.size(), static_cast<size_t>(config_.population / 2));
    for (size_t i = 0; i < elite; ++i) {
      const Candidate& c = state_->candidates[order[i]];
      population.push_back({c, Predict(c)});
    }
    while (population.size() < static_cast<size_t>(config_.population)) {
      Candidate c = Fresh();
      Remember(c);
      double p = Predict(c);
      population.push_back({std::move(c), p});
    }
    return population;
  }

  void Step(Member* m, double temperature) {
    Proposal proposal;
    try {
      proposal = ProposeMutation(e0_, generator_, m->candidate.trace, rng_);
    } catch (const Error&) {
      return;
    }
    if (!proposal.mutated) return;
    ValidationResult v = ValidateTrace(e0_, proposal.trace);
    if (!v.accepted) return;
    uint64_t h = StructuralHash(v.program);
    Candidate c{std::move(v.trace), std::move(v.program), h};
    Remember(c);
    double p = Predict(c);
    if (MhAccept(m->pred, p, temperature, rng_)) *m = Member{std::move(c), p};
  }

  bool Usable(uint64_t h) const { return !state_->measured.count(h) && !chosen_.count(h); }

  std::optional<Candidate> RandomUnmeasured() {
    if (!state_->enumerated) {
      for (int a = 0; a < 2 * config_.population; ++a) {
        Candidate c = Fresh();
        if (Usable(c.hash)) return c;
      }
      state_->enumerated = EnumerateSpace(e0_, generator_, kEnumerationCap);
    }
    if (state_->enumerated->capped) {
      for (int a = 0; a < 8 * config_.population; ++a) {
        Candidate c = Fresh();
        if (Usable(c.hash)) return c;
      }
      return std::nullopt;
    }
    std::vector<size_t> open;
    for (size_t i = 0; i < state_->enumerated->hashes.size(); ++i) {
      if (Usable(state_->enumerated->hashes[i])) open.push_back(i);
    }
    if (open.empty()) return std::nullopt;
    size_t pick = open[std::uniform_int_distribution<size_t>(0, open.size() - 1)(rng_)];
    ValidationResult v = ValidateTrace(e0_, state_->enumerated->traces[pick]);
    if (!v.accepted) throw Error("enumerated trace failed validation: " + v.reason);
    uint64_t h = StructuralHash(v.program);
    return Candidate{std::move(v.trace), std::move(v.program), h};
  }

  EvolveResult Select(int count) {
    std::vector<std::pair<double, uint64_t>> ranked;
    for (const auto& [h, c] : pool_) ranked.emplace_back(Predict(c), h);
    std::sort(ranked.begin(), ranked.end());
    size_t next = 0;
    EvolveResult out;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    while (out.candidates.size() < static_cast<size_t>(count)) {
      std::optional<Candidate> pick;
      if (config_.epsilon > 0 && coin(rng_) < config_.epsilon) pick = RandomUnmeasured();
      while (!pick && next < ranked.size()) {
        uint64_t h = ranked[next++].second;
        if (Usable(h)) pick = pool_.at(h);
      }
      if (!pick) pick = RandomUnmeasured();
      if (!pick) {
        out.exhausted = true;
        break;
      }
      chosen_.insert(pick->hash);
      out.candidates.push_back(std::move(*pick));
    }
    return out;
  }

  const TensorProgram& e0_;
  const Generator& generator_;
  SearchState* state_;
  const SearchConfig& config_;
  const Predictor& predict_;
  std::mt19937_64& rng_;
  std::map<uint64_t, double> preds_;
  std::map<uint64_t, Candidate> pool_;
  std::set<uint64_t> chosen_;
};

}  // namespace

EvolveResult Evolve(const TensorProgram& e0, const Generator& generator, SearchState* state,
                    const SearchConfig& config, const Predictor& predict, int count, std::mt19937_64& rng) {
  config.Validate();
  return Evolver(e0, generator, state, config, predict, rng).Run(count);
}

// ---------------------------------------------------------------------------
// tune
// ---------------------------------------------------------------------------

Json TuningReport::ToJson() const {
  Json j;
  j["workload"] = workload;
  j["seed"] = seed;
  j["baseline_latency"] = baseline_latency;
  if (best) {
    Json trace = Json::array();
    for (const Instruction& inst : best->trace.instructions) trace.push_back(InstructionToJson(inst));
    j["best"] = Json{{"latency", best_latency},
                     {"trace", trace},
                     {"program", Json::parse(SerializeProgram(best->program))},
                     {"posterior", best_posterior}};
  } else {
    j["best"] = nullptr;
  }
  Json records = Json::array();
  for (const TuningRecord& r : log) records.push_back(RecordToJson(r));
  j["log"] = records;
  j["model"] = Json{{"spearman", spearman}, {"predicted", predicted}};
  j["rounds"] = rounds;
  j["exhausted"] = exhausted;
  return j;
}

TuningReport Tune(const TensorProgram& e0, const Generator& generator, const SearchConfig& config,
                  const TuneOptions& options) {
  config.Validate();
  options.machine.Validate();
  if (options.jobs < 1) throw Error("tune: jobs must be at least 1");
  std::mt19937_64 rng(config.seed);
  SearchState state;
  if (!options.warm_start.empty()) {
    state.model.WarmStart(options.warm_start);
    state.model.Fit(options.warm_start);
  }
  Predictor predict = options.oracle ? options.oracle : Predictor([&](const TensorProgram& p) {
    return state.model.Predict(p, options.machine);
  });
  auto stop = [&] { return options.should_stop && options.should_stop(); };

  TuningReport report;
  report.workload = options.workload_name;
  report.seed = config.seed;
  report.baseline_latency = SimulateLatency(e0, options.machine);
  std::vector<double> before, after;
  while (state.records.size() < static_cast<size_t>(config.trials) && !stop()) {
    int want = std::min(config.batch, config.trials - static_cast<int>(state.records.size()));
    EvolveResult batch = Evolve(e0, generator, &state, config, predict, want, rng);
    report.exhausted = report.exhausted || batch.exhausted;
    size_t n = batch.candidates.size();
    std::vector<double> latency(n);
    std::vector<FeatureVector> features(n);
    auto measure = [&](size_t worker, size_t workers) {
      for (size_t i = worker; i < n; i += workers) {
        latency[i] = SimulateLatency(batch.candidates[i].program, options.machine);
        features[i] = Featurize(batch.candidates[i].program, options.machine);
      }
    };
    size_t workers = std::min(n, static_cast<size_t>(options.jobs));
    if (workers <= 1) {
      measure(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (size_t w = 0; w < workers; ++w) pool.emplace_back(measure, w, workers);
      for (std::thread& t : pool) t.join();
    }
    for (size_t i = 0; i < n; ++i) {
      if (stop()) break;
      if (options.oracle || state.model.fitted()) {
        before.push_back(predict(batch.candidates[i].program));
        after.push_back(latency[i]);
      }
      state.Add(std::move(batch.candidates[i]), latency[i], features[i]);
    }
    ++state.round;
    std::vector<TuningRecord> training = options.warm_start;
    training.insert(training.end(), state.records.begin(), state.records.end());
    if (!training.empty()) state.model.Fit(training);
    if (batch.candidates.empty()) break;
  }

  report.rounds = state.round;
  report.log = state.records;
  report.predicted = before.size();
  report.spearman = SpearmanCorrelation(before, after);
  if (state.best >= 0) {
    size_t b = static_cast<size_t>(state.best);
    report.best = state.candidates[b];
    report.best_latency = state.records[b].latency;
    report.best_posterior = PosteriorScore(report.best->trace, report.best_latency, report.best_latency);
  }
  return report;
}

}  // namespace metasched
