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
 * \file metasched/search.h
 * \brief Evolutionary search over traces guided by the proxy model.
 */
#ifndef METASCHED_SEARCH_H_
#define METASCHED_SEARCH_H_

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "metasched/cost_model.h"
#include "metasched/machine.h"
#include "metasched/space.h"

namespace metasched {

struct SearchConfig {
  /*! \brief Total number of measurements. */
  int trials = 512;
  /*! \brief Measurements per round. */
  int batch = 16;
  int population = 64;
  /*! \brief Generations of mutation per round. */
  int generations = 4;
  double init_temperature = 1.0;
  /*! \brief Temperature multiplier per generation. */
  double anneal = 0.85;
  /*! \brief Chance that a batch slot is filled with a random unmeasured program. */
  double epsilon = 0.05;
  uint64_t seed = 0;

  void Validate() const;
};

/*! \brief Missing keys keep their defaults; unknown keys are an error. */
SearchConfig SearchConfigFromJson(const Json& j);
Json SearchConfigToJson(const SearchConfig& c);

/*! \brief -(latency / best_latency) + log prior of t. t must be validated. */
double PosteriorScore(const Trace& t, double latency, double best_latency);

/*! \brief min(1, exp(((old - new) / old) / temperature)). */
double MhAcceptProbability(double old_pred, double new_pred, double temperature);
bool MhAccept(double old_pred, double new_pred, double temperature, std::mt19937_64& rng);

/*! \brief Estimated latency of a candidate; lower is better. */
using Predictor = std::function<double(const TensorProgram&)>;

struct Candidate {
  Trace trace;
  TensorProgram program;
  uint64_t hash = 0;
};

struct SearchState {
  /*! \brief Every measurement in order; records[i] belongs to candidates[i]. */
  std::vector<TuningRecord> records;
  std::vector<Candidate> candidates;
  std::map<uint64_t, size_t> measured;
  /*! \brief Index of the fastest record, or -1 before the first measurement. */
  int best = -1;
  ProxyModel model;
  int round = 0;
  /*! \brief Filled lazily once fresh sampling stops finding new programs. */
  std::optional<EnumeratedSpace> enumerated;

  /*! \brief Records a measurement. Throws Error if the hash was already measured. */
  void Add(Candidate c, double latency, const FeatureVector& features);
};

struct EvolveResult {
  std::vector<Candidate> candidates;
  /*! \brief Set when fewer than the requested number of unmeasured programs exist. */
  bool exhausted = false;
};

/*!
 * \brief Proposes up to `count` distinct unmeasured, validated candidates.
 *
 * The population starts from the best measured traces and is filled with
 * fresh samples. Each generation every member proposes a mutation; invalid
 * proposals are dropped and valid ones replace the member under annealed
 * Metropolis-Hastings on the predictor. Every valid program seen is ranked by
 * prediction and the best unmeasured ones are returned, with an epsilon chance
 * per slot of a random unmeasured program instead.
 */
EvolveResult Evolve(const TensorProgram& e0, const Generator& generator, SearchState* state,
                    const SearchConfig& config, const Predictor& predict, int count, std::mt19937_64& rng);

struct TuningReport {
  std::string workload;
  uint64_t seed = 0;
  /*! \brief Empty when nothing was measured. */
  std::optional<Candidate> best;
  double best_latency = 0;
  double best_posterior = 0;
  /*! \brief Latency of the unscheduled workload. */
  double baseline_latency = 0;
  std::vector<TuningRecord> log;
  /*! \brief Rank correlation between predictions made before measuring and the measurements. */
  double spearman = 0;
  /*! \brief Number of measurements that had a fitted prediction. */
  size_t predicted = 0;
  int rounds = 0;
  bool exhausted = false;

  Json ToJson() const;
};

struct TuneOptions {
  MachineSpec machine;
  std::string workload_name;
  /*! \brief Prior measurements used only to fit the model before the first round. */
  std::vector<TuningRecord> warm_start;
  /*! \brief Replaces the learned model when set. */
  Predictor oracle;
  /*! \brief Polled between measurements; returning true ends the run early. */
  std::function<bool()> should_stop;
  /*! \brief Worker threads used to measure a batch; results do not depend on it. */
  int jobs = 1;
};

TuningReport Tune(const TensorProgram& e0, const Generator& generator, const SearchConfig& config,
                  const TuneOptions& options = {});

}  // namespace metasched

#endif  // METASCHED_SEARCH_H_
