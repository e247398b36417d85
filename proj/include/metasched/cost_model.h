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
 * \file metasched/cost_model.h
 * \brief Program features and a ridge regression on log-latency.
 */
#ifndef METASCHED_COST_MODEL_H_
#define METASCHED_COST_MODEL_H_

#include <array>
#include <string>
#include <vector>

#include "metasched/instruction.h"
#include "metasched/ir.h"
#include "metasched/machine.h"

namespace metasched {

constexpr size_t kNumFeatures = 9;
using FeatureVector = std::array<double, kNumFeatures>;

/*!
 * \brief Aggregates over leaves, weighted by how often each runs:
 *  log1p(trip count), log1p(flops), vectorized fraction, parallel fraction,
 *  log1p(hits), log1p(misses), unrolled fraction, log1p(tensor-unit
 *  instances), deepest loop nest.
 */
FeatureVector Featurize(const TensorProgram& p, const MachineSpec& spec = {});
const std::array<const char*, kNumFeatures>& FeatureNames();

struct TuningRecord {
  Trace trace;
  double latency = 0;
  FeatureVector features{};
};

Json RecordToJson(const TuningRecord& r);
TuningRecord RecordFromJson(const Json& j);
/*! \brief One record per line. */
std::string SerializeRecords(const std::vector<TuningRecord>& records);
/*! \brief Throws Error naming the 1-based line of the first bad record. */
std::vector<TuningRecord> DeserializeRecords(const std::string& text);

/*! \brief Linear model on standardized features predicting log-latency. */
class ProxyModel {
 public:
  explicit ProxyModel(double ridge = 1e-9) : ridge_(ridge) {}

  /*! \brief Refits from scratch on all records. Throws Error on an empty set. */
  void Fit(const std::vector<TuningRecord>& records);
  /*! \brief Sets the constant used before the first fit: the geometric mean of `records`. */
  void WarmStart(const std::vector<TuningRecord>& records);

  double Predict(const FeatureVector& f) const;
  double Predict(const TensorProgram& p, const MachineSpec& spec = {}) const;

  bool fitted() const { return fitted_; }
  /*! \brief True when the last fit fell back to the mean predictor. */
  bool degenerate() const { return degenerate_; }
  const std::vector<double>& weights() const { return weights_; }
  double intercept() const { return intercept_; }

 private:
  double ridge_;
  bool fitted_ = false;
  bool degenerate_ = false;
  double intercept_ = 0;  // log-latency
  std::vector<double> mean_, scale_, weights_;
};

/*! \brief Spearman rank correlation with average ranks for ties; 0 when either side is constant. */
double SpearmanCorrelation(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace metasched

#endif  // METASCHED_COST_MODEL_H_
