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
 * \file cost_model.cc
 */
#include "metasched/cost_model.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "metasched/analysis.h"

namespace metasched {

const std::array<const char*, kNumFeatures>& FeatureNames() {
  static const std::array<const char*, kNumFeatures> names = {
      "log_trip_count", "log_flops",        "vectorized_fraction", "parallel_fraction", "log_hits",
      "log_misses",     "unrolled_fraction", "log_tensor_unit",     "nest_depth"};
  return names;
}

FeatureVector Featurize(const TensorProgram& p, const MachineSpec& spec) {
  std::vector<LeafInfo> leaves = CollectLeaves(p);
  std::vector<LeafAccessStats> stats = AccessStats(p, spec);
  double trips = 0, flops = 0, vectorized = 0, parallel = 0, unrolled = 0, tensor = 0, hits = 0, misses = 0;
  double depth = 0;
  for (size_t i = 0; i < leaves.size(); ++i) {
    const LeafInfo& leaf = leaves[i];
    double n = 1;
    bool vec = false, par = false, unr = false;
    for (const Loop* l : leaf.loops) {
      n *= static_cast<double>(l->extent);
      vec = vec || l->kind == LoopKind::kVectorized;
      par = par || l->kind == LoopKind::kParallel;
      unr = unr || l->kind == LoopKind::kUnrolled;
    }
    trips += n;
    if (leaf.stmt->IsIntrinsic()) {
      flops += n * 128;
      tensor += n;
    } else {
      flops += n * static_cast<double>(CountArithOps(leaf.stmt->AsCompute().value));
    }
    vectorized += vec ? n : 0;
    parallel += par ? n : 0;
    unrolled += unr ? n : 0;
    hits += stats[i].hits;
    misses += stats[i].misses;
    depth = std::max(depth, static_cast<double>(leaf.loops.size()));
  }
  double total = std::max(trips, 1.0);
  return {std::log1p(trips),     std::log1p(flops),  vectorized / total, parallel / total, std::log1p(hits),
          std::log1p(misses),    unrolled / total,   std::log1p(tensor), depth};
}

// ---------------------------------------------------------------------------
// records
// ---------------------------------------------------------------------------

Json RecordToJson(const TuningRecord& r) {
  Json trace = Json::array();
  for (const Instruction& inst : r.trace.instructions) trace.push_back(InstructionToJson(inst));
  return Json{{"trace", trace}, {"latency", r.latency}, {"features", r.features}};
}

TuningRecord RecordFromJson(const Json& j) {
  if (!j.is_object()) throw Error("record must be a JSON object");
  for (const char* key : {"trace", "latency", "features"}) {
    if (!j.contains(key)) throw Error(std::string("record is missing \"") + key + "\"");
  }
  TuningRecord r;
  if (!j.at("trace").is_array()) throw Error("record trace must be a list of instructions");
  for (const Json& inst : j.at("trace")) r.trace.instructions.push_back(InstructionFromJson(inst));
  if (!j.at("latency").is_number() || !(j.at("latency").get<double>() > 0)) {
    throw Error("record latency must be a positive number");
  }
  r.latency = j.at("latency").get<double>();
  const Json& f = j.at("features");
  if (!f.is_array() || f.size() != kNumFeatures) {
    throw Error("record features must be a list of " + std::to_string(kNumFeatures) + " numbers");
  }
  for (size_t k = 0; k < kNumFeatures; ++k) {
    if (!f[k].is_number()) throw Error("record features must be numbers");
    r.features[k] = f[k].get<double>();
  }
  return r;
}

std::string SerializeRecords(const std::vector<TuningRecord>& records) {
  std::string out;
  for (const TuningRecord& r : records) out += RecordToJson(r).dump() + "\n";
  return out;
}

std::vector<TuningRecord> DeserializeRecords(const std::string& text) {
  std::vector<TuningRecord> out;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(RecordFromJson(Json::parse(line)));
    } catch (const std::exception& e) {
      throw Error("record line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

namespace {

double MeanLogLatency(const std::vector<TuningRecord>& records) {
  double sum = 0;
  for (const TuningRecord& r : records) sum += std::log(r.latency);
  return sum / static_cast<double>(records.size());
}

}  // namespace

void ProxyModel::WarmStart(const std::vector<TuningRecord>& records) {
  if (records.empty()) return;
  intercept_ = MeanLogLatency(records);
}

void ProxyModel::Fit(const std::vector<TuningRecord>& records) {
  if (records.empty()) throw Error("fit: no records");
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  const Eigen::Index d = static_cast<Eigen::Index>(kNumFeatures);
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const TuningRecord& rec = records[static_cast<size_t>(r)];
    for (Eigen::Index c = 0; c < d; ++c) x(r, c) = rec.features[static_cast<size_t>(c)];
    y(r) = std::log(rec.latency);
  }
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd centered = x.rowwise() - mean;
  Eigen::RowVectorXd scale = (centered.colwise().squaredNorm() / static_cast<double>(n)).cwiseSqrt();
  // constant columns carry no information; keep them at zero weight
  std::vector<Eigen::Index> live;
  for (Eigen::Index c = 0; c < d; ++c) {
    if (scale(c) > 1e-12 * std::max(1.0, std::abs(mean(c)))) live.push_back(c);
  }
  double y_mean = y.mean();

  mean_.assign(kNumFeatures, 0.0);
  scale_.assign(kNumFeatures, 1.0);
  weights_.assign(kNumFeatures, 0.0);
  intercept_ = y_mean;
  fitted_ = true;
  degenerate_ = live.empty();
  if (degenerate_) return;

  const Eigen::Index k = static_cast<Eigen::Index>(live.size());
  Eigen::MatrixXd z(n, k);
  for (Eigen::Index c = 0; c < k; ++c) z.col(c) = centered.col(live[static_cast<size_t>(c)]) / scale(live[static_cast<size_t>(c)]);
  Eigen::MatrixXd gram = z.transpose() * z / static_cast<double>(n);
  gram.diagonal().array() += ridge_;
  Eigen::VectorXd rhs = z.transpose() * (y.array() - y_mean).matrix() / static_cast<double>(n);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::VectorXd w = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !w.allFinite()) {
    degenerate_ = true;
    return;
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    size_t col = static_cast<size_t>(live[static_cast<size_t>(c)]);
    mean_[col] = mean(live[static_cast<size_t>(c)]);
    scale_[col] = scale(live[static_cast<size_t>(c)]);
    weights_[col] = w(c);
  }
}

double ProxyModel::Predict(const FeatureVector& f) const {
  double response = intercept_;
  if (fitted_ && !degenerate_) {
    for (size_t c = 0; c < kNumFeatures; ++c) response += weights_[c] * (f[c] - mean_[c]) / scale_[c];
  }
  return std::exp(response);
}

double ProxyModel::Predict(const TensorProgram& p, const MachineSpec& spec) const {
  return Predict(Featurize(p, spec));
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> AverageRanks(const std::vector<double>& v) {
  std::vector<size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (size_t i = 0; i < order.size();) {
    size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double SpearmanCorrelation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error("spearman: inputs differ in length");
  if (a.size() < 2) return 0.0;
  std::vector<double> ra = AverageRanks(a), rb = AverageRanks(b);
  double n = static_cast<double>(a.size());
  double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace metasched
