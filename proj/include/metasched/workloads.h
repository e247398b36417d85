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
 * \file metasched/workloads.h
 * \brief Builtin workload builders and the name registry used by the CLI.
 */
#ifndef METASCHED_WORKLOADS_H_
#define METASCHED_WORKLOADS_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metasched/ir.h"

namespace metasched {

/*! \brief C[i, j] = sum_k A[i, k] * B[k, j]. */
TensorProgram Gmm(int64_t n, int64_t m, int64_t k);
/*! \brief B[i] = max(A[i], 0). */
TensorProgram Relu1d(int64_t n);
/*! \brief B[i, j] = max(A[i, j], 0). */
TensorProgram Relu2d(int64_t n, int64_t m);
/*! \brief Dense block followed by an elementwise ReLU block. */
TensorProgram DenseRelu(int64_t n, int64_t m, int64_t k);
/*! \brief Dense, bias add and ReLU as three blocks. */
TensorProgram DenseBiasRelu(int64_t n, int64_t m, int64_t k);
/*!
 * \brief 1-D convolution over channels-first input X[in_ch, length] with
 *  weights W[out_ch, in_ch, kernel]. Zero padding is materialized by a
 *  separate block.
 */
TensorProgram Conv1d(int64_t length, int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride,
                     int64_t padding);

struct WorkloadSpec {
  std::string name;
  std::vector<std::string> params;
  std::vector<int64_t> defaults;
  std::function<TensorProgram(const std::vector<int64_t>&)> build;
};

const std::vector<WorkloadSpec>& Workloads();
/*! \brief Builds a registered workload; an empty shape selects the defaults. */
TensorProgram BuildWorkload(const std::string& name, const std::vector<int64_t>& shape = {});

}  // namespace metasched

#endif  // METASCHED_WORKLOADS_H_
