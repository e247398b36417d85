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
 * \file metasched/ir.h
 * \brief Loop-nest IR for integer tensor programs.
 *
 * A TensorProgram is a list of buffers plus a forest of statements. Loops carry
 * a variable, a constant extent and an annotation kind; leaves are either
 * Compute statements (one block each) or tensor-unit Intrinsic statements.
 * Expressions are immutable and shared.
 */
#ifndef METASCHED_IR_H_
#define METASCHED_IR_H_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace metasched {

/*! \brief Base error type for every failure raised by this library. */
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BufferRole { kInput, kOutput, kIntermediate };

struct Buffer {
  std::string name;
  std::vector<int64_t> shape;
  BufferRole role = BufferRole::kInput;

  int64_t NumElements() const;
  bool operator==(const Buffer& other) const = default;
};

enum class ExprKind {
  kInt,
  kVar,
  kLoad,
  kAdd,
  kSub,
  kMul,
  kFloorDiv,
  kFloorMod,
  kMax,
  kMin,
  kLt,
  kSelect,
};

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprKind kind;
  int64_t value = 0;   // kInt
  std::string name;    // kVar: loop variable, kLoad: buffer
  std::vector<Expr> args;
};

// Builders. Arithmetic builders fold constants and drop neutral elements
// (x + 0, x * 1) so that substitutions stay readable.
Expr IntImm(int64_t v);
Expr VarRef(std::string name);
Expr Load(std::string buffer, std::vector<Expr> indices);
Expr Add(Expr a, Expr b);
Expr Sub(Expr a, Expr b);
Expr Mul(Expr a, Expr b);
Expr FloorDiv(Expr a, Expr b);
Expr FloorMod(Expr a, Expr b);
Expr Max(Expr a, Expr b);
Expr Min(Expr a, Expr b);
Expr Lt(Expr a, Expr b);
Expr Select(Expr cond, Expr then_value, Expr else_value);

const char* ExprKindName(ExprKind kind);
bool IsBinary(ExprKind kind);
int64_t FloorDivInt(int64_t a, int64_t b);
int64_t FloorModInt(int64_t a, int64_t b);

enum class LoopKind { kSerial, kParallel, kVectorized, kUnrolled };
const char* LoopKindName(LoopKind kind);
LoopKind LoopKindFromName(const std::string& name);

struct Stmt;

struct Loop {
  std::string var;
  int64_t extent = 1;
  LoopKind kind = LoopKind::kSerial;
  std::vector<Stmt> body;
};

/*!
 * \brief One block: store[indices] = value.
 *
 * With `init` present the block is a reduction: init is stored when every
 * reduction variable is zero, before the update runs. `epilogue` (reductions
 * only) is evaluated and stored once every reduction variable reaches its
 * last iteration; it reads the freshly reduced element through the store
 * buffer. Reduction variables are the enclosing loop variables that occur in
 * the value but not in the store indices.
 */
struct Compute {
  std::string block;
  std::string buffer;
  std::vector<Expr> indices;
  Expr value;
  std::optional<Expr> init;
  std::optional<Expr> epilogue;
};

/*! \brief Operand of an intrinsic: buffer plus base index (tile origin). */
struct Operand {
  std::string buffer;
  std::vector<Expr> base;
};

/*!
 * \brief Hardware intrinsic replacing a tensorized tile.
 *
 * The only intrinsic is "tu.mma4": operands are {C, A, B}, each 2-D, and the
 * statement computes C[c0+i, c1+j] += A[a0+i, a1+k] * B[b0+k, b1+j] for
 * i, j, k in [0, 4). When `init` is present, the C tile is first set to init
 * whenever every reduction variable of the operands is zero.
 */
struct Intrinsic {
  std::string name;
  std::string block;
  std::vector<Operand> operands;
  std::optional<Expr> init;
};

struct Stmt {
  std::variant<Loop, Compute, Intrinsic> node;

  bool IsLoop() const { return std::holds_alternative<Loop>(node); }
  bool IsCompute() const { return std::holds_alternative<Compute>(node); }
  bool IsIntrinsic() const { return std::holds_alternative<Intrinsic>(node); }
  Loop& AsLoop() { return std::get<Loop>(node); }
  const Loop& AsLoop() const { return std::get<Loop>(node); }
  Compute& AsCompute() { return std::get<Compute>(node); }
  const Compute& AsCompute() const { return std::get<Compute>(node); }
  Intrinsic& AsIntrinsic() { return std::get<Intrinsic>(node); }
  const Intrinsic& AsIntrinsic() const { return std::get<Intrinsic>(node); }
  /*! \brief Block name for leaves, empty for loops. */
  const std::string& BlockName() const;
};

Stmt MakeLoop(std::string var, int64_t extent, std::vector<Stmt> body,
              LoopKind kind = LoopKind::kSerial);
Stmt MakeCompute(std::string block, std::string buffer, std::vector<Expr> indices, Expr value,
                 std::optional<Expr> init = std::nullopt);

/*! \brief Child positions from the root list down to a statement. */
using StmtPath = std::vector<size_t>;

struct TensorProgram {
  std::vector<Buffer> buffers;
  std::vector<Stmt> root;

  const Buffer* FindBuffer(const std::string& name) const;
  /*! \brief Block name -> path of its leaf statement, in program order. */
  std::map<std::string, StmtPath> BlockIndex() const;
  /*! \brief Block names in pre-order. */
  std::vector<std::string> BlockNames() const;
  const Stmt& At(const StmtPath& path) const;
  Stmt& At(const StmtPath& path);
};

// ---- structural utilities -------------------------------------------------

/*! \brief Returns an empty list when the program is well formed. */
std::vector<std::string> ValidateIR(const TensorProgram& p);
/*! \brief Throws Error with the joined diagnostics when validation fails. */
void CheckValid(const TensorProgram& p);

bool StructuralEqual(const TensorProgram& a, const TensorProgram& b);
uint64_t StructuralHash(const TensorProgram& p);
bool ExprEqual(const Expr& a, const Expr& b);

/*! \brief Indented listing; with normalize_vars loops are renamed v0, v1, ... in binding order. */
std::string PrettyPrint(const TensorProgram& p, bool normalize_vars = false);
std::string ExprToString(const Expr& e);

std::string SerializeProgram(const TensorProgram& p);
TensorProgram DeserializeProgram(const std::string& text);

/*! \brief Returns p with every loop kind reset to serial. */
TensorProgram EraseLoopKinds(TensorProgram p);

}  // namespace metasched

#endif  // METASCHED_IR_H_
