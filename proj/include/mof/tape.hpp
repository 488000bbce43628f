#pragma once

#include <deque>
#include <memory>
#include <vector>

#include "mof/tensor.hpp"

namespace mof {

enum class OpKind : uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  AddScalar,
  Scale,
  Exp,
  Log,
  Tanh,
  Erf,
  Sqrt,
  Neg,
  Matmul,
  Transpose,
  Reshape,
  SumAll,
  SumAxis0,
  SumAxis1,
  MaxAll,
  MaxAxis0,
  MaxAxis1,
  ElemGather,
  ElemScatterAdd,
  ConcatRows,
};

const char* op_name(OpKind k);

/// One recorded operation. Inputs are saved tensor handles (tape-bound ones
/// keep their node ids, constants stay plain); output is the handle bound to
/// this node. Reverse rules read exactly these saved handles.
struct Node {
  OpKind kind = OpKind::Leaf;
  std::vector<Tensor> inputs;
  Tensor output;
  double scalar = 0.0;
  Shape shape_attr;
  std::shared_ptr<const std::vector<int64_t>> indices;
};

/// Append-only record of operations. Inputs of every node precede it, so a
/// single descending sweep performs the reverse pass. A reverse pass with
/// recording enabled appends its own ops as new nodes, which makes gradient
/// tensors differentiable again.
///
/// Single-threaded: a tape must not be shared across threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// New leaf holding a deep copy of `values`, bound to this tape.
  Tensor leaf(const Tensor& values);

  /// Register an op result. `value` must be a plain constant; it is bound to
  /// the new node and returned.
  Tensor record(OpKind kind, std::vector<Tensor> inputs, Tensor value, double scalar = 0.0,
                Shape shape_attr = {},
                std::shared_ptr<const std::vector<int64_t>> indices = nullptr);

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  int64_t size() const { return static_cast<int64_t>(nodes_.size()); }
  const Node& node(int64_t id) const { return nodes_[static_cast<size_t>(id)]; }

 private:
  std::deque<Node> nodes_;
  bool recording_ = true;
};

/// Scoped recording switch-off; used to evaluate reverse passes without
/// extending the graph. Arithmetic is identical either way.
class NoRecordGuard {
 public:
  explicit NoRecordGuard(Tape& t) : tape_(t), prev_(t.recording()) { tape_.set_recording(false); }
  ~NoRecordGuard() { tape_.set_recording(prev_); }
  NoRecordGuard(const NoRecordGuard&) = delete;
  NoRecordGuard& operator=(const NoRecordGuard&) = delete;

 private:
  Tape& tape_;
  bool prev_;
};

}  // namespace mof
