#include "mof/tape.hpp"

namespace mof {

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Scale: return "scale";
    case OpKind::Exp: return "exp";
    case OpKind::Log: return "log";
    case OpKind::Tanh: return "tanh";
    case OpKind::Erf: return "erf";
    case OpKind::Sqrt: return "sqrt";
    case OpKind::Neg: return "neg";
    case OpKind::Matmul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Reshape: return "reshape";
    case OpKind::SumAll: return "sum";
    case OpKind::SumAxis0: return "sum_axis0";
    case OpKind::SumAxis1: return "sum_axis1";
    case OpKind::MaxAll: return "max";
    case OpKind::MaxAxis0: return "max_axis0";
    case OpKind::MaxAxis1: return "max_axis1";
    case OpKind::ElemGather: return "gather";
    case OpKind::ElemScatterAdd: return "scatter_add";
    case OpKind::ConcatRows: return "concat";
  }
  return "?";
}

Tensor Tape::leaf(const Tensor& values) {
  if (!values.defined()) throw Error("leaf: undefined tensor");
  Node n;
  n.kind = OpKind::Leaf;
  n.output = values.clone_values();
  n.output.bind_node(this, size());
  nodes_.push_back(n);
  return nodes_.back().output;
}

Tensor Tape::record(OpKind kind, std::vector<Tensor> inputs, Tensor value, double scalar,
                    Shape shape_attr, std::shared_ptr<const std::vector<int64_t>> indices) {
  if (value.on_tape()) throw Error("record: value already bound to a tape");
  Node n;
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.scalar = scalar;
  n.shape_attr = std::move(shape_attr);
  n.indices = std::move(indices);
  value.bind_node(this, size());
  n.output = value;
  nodes_.push_back(std::move(n));
  return nodes_.back().output;
}

}  // namespace mof
