#include "mof/ops.hpp"

#include <cmath>

#include "mof/kernels.hpp"

namespace mof::ops {

namespace {

Tape* find_tape(const std::vector<Tensor>& inputs) {
  Tape* t = nullptr;
  for (const Tensor& in : inputs) {
    if (!in.on_tape()) continue;
    if (!t)
      t = in.tape();
    else if (t != in.tape())
      throw Error("op: inputs from different tapes");
  }
  return t;
}

Tensor finish(OpKind kind, std::vector<Tensor> inputs, Tensor value, double scalar = 0.0,
              Shape shape_attr = {}, std::shared_ptr<const std::vector<int64_t>> idx = nullptr) {
  Tape* t = find_tape(inputs);
  if (t && t->recording())
    return t->record(kind, std::move(inputs), std::move(value), scalar, std::move(shape_attr),
                     std::move(idx));
  return value;
}

Tensor ones(const Shape& s, Prec p) { return Tensor::full(s, 1.0, p); }

/// Fold a broadcast gradient back to a rank-0 operand.
Tensor reduce_like(const Tensor& g, const Tensor& input) {
  if (input.rank() == 0 && g.rank() != 0) return sum(g);
  return g;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return finish(OpKind::Add, {a, b}, kernels::add(a, b));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return finish(OpKind::Sub, {a, b}, kernels::sub(a, b));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return finish(OpKind::Mul, {a, b}, kernels::mul(a, b));
}

Tensor div(const Tensor& a, const Tensor& b) {
  return finish(OpKind::Div, {a, b}, kernels::div(a, b));
}

Tensor add_scalar(const Tensor& a, double c) {
  return finish(OpKind::AddScalar, {a}, kernels::add_scalar(a, c), c);
}

Tensor scale(const Tensor& a, double c) {
  return finish(OpKind::Scale, {a}, kernels::scale(a, c), c);
}

Tensor exp(const Tensor& a) { return finish(OpKind::Exp, {a}, kernels::exp(a)); }
Tensor log(const Tensor& a) { return finish(OpKind::Log, {a}, kernels::log(a)); }
Tensor tanh(const Tensor& a) { return finish(OpKind::Tanh, {a}, kernels::tanh(a)); }
Tensor erf(const Tensor& a) { return finish(OpKind::Erf, {a}, kernels::erf(a)); }
Tensor sqrt(const Tensor& a) { return finish(OpKind::Sqrt, {a}, kernels::sqrt(a)); }
Tensor neg(const Tensor& a) { return finish(OpKind::Neg, {a}, kernels::neg(a)); }

Tensor gelu(const Tensor& a) {
  Tensor inner = add_scalar(erf(scale(a, 1.0 / std::sqrt(2.0))), 1.0);
  return scale(mul(a, inner), 0.5);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  return finish(OpKind::Matmul, {a, b}, kernels::matmul(a, b));
}

Tensor transpose(const Tensor& a) {
  return finish(OpKind::Transpose, {a}, kernels::transpose(a));
}

Tensor reshape(const Tensor& a, Shape s) {
  Tensor value = a.detached().reshaped(s);
  return finish(OpKind::Reshape, {a}, std::move(value), 0.0, std::move(s));
}

Tensor sum(const Tensor& a) { return finish(OpKind::SumAll, {a}, kernels::sum_all(a)); }

Tensor sum(const Tensor& a, int axis) {
  if (axis == 0) return finish(OpKind::SumAxis0, {a}, kernels::sum_axis0(a));
  if (axis == 1) return finish(OpKind::SumAxis1, {a}, kernels::sum_axis1(a));
  throw ShapeError("sum: bad axis " + std::to_string(axis));
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean(const Tensor& a, int axis) {
  if (a.rank() != 2) throw ShapeError("mean: axis form expects rank 2, got " + shape_str(a.shape()));
  if (axis != 0 && axis != 1) throw ShapeError("mean: bad axis " + std::to_string(axis));
  int64_t extent = a.shape()[static_cast<size_t>(axis)];
  if (extent == 0) throw ShapeError("mean: empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<double>(extent));
}

Tensor max(const Tensor& a) { return finish(OpKind::MaxAll, {a}, kernels::max_all(a)); }

Tensor max(const Tensor& a, int axis) {
  if (axis == 0) return finish(OpKind::MaxAxis0, {a}, kernels::max_axis0(a));
  if (axis == 1) return finish(OpKind::MaxAxis1, {a}, kernels::max_axis1(a));
  throw ShapeError("max: bad axis " + std::to_string(axis));
}

Tensor elem_gather(const Tensor& a, std::vector<int64_t> indices, Shape out_shape) {
  Tensor value = kernels::elem_gather(a, indices, out_shape);
  auto idx = std::make_shared<const std::vector<int64_t>>(std::move(indices));
  return finish(OpKind::ElemGather, {a}, std::move(value), 0.0, std::move(out_shape),
                std::move(idx));
}

Tensor elem_scatter_add(const Tensor& src, std::vector<int64_t> indices, Shape out_shape) {
  Tensor value = kernels::elem_scatter_add(src, indices, out_shape);
  auto idx = std::make_shared<const std::vector<int64_t>>(std::move(indices));
  return finish(OpKind::ElemScatterAdd, {src}, std::move(value), 0.0, std::move(out_shape),
                std::move(idx));
}

Tensor row_gather(const Tensor& a, const std::vector<int64_t>& rows) {
  if (a.rank() != 2) throw ShapeError("row_gather: expected rank 2, got " + shape_str(a.shape()));
  int64_t m = a.shape()[0], n = a.shape()[1];
  std::vector<int64_t> idx;
  idx.reserve(rows.size() * static_cast<size_t>(n));
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= m)
      throw ShapeError("row_gather: row " + std::to_string(rows[r]) + " out of range " +
                       std::to_string(m));
    for (int64_t j = 0; j < n; ++j) idx.push_back(rows[r] * n + j);
  }
  return elem_gather(a, std::move(idx), {static_cast<int64_t>(rows.size()), n});
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  return finish(OpKind::ConcatRows, parts, kernels::concat_rows(parts));
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("softmax_rows: expected rank 2, got " + shape_str(a.shape()));
  int64_t m = a.shape()[0], n = a.shape()[1];
  if (m == 0 || n == 0) throw ShapeError("softmax_rows: empty tensor");
  // The shift is a per-row constant, so it changes no value of the softmax
  // and contributes no gradient; computing it off-tape keeps that exact.
  Tensor rm = kernels::max_axis1(a.detached());
  Tensor rm_mat = kernels::matmul(rm.reshaped({m, 1}), ones({1, n}, a.prec()));
  Tensor e = exp(sub(a, rm_mat));
  Tensor s = sum(e, 1);
  Tensor s_mat = matmul(reshape(s, {m, 1}), ones({1, n}, a.prec()));
  return div(e, s_mat);
}

Tensor l2_normalize_rows(const Tensor& a) {
  if (a.rank() != 2)
    throw ShapeError("l2_normalize_rows: expected rank 2, got " + shape_str(a.shape()));
  int64_t m = a.shape()[0], n = a.shape()[1];
  Tensor n2 = sum(mul(a, a), 1);
  for (int64_t i = 0; i < m; ++i)
    if (n2.at(i) == 0.0) throw ValueError("l2_normalize_rows: zero-norm row " + std::to_string(i));
  Tensor nr_mat = matmul(reshape(sqrt(n2), {m, 1}), ones({1, n}, a.prec()));
  return div(a, nr_mat);
}

Tensor detach(const Tensor& a) { return a.detached(); }

namespace {

/// Gradient contributions of one node's inputs given the node's adjoint.
/// Written in terms of the ops above, so running it while the tape records
/// yields a differentiable graph.
std::vector<Tensor> backward_rule(const Node& n, const Tensor& g) {
  const auto& in = n.inputs;
  switch (n.kind) {
    case OpKind::Leaf:
      return {};
    case OpKind::Add:
      return {reduce_like(g, in[0]), reduce_like(g, in[1])};
    case OpKind::Sub:
      return {reduce_like(g, in[0]), reduce_like(neg(g), in[1])};
    case OpKind::Mul:
      return {reduce_like(mul(g, in[1]), in[0]), reduce_like(mul(g, in[0]), in[1])};
    case OpKind::Div: {
      Tensor da = reduce_like(div(g, in[1]), in[0]);
      Tensor db = reduce_like(neg(mul(g, div(n.output, in[1]))), in[1]);
      return {da, db};
    }
    case OpKind::AddScalar:
      return {g};
    case OpKind::Scale:
      return {scale(g, n.scalar)};
    case OpKind::Exp:
      return {mul(g, n.output)};
    case OpKind::Log:
      return {div(g, in[0])};
    case OpKind::Tanh:
      return {mul(g, add_scalar(neg(mul(n.output, n.output)), 1.0))};
    case OpKind::Erf: {
      double c = 2.0 / std::sqrt(std::acos(-1.0));
      return {mul(g, scale(exp(neg(mul(in[0], in[0]))), c))};
    }
    case OpKind::Sqrt:
      return {div(scale(g, 0.5), n.output)};
    case OpKind::Neg:
      return {neg(g)};
    case OpKind::Matmul:
      return {matmul(g, transpose(in[1])), matmul(transpose(in[0]), g)};
    case OpKind::Transpose:
      return {transpose(g)};
    case OpKind::Reshape:
      return {reshape(g, in[0].shape())};
    case OpKind::SumAll:
      return {mul(ones(in[0].shape(), g.prec()), g)};
    case OpKind::SumAxis0: {
      int64_t m = in[0].shape()[0], nn = in[0].shape()[1];
      return {matmul(ones({m, 1}, g.prec()), reshape(g, {1, nn}))};
    }
    case OpKind::SumAxis1: {
      int64_t m = in[0].shape()[0], nn = in[0].shape()[1];
      return {matmul(reshape(g, {m, 1}), ones({1, nn}, g.prec()))};
    }
    case OpKind::MaxAll: {
      Tensor mask = kernels::max_mask(in[0].detached(), n.output.detached(), -1);
      return {mul(mask, g)};
    }
    case OpKind::MaxAxis0: {
      int64_t m = in[0].shape()[0], nn = in[0].shape()[1];
      Tensor mask = kernels::max_mask(in[0].detached(), n.output.detached(), 0);
      Tensor gm = matmul(ones({m, 1}, g.prec()), reshape(g, {1, nn}));
      return {mul(mask, gm)};
    }
    case OpKind::MaxAxis1: {
      int64_t m = in[0].shape()[0], nn = in[0].shape()[1];
      Tensor mask = kernels::max_mask(in[0].detached(), n.output.detached(), 1);
      Tensor gm = matmul(reshape(g, {m, 1}), ones({1, nn}, g.prec()));
      return {mul(mask, gm)};
    }
    case OpKind::ElemGather:
      return {elem_scatter_add(g, *n.indices, in[0].shape())};
    case OpKind::ElemScatterAdd:
      return {elem_gather(g, *n.indices, in[0].shape())};
    case OpKind::ConcatRows: {
      std::vector<Tensor> out;
      out.reserve(in.size());
      int64_t at = 0;
      for (const Tensor& p : in) {
        std::vector<int64_t> rows(static_cast<size_t>(p.shape()[0]));
        for (size_t r = 0; r < rows.size(); ++r) rows[r] = at + static_cast<int64_t>(r);
        out.push_back(row_gather(g, rows));
        at += p.shape()[0];
      }
      return out;
    }
  }
  throw Error("backward: unhandled op");
}

std::vector<Tensor> grad_impl(const Tensor& output, const std::vector<Tensor>& inputs) {
  Tape& tape = *output.tape();
  int64_t out_id = output.node();
  std::vector<Tensor> adj(static_cast<size_t>(out_id) + 1);
  adj[static_cast<size_t>(out_id)] = Tensor::full(output.shape(), 1.0, output.prec());

  for (int64_t id = out_id; id >= 0; --id) {
    const Tensor& a = adj[static_cast<size_t>(id)];
    if (!a.defined()) continue;
    const Node& n = tape.node(id);
    if (n.kind == OpKind::Leaf) continue;
    std::vector<Tensor> contribs = backward_rule(n, a);
    for (size_t k = 0; k < n.inputs.size(); ++k) {
      const Tensor& src = n.inputs[k];
      if (!src.on_tape() || !contribs[k].defined()) continue;
      Tensor& slot = adj[static_cast<size_t>(src.node())];
      slot = slot.defined() ? add(slot, contribs[k]) : contribs[k];
    }
  }

  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const Tensor& in : inputs) {
    const Tensor& a = adj[static_cast<size_t>(in.node())];
    out.push_back(a.defined() ? a : Tensor::zeros(in.shape(), in.prec()));
  }
  return out;
}

}  // namespace

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph) {
  if (!output.on_tape()) throw Error("grad: output is not on a tape");
  if (output.numel() != 1)
    throw ShapeError("grad: output must be scalar, got " + shape_str(output.shape()));
  for (const Tensor& in : inputs) {
    if (!in.on_tape()) throw Error("grad: input does not require grad");
    if (in.tape() != output.tape()) throw Error("grad: input from a different tape");
  }
  if (create_graph) return grad_impl(output, inputs);
  NoRecordGuard guard(*output.tape());
  return grad_impl(output, inputs);
}

std::vector<Tensor> hvp(const Tensor& loss, const std::vector<Tensor>& params,
                        const std::vector<Tensor>& v) {
  if (v.size() != params.size())
    throw ShapeError("hvp: " + std::to_string(v.size()) + " direction tensors for " +
                     std::to_string(params.size()) + " params");
  for (size_t i = 0; i < params.size(); ++i)
    if (v[i].shape() != params[i].shape())
      throw ShapeError("hvp: direction " + std::to_string(i) + " shape " +
                       shape_str(v[i].shape()) + " vs param " + shape_str(params[i].shape()));

  std::vector<Tensor> g = grad(loss, params, true);
  Tensor s;
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor term = sum(mul(g[i], detach(v[i])));
    s = s.defined() ? add(s, term) : term;
  }
  if (!s.defined() || !s.on_tape()) {
    // Loss is at most linear in params; the Hessian is exactly zero.
    std::vector<Tensor> out;
    for (const Tensor& p : params) out.push_back(Tensor::zeros(p.shape(), p.prec()));
    return out;
  }
  return grad(s, params, false);
}

}  // namespace mof::ops
