#pragma once

#include <vector>

#include "mof/tape.hpp"
#include "mof/tensor.hpp"

namespace mof::ops {

// Differentiable tensor operations. Each computes its value through the
// kernel layer and registers a node when any input is tape-bound and the
// tape is recording; otherwise the result is a plain constant. Mixing inputs
// from two different tapes is an error.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor erf(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor neg(const Tensor& a);
Tensor gelu(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape s);

Tensor sum(const Tensor& a);                // all elements -> rank 0
Tensor sum(const Tensor& a, int axis);      // rank 2 only
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis);
Tensor max(const Tensor& a);
Tensor max(const Tensor& a, int axis);

/// out[i] = a.flat[indices[i]], reshaped to out_shape.
Tensor elem_gather(const Tensor& a, std::vector<int64_t> indices, Shape out_shape);
/// zeros(out_shape) with src.flat[i] added at flat position indices[i].
Tensor elem_scatter_add(const Tensor& src, std::vector<int64_t> indices, Shape out_shape);
/// Select whole rows of a rank-2 tensor.
Tensor row_gather(const Tensor& a, const std::vector<int64_t>& rows);
Tensor concat_rows(const std::vector<Tensor>& parts);

/// Per-row softmax of a rank-2 tensor, computed with the per-row max
/// subtracted before exp so large logits cannot overflow.
Tensor softmax_rows(const Tensor& a);
/// Scale each row of a rank-2 tensor to unit Euclidean norm. A zero-norm row
/// is an error carrying the row index.
Tensor l2_normalize_rows(const Tensor& a);

/// Same values, no tape association.
Tensor detach(const Tensor& a);

/// Reverse pass: d(output)/d(input) for each input. Output must be a
/// tape-bound scalar and every input a tape-bound tensor of the same tape.
/// Inputs the output does not depend on get zero tensors. With
/// create_graph=true the returned gradients are differentiable again; first
/// order values are identical either way.
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph);

/// Hessian-vector product: grad(<grad(loss, params, create_graph=true), v>, params).
std::vector<Tensor> hvp(const Tensor& loss, const std::vector<Tensor>& params,
                        const std::vector<Tensor>& v);

}  // namespace mof::ops
