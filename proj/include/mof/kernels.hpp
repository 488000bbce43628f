#pragma once

#include <cstdint>
#include <vector>

#include "mof/tensor.hpp"

namespace mof::kernels {

/// Execution policy for a kernel call. Auto consults the process-wide worker
/// count; Serial and Parallel force one path (the benchmark and the
/// equivalence tests call both explicitly).
enum class Exec { Auto, Serial, Parallel };

void set_workers(int n);
int workers();
bool resolve_parallel(Exec ex);

// Elementwise binary ops. Shapes must be equal, or either operand may be
// rank-0 (scalar broadcasting). div checks for zero divisors and reports the
// flat index of the first offender.
Tensor add(const Tensor& a, const Tensor& b, Exec ex = Exec::Auto);
Tensor sub(const Tensor& a, const Tensor& b, Exec ex = Exec::Auto);
Tensor mul(const Tensor& a, const Tensor& b, Exec ex = Exec::Auto);
Tensor div(const Tensor& a, const Tensor& b, Exec ex = Exec::Auto);

Tensor add_scalar(const Tensor& a, double c, Exec ex = Exec::Auto);
Tensor scale(const Tensor& a, double c, Exec ex = Exec::Auto);

// Elementwise unary ops. log and sqrt validate their domain and report the
// flat index of the first bad element.
Tensor exp(const Tensor& a, Exec ex = Exec::Auto);
Tensor log(const Tensor& a, Exec ex = Exec::Auto);
Tensor tanh(const Tensor& a, Exec ex = Exec::Auto);
Tensor erf(const Tensor& a, Exec ex = Exec::Auto);
Tensor sqrt(const Tensor& a, Exec ex = Exec::Auto);
Tensor neg(const Tensor& a, Exec ex = Exec::Auto);

/// Rank-2 matrix product [m×k]·[k×n] -> [m×n]. Each output element is a
/// serial dot product, so the parallel path is bitwise identical.
Tensor matmul(const Tensor& a, const Tensor& b, Exec ex = Exec::Auto);

Tensor transpose(const Tensor& a, Exec ex = Exec::Auto);

// Reductions. Whole-tensor reductions stay serial regardless of policy;
// per-axis reductions parallelize across independent rows/columns.
Tensor sum_all(const Tensor& a);
Tensor sum_axis0(const Tensor& a, Exec ex = Exec::Auto);  // [m×n] -> [n]
Tensor sum_axis1(const Tensor& a, Exec ex = Exec::Auto);  // [m×n] -> [m]
Tensor max_all(const Tensor& a);
Tensor max_axis0(const Tensor& a, Exec ex = Exec::Auto);
Tensor max_axis1(const Tensor& a, Exec ex = Exec::Auto);

/// Mask of the first element per reduction group equal to the reduced max.
/// axis -1 means whole tensor. Used by the max reverse rule.
Tensor max_mask(const Tensor& a, const Tensor& reduced, int axis);

/// out[i] = a.flat[indices[i]], reshaped to out_shape.
Tensor elem_gather(const Tensor& a, const std::vector<int64_t>& indices, const Shape& out_shape,
                   Exec ex = Exec::Auto);
/// out.flat[indices[i]] += g.flat[i] into zeros(out_shape). Serial: repeated
/// indices must accumulate in a fixed order.
Tensor elem_scatter_add(const Tensor& g, const std::vector<int64_t>& indices,
                        const Shape& out_shape);

/// Stack rank-2 inputs with equal column counts along rows.
Tensor concat_rows(const std::vector<Tensor>& parts, Exec ex = Exec::Auto);

}  // namespace mof::kernels
