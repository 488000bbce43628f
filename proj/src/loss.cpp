#include "mof/loss.hpp"

#include <cmath>

#include "mof/kernels.hpp"
#include "mof/ops.hpp"

namespace mof {

namespace {

void require_unit_rows(const Tensor& e, const char* which) {
  int64_t b = e.shape()[0], d = e.shape()[1];
  for (int64_t i = 0; i < b; ++i) {
    double n2 = 0;
    for (int64_t j = 0; j < d; ++j) {
      double v = e.at(i * d + j);
      n2 += v * v;
    }
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-4)
      throw ValueError(std::string("contrastive_loss: ") + which + " row " + std::to_string(i) +
                       " has norm " + std::to_string(std::sqrt(n2)) + ", expected unit norm");
  }
}

/// Mean negative log softmax of the diagonal, per row.
Tensor diag_nll(const Tensor& logits) {
  int64_t b = logits.shape()[0];
  Tensor rm = kernels::max_axis1(logits.detached());
  Tensor rm_mat = kernels::matmul(rm.reshaped({b, 1}), Tensor::full({1, b}, 1.0, logits.prec()));
  Tensor shifted = ops::sub(logits, rm_mat);
  Tensor lse = ops::log(ops::sum(ops::exp(shifted), 1));
  Tensor eye = Tensor::zeros({b, b}, logits.prec());
  for (int64_t i = 0; i < b; ++i) eye.set(i * b + i, 1.0);
  Tensor diag = ops::sum(ops::mul(shifted, eye), 1);
  return ops::scale(ops::sum(ops::sub(diag, lse)), -1.0 / static_cast<double>(b));
}

}  // namespace

LossBreakdown contrastive_loss(const Tensor& ev, const Tensor& et, double sigma) {
  if (sigma <= 0.0) throw ValueError("contrastive_loss: sigma must be positive");
  if (ev.rank() != 2 || et.rank() != 2)
    throw ShapeError("contrastive_loss: expected [B x D] inputs, got " + shape_str(ev.shape()) +
                     " and " + shape_str(et.shape()));
  if (!ev.same_shape(et))
    throw ShapeError("contrastive_loss: shape mismatch " + shape_str(ev.shape()) + " vs " +
                     shape_str(et.shape()));
  if (ev.shape()[0] < 1) throw ShapeError("contrastive_loss: empty batch");
  require_unit_rows(ev.detached(), "ev");
  require_unit_rows(et.detached(), "et");

  LossBreakdown out;
  out.logits = ops::scale(ops::matmul(ev, ops::transpose(et)), 1.0 / sigma);
  out.l_v2t = diag_nll(out.logits);
  out.l_t2v = diag_nll(ops::transpose(out.logits));
  out.l_c = ops::add(out.l_v2t, out.l_t2v);
  return out;
}

}  // namespace mof
