#pragma once

#include "mof/tensor.hpp"

namespace mof {

struct LossBreakdown {
  Tensor l_v2t;    // scalar
  Tensor l_t2v;    // scalar
  Tensor l_c;      // scalar, the sum of the two
  Tensor logits;   // [B x B]
};

/// Symmetric contrastive retrieval loss. logits[i][j] = ev_i . et_j / sigma;
/// l_v2t is the mean negative log softmax of the diagonal over rows, l_t2v
/// the same on the transposed logits, l_c their sum. Rows of both inputs
/// must be unit norm within 1e-4 (enforced, not re-normalized) and sigma
/// positive. Differentiable w.r.t. both inputs; B=1 gives exactly zero.
LossBreakdown contrastive_loss(const Tensor& ev, const Tensor& et, double sigma);

}  // namespace mof
