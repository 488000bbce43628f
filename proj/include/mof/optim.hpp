#pragma once

#include <string>
#include <vector>

#include "mof/serialize.hpp"
#include "mof/tensor.hpp"

namespace mof {

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init_like(const std::vector<Tensor>& params);
};

struct AdamWState {
  AdamState adam;
  double weight_decay = 0.01;

  static AdamWState init_like(const std::vector<Tensor>& params);
};

/// Standard Adam with bias correction, in place on the param buffers.
/// Arithmetic runs in the parameter precision.
void adam_step(std::vector<Tensor> params, const std::vector<Tensor>& grads, AdamState& state,
               double lr);

/// Adam plus decoupled weight decay p <- p - lr*wd*p applied before the
/// Adam update.
void adamw_step(std::vector<Tensor> params, const std::vector<Tensor>& grads, AdamWState& state,
                double lr);

/// One unrolled plain descent step: returns p - lr * d(loss)/dp per param.
/// With create_graph=true (the default) the results stay differentiable
/// w.r.t. everything upstream of the loss; false severs that path, leaving
/// the gradients as constants.
std::vector<Tensor> sgd_step_differentiable(const std::vector<Tensor>& params, const Tensor& loss,
                                            double lr, bool create_graph = true);

// Checkpoint records for optimizer state: "<prefix>meta" holds the scalars,
// "<prefix>m.<name>" / "<prefix>v.<name>" the moments, aligned to `names`.
std::vector<io::NamedTensor> adam_records(const std::string& prefix, const AdamState& state,
                                          const std::vector<std::string>& names);
AdamState adam_from_records(const std::string& prefix,
                            const std::vector<io::NamedTensor>& records,
                            const std::vector<std::string>& names);
std::vector<io::NamedTensor> adamw_records(const std::string& prefix, const AdamWState& state,
                                           const std::vector<std::string>& names);
AdamWState adamw_from_records(const std::string& prefix,
                              const std::vector<io::NamedTensor>& records,
                              const std::vector<std::string>& names);

}  // namespace mof
